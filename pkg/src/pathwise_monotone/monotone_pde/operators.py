"""Discrete Gelfand triples on ``(0, 1)`` with Dirichlet boundary and their audits.

Space has ``d`` interior nodes ``x_i = i dx`` with ``dx = 1 / (d + 1)``.
Operators return coordinate vectors ``F`` whose action on ``v`` is
``<F, v> = (F, v)_H``; for the p-Laplace triple ``H`` is ``L^2`` with mass
``dx``, for the porous-medium triple ``H`` is the inverse-stiffness product
``dx * u . K^{-1} v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.optimize

from ..grid_paths import InnerProduct, make_rng


def _zero_time(t) -> float:
    return 0.0


def _zero_eta(u) -> float:
    return 0.0


@dataclass(frozen=True)
class AssumptionConstants:
    """Constants of the monotonicity, coercivity and boundedness inequalities.

    ``c1 = None`` declares that no coercivity claim is made (audit skipped).
    """

    alpha: float
    c1: float | None
    c2: float = 0.0
    f: Callable[[float], float] = _zero_time
    c3: float = 0.0
    g: Callable[[float], float] = _zero_time
    h: Callable[[float], float] = _zero_time
    eta: Callable[[np.ndarray], float] = _zero_eta
    strictly_monotone: bool = False

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"coercivity exponent must exceed 1, got {self.alpha}")
        if self.c1 is not None and not self.c1 > 0:
            raise ValueError(f"c1 must be positive, got {self.c1}")
        if self.c3 < 0:
            raise ValueError("c3 must be nonnegative")


def stiffness_matrix(d: int) -> np.ndarray:
    """Dirichlet ``-Laplacian`` ``tridiag(-1, 2, -1) / dx^2``."""
    dx = 1.0 / (d + 1)
    K = (np.diag(np.full(d, 2.0)) - np.diag(np.ones(d - 1), 1) - np.diag(np.ones(d - 1), -1)) / dx**2
    return K


def _stiffness_banded(d: int) -> np.ndarray:
    dx = 1.0 / (d + 1)
    ab = np.zeros((3, d))
    ab[0, 1:] = -1.0 / dx**2
    ab[1, :] = 2.0 / dx**2
    ab[2, :-1] = -1.0 / dx**2
    return ab


@dataclass
class GelfandDiscretization:
    """Spatial mesh, ``H`` product, ``V`` norm, duality, operator and constants.

    ``jacobian(t, u)`` returns the tridiagonal Jacobian of ``A`` in the banded
    layout of ``scipy.linalg.solve_banded`` with ``(l, u) = (1, 1)``.
    """

    name: str
    d: int
    ip: InnerProduct
    operator: Callable[[float, np.ndarray], np.ndarray]
    v_norm: Callable[[np.ndarray], float]
    duality: Callable[[np.ndarray, np.ndarray], float]
    dual_norm: Callable[[np.ndarray], float]
    constants: AssumptionConstants
    jacobian: Callable[[float, np.ndarray], np.ndarray] | None = None
    extra_audits: Callable | None = None
    params: dict = field(default_factory=dict)

    @property
    def dx(self) -> float:
        return 1.0 / (self.d + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.dx * np.arange(1, self.d + 1)

    def apply(self, t: float, u) -> np.ndarray:
        return self.operator(t, np.asarray(u, dtype=float))

    def first_eigenvector(self) -> np.ndarray:
        """Dirichlet eigenvector ``sqrt(2) sin(pi x)`` (unit norm in weighted l2)."""
        return math.sqrt(2.0) * np.sin(math.pi * self.nodes)

    def first_eigenvalue(self) -> float:
        """Eigenvalue of the discrete ``-Laplacian`` for :meth:`first_eigenvector`."""
        return 4.0 / self.dx**2 * math.sin(math.pi * self.dx / 2.0) ** 2


# ---------------------------------------------------------------------------
# p-Laplace


def _gradients(u: np.ndarray, dx: float) -> np.ndarray:
    """Forward differences including both boundary zeros (``d + 1`` values)."""
    pad = np.zeros(u.shape[:-1] + (u.shape[-1] + 2,))
    pad[..., 1:-1] = u
    return np.diff(pad, axis=-1) / dx


def _phi(g: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 0, a ** (p - 2.0) * g, 0.0)
    return out


def p_laplace_apply(t: float, u, p_exp: float, dx: float | None = None) -> np.ndarray:
    """Divergence form ``(phi(g_i) - phi(g_{i-1})) / dx`` with ``phi(g) = |g|^{p-2} g``."""
    u = np.asarray(u, dtype=float)
    if not p_exp > 1:
        raise ValueError("p-Laplace exponent must exceed 1")
    if dx is None:
        dx = 1.0 / (u.shape[-1] + 1)
    flux = _phi(_gradients(u, dx), p_exp)
    return np.diff(flux, axis=-1) / dx


def p_laplace_flux_pairing(u, v, p_exp: float, dx: float) -> float:
    """Flux form ``-sum phi(grad u) grad v dx`` of the duality pairing."""
    return float(-np.sum(_phi(_gradients(u, dx), p_exp) * _gradients(v, dx)) * dx)


def _sobolev_dual_norm(F: np.ndarray, p: float, dx: float) -> float:
    """``sup <F, v> / ||grad v||_{L^p}`` via the flux with minimal ``l^{p'}`` norm."""
    pc = p / (p - 1.0)
    psi = np.concatenate([[0.0], np.cumsum(F) * dx])

    def cost(c):
        return float(np.sum(np.abs(psi + c) ** pc) * dx)

    if not np.any(psi):
        return 0.0
    lo, hi = float(-psi.max()), float(-psi.min())
    res = scipy.optimize.minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * (1 + abs(hi - lo))})
    best = min(res.fun, cost(lo), cost(hi), cost(0.0))
    return best ** (1.0 / pc)


def p_laplace_triple(d: int, p_exp: float) -> GelfandDiscretization:
    if not p_exp > 1:
        raise ValueError("p-Laplace exponent must exceed 1")
    dx = 1.0 / (d + 1)
    ip = InnerProduct.weighted(np.full(d, dx))

    def op(t, u):
        return p_laplace_apply(t, u, p_exp, dx)

    def vnorm(u):
        return float((np.sum(np.abs(_gradients(np.asarray(u, float), dx)) ** p_exp) * dx) ** (1.0 / p_exp))

    def duality(F, v):
        return float(dx * np.dot(F, v))

    def jac(t, u):
        g = _gradients(np.asarray(u, float), dx)
        a = np.abs(g)
        floor = 1e-12 * (1.0 + a.max())
        dphi = (p_exp - 1.0) * np.maximum(a, floor) ** (p_exp - 2.0) if p_exp < 2 else (p_exp - 1.0) * a ** (p_exp - 2.0)
        ab = np.zeros((3, d))
        ab[0, 1:] = dphi[1:-1] / dx**2
        ab[1, :] = -(dphi[1:] + dphi[:-1]) / dx**2
        ab[2, :-1] = dphi[1:-1] / dx**2
        return ab

    consts = AssumptionConstants(alpha=p_exp, c1=1.0, c2=0.0, c3=1.0, strictly_monotone=True)
    return GelfandDiscretization(
        name=f"p_laplace(p={p_exp})",
        d=d,
        ip=ip,
        operator=op,
        v_norm=vnorm,
        duality=duality,
        dual_norm=lambda F: _sobolev_dual_norm(np.asarray(F, float), p_exp, dx),
        constants=consts,
        jacobian=jac,
        params={"kind": "p_laplace", "p": p_exp},
    )


# ---------------------------------------------------------------------------
# porous medium


@dataclass(frozen=True)
class PsiSpec:
    """Nonlinearity ``Psi`` with ``s Psi(s) >= a|s|^p - c`` and ``|Psi(s)| <= c4 + c3|s|^{p-1}``."""

    psi: Callable[[np.ndarray], np.ndarray]
    p: float
    a: float
    c: float
    c3: float
    c4: float
    name: str = "psi"

    def __call__(self, s) -> np.ndarray:
        return np.asarray(self.psi(np.asarray(s, dtype=float)), dtype=float)

    def derivative(self, s) -> np.ndarray:
        """Central finite difference."""
        s = np.asarray(s, dtype=float)
        h = 1e-6 * (1.0 + np.abs(s))
        return (self(s + h) - self(s - h)) / (2.0 * h)


def power_psi(m: float) -> PsiSpec:
    """``Psi(s) = s |s|^{m-1}``: coercive with ``a = 1, c = 0, p = m + 1``."""
    if not m >= 1:
        raise ValueError("porous-medium exponent must be >= 1")
    return PsiSpec(lambda s: s * np.abs(s) ** (m - 1.0), m + 1.0, 1.0, 0.0, 1.0, 0.0, f"s|s|^{m - 1:g}")


def cubic_psi() -> PsiSpec:
    return PsiSpec(lambda s: s**3, 4.0, 1.0, 0.0, 1.0, 0.0, "s^3")


def identity_psi() -> PsiSpec:
    return power_psi(1.0)


def porous_medium_apply(t: float, u, psi: PsiSpec, d: int | None = None) -> np.ndarray:
    """``Delta_h Psi(u) = -K Psi(u)`` with Dirichlet stiffness ``K``."""
    u = np.asarray(u, dtype=float)
    d = d or u.shape[-1]
    dx = 1.0 / (d + 1)
    y = psi(u)
    pad = np.zeros(y.shape[:-1] + (d + 2,))
    pad[..., 1:-1] = y
    return (pad[..., 2:] - 2.0 * pad[..., 1:-1] + pad[..., :-2]) / dx**2


def porous_medium_triple(d: int, psi: PsiSpec) -> GelfandDiscretization:
    dx = 1.0 / (d + 1)
    K = stiffness_matrix(d)
    ip = InnerProduct.inverse_stiffness(K / dx)
    p = psi.p
    pc = p / (p - 1.0)

    def op(t, u):
        return porous_medium_apply(t, u, psi, d)

    def vnorm(u):
        return float((np.sum(np.abs(u) ** p) * dx) ** (1.0 / p))

    def kinv(F):
        return ip.riesz(np.asarray(F, float)) * 1.0  # (K/dx)^{-1} F

    def duality(F, v):
        # <F, v> = dx (K^{-1} F) . v = (K/dx)^{-1} F . v
        return float(np.dot(kinv(F), v))

    def dual_norm(F):
        y = kinv(F) / dx  # K^{-1} F
        return float((np.sum(np.abs(y) ** pc) * dx) ** (1.0 / pc))

    def jac(t, u):
        dpsi = psi.derivative(u)
        ab = -_stiffness_banded(d)
        # (-K diag(dpsi))_{ij} = -K_ij dpsi_j
        ab[0, 1:] *= dpsi[1:]
        ab[1, :] *= dpsi
        ab[2, :-1] *= dpsi[:-1]
        return ab

    def psi_audits(rng, samples, slack):
        s = np.concatenate([rng.standard_normal(samples) * sc for sc in (0.1, 1.0, 10.0)])
        r = rng.standard_normal(s.size) * 3.0
        out = {}
        mono = (psi(s) - psi(r)) * (s - r)
        out["psi2_monotone"] = [(float(a), float(b)) for a, b, m in zip(s, r, mono) if m < -slack * (1 + abs(m))]
        lhs = s * psi(s)
        rhs = psi.a * np.abs(s) ** p - psi.c
        out["psi3_coercive"] = [float(a) for a, l, rr in zip(s, lhs, rhs) if l < rr - slack * (1 + abs(rr))]
        bnd = np.abs(psi(s))
        cap = psi.c4 + psi.c3 * np.abs(s) ** (p - 1.0)
        out["psi4_growth"] = [float(a) for a, b, c in zip(s, bnd, cap) if b > c + slack * (1 + c)]
        lam = np.linspace(-2, 2, 257)
        jumps = [np.abs(np.diff(psi(lam[:: 2**j]))).max() for j in (2, 1, 0)]
        ok = all(j2 <= 0.75 * j1 + slack for j1, j2 in zip(jumps, jumps[1:]))
        out["psi1_continuous"] = [] if ok else [tuple(jumps)]
        return out

    consts = AssumptionConstants(
        alpha=p,
        c1=psi.a,
        c2=0.0,
        f=lambda t, _c=psi.c: _c,
        c3=psi.c3,
        g=lambda t, _c=psi.c4: _c,
        strictly_monotone=True,
    )
    return GelfandDiscretization(
        name=f"porous_medium({psi.name})",
        d=d,
        ip=ip,
        operator=op,
        v_norm=vnorm,
        duality=duality,
        dual_norm=dual_norm,
        constants=consts,
        jacobian=jac,
        extra_audits=psi_audits,
        params={"kind": "porous_medium", "psi": psi.name, "p": p},
    )


def zero_triple(d: int) -> GelfandDiscretization:
    dx = 1.0 / (d + 1)
    ip = InnerProduct.weighted(np.full(d, dx))
    return GelfandDiscretization(
        name="zero",
        d=d,
        ip=ip,
        operator=lambda t, u: np.zeros_like(np.asarray(u, dtype=float)),
        v_norm=lambda u: float(np.sqrt(np.sum(np.asarray(u) ** 2) * dx)),
        duality=lambda F, v: float(dx * np.dot(F, v)),
        dual_norm=lambda F: float(np.sqrt(np.sum(np.asarray(F) ** 2) * dx)),
        constants=AssumptionConstants(alpha=2.0, c1=None, strictly_monotone=True),
        jacobian=lambda t, u: np.zeros((3, d)),
        params={"kind": "zero"},
    )


# ---------------------------------------------------------------------------
# audits


@dataclass
class AuditReport:
    samples: int
    checked: dict
    violations: dict

    @property
    def total_violations(self) -> int:
        return sum(len(v) for v in self.violations.values())

    @property
    def passed(self) -> bool:
        return self.total_violations == 0

    def summary(self) -> dict:
        return {
            "samples": self.samples,
            "checked": self.checked,
            "violations": {k: len(v) for k, v in self.violations.items()},
            "passed": self.passed,
        }


def _hemicontinuity_ok(triple, t, u, v, w, slack) -> bool:
    lam = np.linspace(-1.0, 1.0, 257)
    vals = np.array([triple.duality(triple.apply(t, u + l * v), w) for l in lam])
    scale = 1.0 + np.abs(vals).max()
    jumps = [np.abs(np.diff(vals[:: 2**j])).max() / scale for j in (2, 1, 0)]
    return all(j2 <= 0.75 * j1 + slack for j1, j2 in zip(jumps, jumps[1:]))


def audit_assumptions(
    triple: GelfandDiscretization,
    sample_count: int = 200,
    seed: int = 0,
    slack: float = 1e-10,
    T: float = 1.0,
) -> AuditReport:
    """Check hemicontinuity, (local) monotonicity, coercivity and boundedness on
    random samples; slack is relative to the size of the compared terms."""
    rng = make_rng(seed)
    c = triple.constants
    d = triple.d
    H = triple.ip
    checked = {"H1": 0, "H2": 0, "H3": 0, "H4": 0, "gelfand": 0}
    viol = {k: [] for k in checked}
    for i in range(sample_count):
        scale = (0.1, 1.0, 3.0)[i % 3]
        u, v, w = scale * rng.standard_normal((3, d))
        t = float(rng.uniform(0.0, T))
        Au, Av = triple.apply(t, u), triple.apply(t, v)

        if i < max(10, sample_count // 10):
            checked["H1"] += 1
            if not _hemicontinuity_ok(triple, t, u, v, w, slack):
                viol["H1"].append({"t": t, "u": u, "v": v, "w": w})

        checked["H2"] += 1
        lhs = 2.0 * triple.duality(Au - Av, u - v)
        if c.strictly_monotone:
            rhs = 0.0
        else:
            rhs = (c.h(t) + c.eta(u)) * float(H.norm(u - v)) ** 2
        mag = abs(2.0 * triple.duality(Au, u - v)) + abs(2.0 * triple.duality(Av, u - v)) + abs(rhs)
        if lhs > rhs + slack * (1.0 + mag):
            viol["H2"].append({"t": t, "u": u, "v": v, "excess": lhs - rhs})

        if c.c1 is not None:
            checked["H3"] += 1
            lhs = triple.duality(Au, u)
            vn = triple.v_norm(u) ** c.alpha
            rhs = -c.c1 * vn + c.c2 * float(H.norm(u)) ** 2 + c.f(t)
            if lhs > rhs + slack * (1.0 + abs(lhs) + vn):
                viol["H3"].append({"t": t, "u": u, "excess": lhs - rhs})

        checked["H4"] += 1
        lhs = triple.dual_norm(Au)
        rhs = c.g(t) + c.c3 * triple.v_norm(u) ** (c.alpha - 1.0)
        if lhs > rhs + slack * (1.0 + abs(rhs)):
            viol["H4"].append({"t": t, "u": u, "excess": lhs - rhs})

        checked["gelfand"] += 1
        F = rng.standard_normal(d)
        a = triple.duality(F, v)
        b = float(H.inner(F, v))
        if abs(a - b) > 1e-10 * (1.0 + abs(a)):
            viol["gelfand"].append({"F": F, "v": v, "gap": a - b})

    if triple.extra_audits is not None:
        for k, v in triple.extra_audits(rng, sample_count, slack).items():
            checked[k] = sample_count
            viol[k] = v
    return AuditReport(sample_count, checked, viol)
