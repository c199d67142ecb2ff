"""Young pairings, abstract Young integrals, Bochner identification and chain rules.

Sampled paths enter germs through their piecewise-linear interpolants, so the
pairing germ ``(u_s, I_t - I_s)_H`` of two sampled paths sews to the exact
integral of the interpolants, i.e. the cellwise trapezoid sum
``sum_k ((u_k + u_{k+1}) / 2, I_{k+1} - I_k)_H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid_paths import (
    P_INF,
    BesovIndex,
    InnerProduct,
    PathInterpolant,
    SampledPath,
    besov_seminorm,
    seminorm_table,
)
from .sewing import Germ, SewingResult, sew


class YoungError(ValueError):
    """Ineligible exponents or mismatched inputs."""


def _ip_for(path: SampledPath, ip: InnerProduct | None) -> InnerProduct:
    if ip is None:
        return InnerProduct.euclidean(path.space_dim)
    if ip.dim != path.space_dim:
        raise YoungError(f"inner product has dimension {ip.dim}, path has {path.space_dim}")
    return ip


def _check_same_grid(*paths: SampledPath):
    g = paths[0].grid
    for q in paths[1:]:
        if q.grid != g:
            raise YoungError("paths live on different time grids")


def cumulative_trapezoid(values: np.ndarray, dt: float) -> np.ndarray:
    """``int_{t0}^{t_k}`` of the piecewise-linear interpolant, for every node ``k``."""
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    out[1:] = np.cumsum(0.5 * dt * (v[:-1] + v[1:]), axis=0)
    return out


# ---------------------------------------------------------------------------
# pairing germs and Young pairing


@dataclass(frozen=True)
class YoungPairInput:
    u: SampledPath
    I: SampledPath
    ip: InnerProduct | None = None
    alpha: float = 1.0
    p: float = P_INF
    beta: float = 1.0
    q: float = P_INF

    def __post_init__(self):
        _check_same_grid(self.u, self.I)
        if self.u.space_dim != self.I.space_dim:
            raise YoungError("integrand and integrator must share the state dimension")
        _ip_for(self.u, self.ip)

    @property
    def mu_inverse(self) -> float:
        return 1.0 / self.p + 1.0 / self.q

    @property
    def eligible(self) -> bool:
        return self.alpha + self.beta > max(1.0, self.mu_inverse)


def pairing_germ(
    u: SampledPath,
    I: SampledPath,
    ip: InnerProduct | None = None,
    average: bool = False,
    gamma: float = 2.0,
) -> Germ:
    """Scalar germ ``(u_s, I_t - I_s)_H`` (or with the time average of ``u`` on ``[s, t]``)."""
    _check_same_grid(u, I)
    ip = _ip_for(u, ip)
    ui, Ii = PathInterpolant(u), PathInterpolant(I)

    def ev(s, t):
        us = ui.average(s, np.where(t > s, t, s + 1.0)) if average else ui.value(s)
        if average:
            us = np.where((t > s)[:, None], us, ui.value(s))
        return ip.inner(us, Ii.value(t) - Ii.value(s))

    return Germ(ev, 1, 1.0, gamma, "avg-pairing" if average else "pairing")


def young_pairing(
    inp: YoungPairInput, full: bool = False, **sew_opts
) -> SampledPath | SewingResult:
    """Sew the pairing germ into the scalar path ``S_t(u, dI)`` with ``S_{t0} = 0``."""
    if not inp.eligible:
        raise YoungError(
            f"outside Young-eligibility: alpha + beta = {inp.alpha + inp.beta} must exceed "
            f"max(1, 1/p + 1/q) = {max(1.0, inp.mu_inverse)}"
        )
    germ = pairing_germ(inp.u, inp.I, inp.ip, gamma=inp.alpha + inp.beta)
    res = sew(germ, inp.u.grid, **sew_opts)
    res.sewn = res.sewn.with_meta(kind="young_pairing")
    return res if full else res.sewn


def pair(u: SampledPath, I: SampledPath, ip: InnerProduct | None = None, **sew_opts) -> SampledPath:
    """Young pairing with exponents taken as smooth; for callers that vouch for eligibility."""
    return young_pairing(YoungPairInput(u, I, ip), **sew_opts)


def young_stability_ratio(inp: YoungPairInput, **sew_opts) -> float:
    """Realized constant in ``[S]_{beta,q} <= C ||u||_inf [I]_{beta,q}``."""
    S = young_pairing(inp, **sew_opts)
    ip = _ip_for(inp.u, inp.ip)
    q = inp.q
    beta = min(inp.beta, 1.0)
    num = besov_seminorm(S, BesovIndex(beta, q))
    den = inp.u.sup_norm(ip) * besov_seminorm(inp.I, BesovIndex(beta, q), ip)
    return num / den if den > 0 else 0.0


# ---------------------------------------------------------------------------
# abstract Young integrals


@dataclass(frozen=True)
class NemytskiiMap:
    """Pointwise map ``sigma`` on H-vectors with growth ``C`` and Lipschitz ``L`` constants."""

    sigma: Callable[[np.ndarray], np.ndarray]
    C: float
    L: float
    name: str = "sigma"

    def __call__(self, u) -> np.ndarray:
        return np.asarray(self.sigma(np.asarray(u, dtype=float)), dtype=float)

    def spot_check(
        self, dim: int, ip: InnerProduct | None = None, samples: int = 200, seed: int = 0, scale: float = 3.0
    ) -> list:
        """Return witnesses violating the growth or Lipschitz bound (empty list if none)."""
        from .grid_paths import make_rng

        ip = ip or InnerProduct.euclidean(dim)
        rng = make_rng(seed)
        bad = []
        for _ in range(samples):
            u = scale * rng.standard_normal(dim)
            v = scale * rng.standard_normal(dim)
            su, sv = self(u), self(v)
            if ip.norm(su) > self.C * (1 + ip.norm(u)) * (1 + 1e-12) + 1e-12:
                bad.append(("growth", u))
            if ip.norm(su - sv) > self.L * ip.norm(u - v) * (1 + 1e-12) + 1e-12:
                bad.append(("lipschitz", u, v))
        return bad


@dataclass(frozen=True)
class MultiplierProduct:
    """Bilinear product ``(h, e) -> h . e`` of H-vectors with E-vectors."""

    product: Callable[[np.ndarray, np.ndarray], np.ndarray]
    C_mult: float
    e_dim: int
    name: str = "product"

    def __call__(self, h, e) -> np.ndarray:
        return np.asarray(self.product(np.asarray(h, float), np.asarray(e, float)), dtype=float)

    @classmethod
    def scalar(cls) -> "MultiplierProduct":
        """E = R acting by scalar multiplication."""
        return cls(lambda h, e: h * e[..., :1], 1.0, 1, "scalar")

    @classmethod
    def pointwise(cls, dim: int) -> "MultiplierProduct":
        """E = max-norm vectors acting by entrywise multiplication on weighted l2."""
        return cls(lambda h, e: h * e, 1.0, dim, "pointwise")

    def spot_check(self, h_dim: int, ip: InnerProduct | None = None, samples: int = 100, seed: int = 0) -> list:
        from .grid_paths import make_rng

        ip = ip or InnerProduct.euclidean(h_dim)
        rng = make_rng(seed)
        bad = []
        for _ in range(samples):
            h1, h2 = rng.standard_normal((2, h_dim))
            e1, e2 = rng.standard_normal((2, self.e_dim))
            a, b = rng.standard_normal(2)
            lhs = self(a * h1 + b * h2, e1)
            rhs = a * self(h1, e1) + b * self(h2, e1)
            if not np.allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max())):
                bad.append(("bilinear-h", h1, h2, e1))
            lhs = self(h1, a * e1 + b * e2)
            rhs = a * self(h1, e1) + b * self(h1, e2)
            if not np.allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max())):
                bad.append(("bilinear-e", h1, e1, e2))
            if ip.norm(self(h1, e1)) > self.C_mult * ip.norm(h1) * np.abs(e1).max() * (1 + 1e-12):
                bad.append(("bound", h1, e1))
        return bad


def abstract_young_germ(
    sigma: NemytskiiMap, u: SampledPath, X: SampledPath, prod: MultiplierProduct, gamma: float = 2.0
) -> Germ:
    """H-valued germ ``<sigma(u)>_{s,t} . (X_t - X_s)``."""
    _check_same_grid(u, X)
    if X.space_dim != prod.e_dim:
        raise YoungError(f"integrator has dimension {X.space_dim}, product expects {prod.e_dim}")
    su = SampledPath(u.grid, sigma(u.values))
    si, Xi = PathInterpolant(su), PathInterpolant(X)

    def ev(s, t):
        safe_t = np.where(t > s, t, s + 1.0)
        avg = np.where((t > s)[:, None], si.average(s, safe_t), si.value(s))
        return prod(avg, Xi.value(t) - Xi.value(s))

    return Germ(ev, u.space_dim, 1.0, gamma, "abstract-young")


def abstract_young(
    sigma: NemytskiiMap,
    u: SampledPath,
    X: SampledPath,
    prod: MultiplierProduct,
    q: float,
    gamma: float,
    full: bool = False,
    **sew_opts,
) -> SampledPath | SewingResult:
    """Sew ``<sigma(u)>_{s,t} . (X_t - X_s)`` into an H-valued path vanishing at ``t0``."""
    if not gamma + 1.0 / q > 1:
        raise YoungError("outside Young-eligibility: need gamma + 1/q > 1")
    germ = abstract_young_germ(sigma, u, X, prod, gamma=gamma + 1.0 / q)
    res = sew(germ, u.grid, **sew_opts)
    res.sewn = res.sewn.with_meta(kind="abstract_young")
    return res if full else res.sewn


def abstract_young_audit(
    sigma: NemytskiiMap,
    u: SampledPath,
    X: SampledPath,
    prod: MultiplierProduct,
    q: float,
    gamma: float,
    ip: InnerProduct | None = None,
    **sew_opts,
) -> dict:
    """Realized constant of ``[I(u)]_{gamma,q} <= C (C+L)[X]_{C^gamma}(1 + ||u||_inf + [u]_{1/2,2})``."""
    ip = _ip_for(u, ip)
    Iu = abstract_young(sigma, u, X, prod, q, gamma, **sew_opts)
    lhs = besov_seminorm(Iu, BesovIndex(min(gamma, 1.0), q), ip)
    from .grid_paths import holder_seminorm

    xh = holder_seminorm(X, min(gamma, 1.0))
    rhs = (sigma.C + sigma.L) * xh * (
        1.0 + u.sup_norm(ip) + besov_seminorm(u, BesovIndex(0.5, 2.0), ip)
    )
    return {"lhs": lhs, "rhs": rhs, "constant": lhs / rhs if rhs > 0 else 0.0}


# ---------------------------------------------------------------------------
# identification with Bochner integrals


def time_derivative(path: SampledPath) -> np.ndarray:
    """Centered differences inside, one-sided at the endpoints."""
    return np.gradient(path.values, path.grid.dt, axis=0, edge_order=1)


@dataclass
class BochnerReport:
    sewn: SampledPath
    quadrature: np.ndarray
    max_gap: float


def bochner_identify(
    u: SampledPath, I: SampledPath, ip: InnerProduct | None = None, **sew_opts
) -> BochnerReport:
    """Compare ``S_t(u, dI)`` with the trapezoid quadrature of ``(u_r, dI/dr)_H``."""
    ip = _ip_for(u, ip)
    S = pair(u, I, ip, **sew_opts)
    integrand = ip.inner(u.values, time_derivative(I))
    quad = cumulative_trapezoid(integrand, u.grid.dt)
    return BochnerReport(S, quad, float(np.max(np.abs(S.scalar - quad))))


# ---------------------------------------------------------------------------
# energy identity and chain rule


def _default_pairing(ip: InnerProduct):
    return lambda F, v: ip.inner(F, v)


def energy_identity_residual(
    X0,
    Y: SampledPath,
    I: SampledPath,
    X: SampledPath,
    ip: InnerProduct | None = None,
    pairing: Callable | None = None,
    **sew_opts,
) -> SampledPath:
    """``|X_t|^2 - |X0|^2 - 2 int <Y, X> ds - 2 S_t(X, dI)`` as a scalar path."""
    _check_same_grid(X, Y, I)
    ip = _ip_for(X, ip)
    pairing = pairing or _default_pairing(ip)
    X0 = np.asarray(X0, dtype=float)
    e = ip.norm(X.values) ** 2 - float(ip.norm(X0) ** 2)
    drift = cumulative_trapezoid(pairing(Y.values, X.values), X.grid.dt)
    S = pair(X, I, ip, **sew_opts).scalar
    return SampledPath(X.grid, e - 2.0 * drift - 2.0 * S, {"kind": "residual"})


def chain_rule_residual(
    F: Callable,
    dtF: Callable,
    dyF: Callable,
    y0: float,
    b: SampledPath,
    u: SampledPath,
    I: SampledPath,
    ip: InnerProduct | None = None,
    y: SampledPath | None = None,
    **sew_opts,
) -> SampledPath:
    """Residual of the chain rule for ``F(t, y_t)`` with ``y = y0 + int b + S(u, dI)``.

    ``F``, ``dtF`` and ``dyF`` take ``(t, y)`` arrays.  When ``y`` is supplied it
    is used as the scalar path instead of being reconstructed; its start value
    then replaces ``y0``.  The regularity conditions on ``dyF`` are only
    exercised on the range of ``y``.
    """
    _check_same_grid(b, u, I)
    ip = _ip_for(u, ip)
    grid = u.grid
    t = grid.times
    dt = grid.dt
    if y is None:
        yv = y0 + cumulative_trapezoid(b.scalar, dt) + pair(u, I, ip, **sew_opts).scalar
    else:
        _check_same_grid(y, u)
        yv = y.scalar
    Fy = np.asarray(F(t, yv), dtype=float)
    term_t = cumulative_trapezoid(np.asarray(dtF(t, yv), dtype=float), dt)
    dy = np.asarray(dyF(t, yv), dtype=float)
    term_b = cumulative_trapezoid(dy * b.scalar, dt)
    weighted = SampledPath(grid, dy[:, None] * u.values)
    term_I = pair(weighted, I, ip, **sew_opts).scalar
    res = Fy - Fy[0] - term_t - term_b - term_I
    return SampledPath(grid, res, {"kind": "residual"})


# ---------------------------------------------------------------------------
# exponentially weighted pairing


@dataclass
class WeightedPairingReport:
    direct: np.ndarray
    dual: np.ndarray
    sup_value: float
    rhs: float
    constant: float
    route_gap: float


def weighted_pairing_bound(
    u: SampledPath,
    I: SampledPath,
    lam: float,
    q: float,
    gamma: float,
    ip: InnerProduct | None = None,
    **sew_opts,
) -> WeightedPairingReport:
    """``W_t = int_0^t e^{lam (t-s)} (dI_s/ds, u_s) ds`` and its realized bound constant.

    ``direct`` integrates the piecewise-linear ``u`` against the cellwise slope of
    ``I`` with the exponential weight (Simpson per cell).  ``dual`` rewrites the
    integral as ``e^{lam t}(S_t(u, dJ) + lam int (J, u) ds)`` with
    ``J = e^{-lam s} I``, which only needs the Young pairing.  The realized
    constant is ``sup|W| / ((||u||_inf + [u]_{1/2,2}) [I]_{gamma,q})``.
    """
    if lam < 0:
        raise YoungError("weight rate must be nonnegative")
    _check_same_grid(u, I)
    ip = _ip_for(u, ip)
    grid = u.grid
    t = grid.times
    t_rel = t - grid.t0
    dt = grid.dt
    slope = np.diff(I.values, axis=0) / dt
    mid_u = 0.5 * (u.values[:-1] + u.values[1:])
    w = lambda r: np.exp(-lam * r)
    f0 = w(t_rel[:-1]) * ip.inner(u.values[:-1], slope)
    fm = w(t_rel[:-1] + 0.5 * dt) * ip.inner(mid_u, slope)
    f1 = w(t_rel[1:]) * ip.inner(u.values[1:], slope)
    cell = dt / 6.0 * (f0 + 4.0 * fm + f1)
    direct = np.concatenate([[0.0], np.cumsum(cell)]) * np.exp(lam * t_rel)

    J = SampledPath(grid, w(t_rel)[:, None] * I.values)
    SJ = pair(u, J, ip, **sew_opts).scalar
    JU = cumulative_trapezoid(ip.inner(J.values, u.values), dt)
    dual = np.exp(lam * t_rel) * (SJ + lam * JU)

    sup_value = float(np.max(np.abs(dual)))
    unorm = u.sup_norm(ip) + besov_seminorm(u, BesovIndex(0.5, 2.0), ip)
    _, itab = seminorm_table(I, min(gamma, 1.0), q, ip, "auto")
    rhs = unorm * float(itab.max())
    return WeightedPairingReport(
        direct=direct,
        dual=dual,
        sup_value=sup_value,
        rhs=rhs,
        constant=sup_value / rhs if rhs > 0 else 0.0,
        route_gap=float(np.max(np.abs(direct - dual))),
    )
