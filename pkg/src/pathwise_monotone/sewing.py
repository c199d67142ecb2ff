"""Germs on the time simplex, their norms, and the dyadic sewing operator.

A :class:`Germ` wraps a vectorized evaluator ``(s, t) -> values`` defined for
arbitrary real times ``s <= t``.  Sewing computes, for every grid cell, the
limit of partition sums of the germ over nested dyadic partitions of the cell,
and accumulates these cell increments from ``t0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .grid_paths import (
    P_INF,
    PathInterpolant,
    SampledPath,
    TimeGrid,
    dyadic_lags,
    seminorm_table,
)

DEFAULT_MAX_LEVEL = 14
DEFAULT_TOL = 1e-10
EVAL_BUDGET = 1 << 24
_CHUNK = 1 << 20
THETAS = (0.0, 0.25, 0.5, 0.75, 1.0)


class SewingError(ValueError):
    """Ineligible germ, bad grid, or failing evaluator."""


# ---------------------------------------------------------------------------
# germs


@dataclass(frozen=True)
class Germ:
    """Two-parameter map ``(s, t) -> R^d`` with declared regularity exponents.

    ``evaluator(s, t)`` receives equal-length float arrays and returns an array
    of shape ``(M,)`` or ``(M, d)``.  Degenerate pairs ``s == t`` are read as 0.
    """

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    target_dim: int = 1
    declared_alpha: float = 1.0
    declared_gamma: float = 2.0
    name: str = "germ"
    additive: bool = False  # A_{s,t} = f_t - f_s for some path f: the defect vanishes identically

    def __call__(self, s, t) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s, t = np.broadcast_arrays(s, t)
        try:
            out = np.asarray(self.evaluator(s, t), dtype=float)
        except Exception as exc:  # pragma: no cover - re-raised with context
            raise SewingError(
                f"germ {self.name!r} failed on pairs starting at s={s[:1]}, t={t[:1]}: {exc}"
            ) from exc
        if out.ndim == 1:
            out = out[:, None]
        if out.shape != (s.size, self.target_dim):
            raise SewingError(
                f"germ {self.name!r} returned shape {out.shape}, expected {(s.size, self.target_dim)}"
            )
        bad = ~np.all(np.isfinite(out), axis=1)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise SewingError(
                f"germ {self.name!r} is not finite at (s, t) = ({s[i]!r}, {t[i]!r})"
            )
        deg = s == t
        if np.any(deg):
            out = out.copy()
            out[deg] = 0.0
        return out

    def delta(self, s, u, t) -> np.ndarray:
        """Three-point defect ``A_{s,t} - A_{s,u} - A_{u,t}`` (exactly 0 for additive germs)."""
        if self.additive:
            s, u, t = np.broadcast_arrays(*(np.atleast_1d(np.asarray(x, dtype=float)) for x in (s, u, t)))
            return np.zeros((s.size, self.target_dim))
        return self(s, t) - self(s, u) - self(u, t)

    def _combine(self, other: "Germ", a: float, b: float) -> "Germ":
        if other.target_dim != self.target_dim:
            raise SewingError("cannot combine germs of different dimensions")
        f, g = self, other
        return Germ(
            lambda s, t: a * f(s, t) + b * g(s, t),
            self.target_dim,
            min(self.declared_alpha, other.declared_alpha),
            min(self.declared_gamma, other.declared_gamma),
            f"({a}*{f.name} + {b}*{g.name})",
            self.additive and other.additive,
        )

    def __add__(self, other: "Germ") -> "Germ":
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: "Germ") -> "Germ":
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c: float) -> "Germ":
        f = self
        c = float(c)
        return Germ(
            lambda s, t: c * f(s, t),
            self.target_dim,
            self.declared_alpha,
            self.declared_gamma,
            f"{c}*{f.name}",
            self.additive,
        )

    __rmul__ = __mul__


def increment_germ(path: SampledPath, alpha: float = 1.0) -> Germ:
    """Additive germ ``f_t - f_s`` of the piecewise-linear reading of ``path``."""
    interp = PathInterpolant(path)
    return Germ(
        lambda s, t: interp.value(t) - interp.value(s),
        path.space_dim,
        alpha,
        math.inf,
        "increment",
        True,
    )


def zero_germ(dim: int = 1) -> Germ:
    return Germ(lambda s, t: np.zeros((np.size(s), dim)), dim, 1.0, math.inf, "zero", True)


def power_germ(exponent: float, coef: float = 1.0) -> Germ:
    """Scalar germ ``coef * (t - s)^exponent``; it sews to 0 when ``exponent > 1``."""
    return Germ(
        lambda s, t: coef * np.abs(t - s) ** exponent,
        1,
        exponent,
        exponent,
        f"(t-s)^{exponent}",
    )


# ---------------------------------------------------------------------------
# germ norms


@dataclass
class GermNorms:
    taus: np.ndarray
    omega_table: np.ndarray
    delta_omega_table: np.ndarray
    norm_alpha: float
    norm_delta_gamma: float


def _lag_means(values: np.ndarray, dt: float, p: float, k: int, n: int) -> float:
    """``(dt sum_{j<n-k} |values_j|^p)^{1/p}``; max over all rows for p = inf."""
    nrm = np.sqrt(np.sum(values * values, axis=1))
    if p == P_INF:
        return float(nrm.max()) if nrm.size else 0.0
    nrm = nrm[: n - k]
    if nrm.size == 0:
        return 0.0
    peak = nrm.max()
    if peak == 0.0:
        return 0.0
    return float(peak * (dt * np.sum((nrm / peak) ** p)) ** (1.0 / p))


def _resolve_lags(n: int, lags) -> np.ndarray:
    if isinstance(lags, str):
        if lags == "all":
            return np.arange(1, n + 1)
        if lags == "dyadic":
            return dyadic_lags(n)
        if lags == "auto":
            return np.arange(1, n + 1) if n <= 512 else dyadic_lags(n)
        raise SewingError(f"unknown lag selection {lags!r}")
    return np.unique(np.asarray(lags, dtype=np.int64))


def germ_norms(
    germ: Germ,
    grid: TimeGrid,
    p: float,
    alpha: float,
    gamma: float,
    theta_samples: int = 5,
    lags="auto",
) -> GermNorms:
    """Discrete ``Omega_p(A, tau)``, ``Omega-bar_p(delta A, tau)`` and the scaled sups.

    ``tau`` runs over grid lags; the inner integral over start points is the
    left-endpoint Riemann sum on nodes.  ``theta`` runs over a uniform sample
    of ``[0, 1]`` with ``theta_samples`` points (odd, at least 3, so that
    0, 1/2 and 1 are included).
    """
    if p < 1:
        raise SewingError("integrability p must be >= 1")
    if theta_samples < 3 or theta_samples % 2 == 0:
        raise SewingError("theta_samples must be odd and >= 3 (0, 1/2, 1 included)")
    thetas = np.linspace(0.0, 1.0, theta_samples)
    n, dt = grid.n, grid.dt
    times = grid.times
    lag = _resolve_lags(n, lags)
    a_means = np.empty(lag.size)
    d_means = np.empty(lag.size)
    for i, k in enumerate(lag):
        s = times[: n - k + 1]
        t = times[k:]
        a_means[i] = _lag_means(germ(s, t), dt, p, k, n)
        best = 0.0
        for th in thetas:
            if th == 0.0 or th == 1.0:
                continue  # delta vanishes identically at the endpoints
            u = s + th * (t - s)
            best = max(best, _lag_means(germ.delta(s, u, t), dt, p, k, n))
        d_means[i] = best
    taus = lag * dt
    omega = np.maximum.accumulate(a_means)
    domega = np.maximum.accumulate(d_means)
    return GermNorms(
        taus=taus,
        omega_table=omega,
        delta_omega_table=domega,
        norm_alpha=float(np.max(a_means * taus ** (-alpha))),
        norm_delta_gamma=float(np.max(d_means * taus ** (-gamma))),
    )


# ---------------------------------------------------------------------------
# sewing


@dataclass
class SewingResult:
    sewn: SampledPath
    levels_used: int
    cauchy_gap: float
    remainder_norm: float
    converged: bool
    diagnostics: list = field(default_factory=list)
    cell_increments: np.ndarray | None = None

    def diagnostics_to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "gap", "remainder_estimate"])
            for level, gap, rem in self.diagnostics:
                w.writerow([level, repr(float(gap)), repr(float(rem))])
        return path


def _check_dyadic(n: int):
    if n < 1 or n & (n - 1):
        raise SewingError(f"sewing needs a power-of-two number of intervals, got n={n}")


def _level_sums(germ: Germ, starts: np.ndarray, width: float, level: int) -> np.ndarray:
    """For each cell ``[starts[k], starts[k] + width]`` the sum of the germ over
    its ``2^level`` equal sub-intervals."""
    m = 1 << level
    delta = width / m
    ncell = starts.size
    d = germ.target_dim
    out = np.zeros((ncell, d))
    cells_per_chunk = max(1, _CHUNK // (m * max(d, 1)))
    j = np.arange(m, dtype=float)
    for c0 in range(0, ncell, cells_per_chunk):
        base = starts[c0 : c0 + cells_per_chunk]
        s = (base[:, None] + j[None, :] * delta).ravel()
        t = (base[:, None] + (j[None, :] + 1.0) * delta).ravel()
        if level == 0:
            t = base + width
        vals = germ(s, t).reshape(base.size, m, d)
        out[c0 : c0 + base.size] = vals.sum(axis=1)
    return out


def partition_sum(germ: Germ, s: float, t: float, level: int) -> np.ndarray:
    """Sum of the germ over the uniform partition of ``[s, t]`` into ``2^level`` pieces."""
    if not t > s:
        raise SewingError("partition sum needs s < t")
    return _level_sums(germ, np.array([float(s)]), float(t - s), level)[0]


def _path_from_cells(grid: TimeGrid, cells: np.ndarray) -> SampledPath:
    vals = np.zeros((grid.n + 1, cells.shape[1]))
    np.cumsum(cells, axis=0, out=vals[1:])
    return SampledPath(grid, vals)


def _gap_seminorm(grid: TimeGrid, cells: np.ndarray, gamma: float, p: float) -> float:
    _, vals = seminorm_table(_path_from_cells(grid, cells), gamma, p, None, "dyadic")
    return float(vals.max())


def sew(
    germ: Germ,
    grid: TimeGrid,
    max_level: int = DEFAULT_MAX_LEVEL,
    tol: float = DEFAULT_TOL,
    p: float = P_INF,
    extrapolate: bool = True,
    eval_budget: int = EVAL_BUDGET,
    remainder_lags="auto",
) -> SewingResult:
    """Sew ``germ`` on the dyadic grid ``grid``.

    Level ``l`` sums the germ over ``2^l`` equal pieces of each grid cell.  With
    ``extrapolate`` the level sums are combined as ``2 S_l - S_{l-1}``, which
    removes the first-order partition error of smooth germs and leaves the
    limit unchanged.  Refinement stops once the ``B^gamma_{p,inf}`` estimator of
    the difference between consecutive levels, relative to ``1 +`` the same
    estimator of the current sewn path, is at most ``tol``.  Reaching
    ``max_level`` (or the evaluation budget) without that is reported via
    ``converged = False``.  ``remainder_lags=None`` skips the final remainder
    estimate (left as NaN), which saves germ evaluations on long node pairs.
    """
    if not germ.declared_gamma > 1:
        raise SewingError(
            f"sewing needs a defect exponent gamma > 1, germ declares {germ.declared_gamma}"
        )
    _check_dyadic(grid.n)
    gamma = germ.declared_gamma if math.isfinite(germ.declared_gamma) else 2.0
    starts = grid.times[:-1]
    dt = grid.dt
    s_prev = _level_sums(germ, starts, dt, 0)
    level0 = s_prev
    est_prev = s_prev
    diagnostics = []
    gap = math.inf
    converged = False
    used = 0
    level = 0
    max_per_cell = max(1, eval_budget // max(grid.n * germ.target_dim, 1))
    level_cap = min(int(max_level), int(math.floor(math.log2(max_per_cell))))
    for level in range(1, level_cap + 1):
        s_cur = _level_sums(germ, starts, dt, level)
        est = 2.0 * s_cur - s_prev if extrapolate else s_cur
        scale = 1.0 + _gap_seminorm(grid, est, gamma, p)
        gap = _gap_seminorm(grid, est - est_prev, gamma, p) / scale
        rem = float(np.max(np.sqrt(np.sum((est - level0) ** 2, axis=1)))) * dt ** (-gamma)
        diagnostics.append((level, gap, rem))
        s_prev, est_prev = s_cur, est
        if gap <= tol:
            converged = True
            used = level - 1
            break
        used = level
    if level_cap < 1:
        gap = math.inf
    sewn = _path_from_cells(grid, est_prev).with_meta(kind="sewn")
    result = SewingResult(
        sewn=sewn,
        levels_used=used,
        cauchy_gap=float(gap),
        remainder_norm=math.nan,
        converged=converged,
        diagnostics=diagnostics,
        cell_increments=est_prev,
    )
    if remainder_lags is not None:
        result.remainder_norm = remainder_norm(germ, result, p, gamma, remainder_lags)
    return result


def remainder_norm(
    germ: Germ, result: SewingResult, p: float, gamma: float, lags="auto"
) -> float:
    """Estimate of ``||R A||`` in ``B^gamma_{p,inf}`` with ``R_{s,t} = (IA_t - IA_s) - A_{s,t}``."""
    path = result.sewn
    grid = path.grid
    n, dt = grid.n, grid.dt
    times = grid.times
    vals = path.values
    best = 0.0
    for k in _resolve_lags(n, lags):
        r = (vals[k:] - vals[:-k]) - germ(times[: n - k + 1], times[k:])
        best = max(best, _lag_means(r, dt, p, k, n) * (k * dt) ** (-gamma))
    return float(best)


# ---------------------------------------------------------------------------
# stability of sewing


@dataclass
class ConvergenceReport:
    germ_distances: np.ndarray
    sewn_gaps: np.ndarray
    delta_bound: float
    slope: float
    expected_slope: float
    regime: str

    @property
    def slope_ok(self) -> bool:
        return self.regime == "exact" or abs(self.slope - self.expected_slope) <= 0.2

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.sewn_gaps) <= 1e-13))


def sewing_convergence(
    germ_seq: Sequence[Germ],
    germ_limit: Germ,
    grid: TimeGrid,
    p1: float,
    alpha: float,
    p2: float,
    gamma: float,
    sew_kwargs: dict | None = None,
) -> ConvergenceReport:
    """Tabulate ``||A^n - A||_{alpha,p1}`` against the sewn gap and fit a log-log slope.

    The sewn gap is the ``B^alpha_{min(p1,p2),inf}`` seminorm of ``IA - IA^n``;
    the reference slope is ``(gamma - 1) / (gamma - alpha)``.
    """
    if len(germ_seq) < 4:
        raise SewingError("sewing_convergence needs at least 4 germs")
    sew_kwargs = sew_kwargs or {}
    limit = sew(germ_limit, grid, **sew_kwargs).sewn
    pm = min(p1, p2)
    dists, gaps, deltas = [], [], []
    for g in germ_seq:
        diff = g - germ_limit
        dists.append(germ_norms(diff, grid, p1, alpha, gamma).norm_alpha)
        deltas.append(germ_norms(g, grid, p2, alpha, gamma).norm_delta_gamma)
        sewn = sew(g, grid, **sew_kwargs).sewn
        _, tab = seminorm_table(sewn - limit, alpha, pm, None, "all")
        gaps.append(float(tab.max()))
    dists = np.array(dists)
    gaps = np.array(gaps)
    expected = (gamma - 1.0) / (gamma - alpha)
    mask = (gaps > 1e-13) & (dists > 1e-13)
    if mask.sum() < 2:
        return ConvergenceReport(dists, gaps, float(max(deltas)), math.nan, expected, "exact")
    slope = float(np.polyfit(np.log(dists[mask]), np.log(gaps[mask]), 1)[0])
    return ConvergenceReport(dists, gaps, float(max(deltas)), slope, expected, "fitted")


@dataclass
class EquivalenceReport:
    agree: bool
    max_gap: float
    distance: float


def germ_equivalence(
    A: Germ,
    A2: Germ,
    grid: TimeGrid,
    beta: float,
    p1: float = P_INF,
    tol: float = 1e-6,
    sew_kwargs: dict | None = None,
) -> EquivalenceReport:
    """Check that two germs at finite ``B^beta_{p1,inf}`` distance (``beta > 1``) sew alike."""
    if not beta > 1:
        raise SewingError("equivalence criterion requires β>1")
    sew_kwargs = sew_kwargs or {}
    dist = germ_norms(A - A2, grid, p1, beta, beta).norm_alpha
    a = sew(A, grid, **sew_kwargs).sewn
    b = sew(A2, grid, **sew_kwargs).sewn
    gap = float(np.max(np.abs(a.values - b.values)))
    scale = 1.0 + float(np.max(np.abs(a.values)))
    return EquivalenceReport(
        agree=bool(math.isfinite(dist) and gap <= tol * scale), max_gap=gap, distance=dist
    )
