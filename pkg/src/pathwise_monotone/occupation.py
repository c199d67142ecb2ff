"""Histogram local times, the occupation-times formula and regularized drifts.

The scalar path ``w`` is read as piecewise constant on grid cells (value
``w_k`` on ``[t_k, t_{k+1})``), so its occupation measure on a cell is
``dt`` times a point mass at the bin holding ``w_k``.  Local time at a node
``t`` counts the nodes ``s < t`` in each bin; mass is therefore exactly the
elapsed time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .grid_paths import (
    BesovIndex,
    InnerProduct,
    PathInterpolant,
    SampledPath,
    TimeGrid,
    besov_seminorm,
    dyadic_lags,
    make_rng,
)
from .sewing import Germ, SewingResult, sew


class OccupationError(ValueError):
    """Path outside the bins, bad drift parameters or ineligible exponents."""


# ---------------------------------------------------------------------------
# bins and local times


@dataclass(frozen=True)
class SpatialBins:
    z_min: float
    z_max: float
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise OccupationError(f"need at least one bin, got m={self.m}")
        if not self.z_max > self.z_min:
            raise OccupationError("bins need z_min < z_max")
        object.__setattr__(self, "m", int(self.m))

    @property
    def width(self) -> float:
        return (self.z_max - self.z_min) / self.m

    @property
    def centers(self) -> np.ndarray:
        return self.z_min + self.width * (np.arange(self.m) + 0.5)

    @classmethod
    def covering(cls, w: SampledPath, m: int, margin: float = 0.05) -> "SpatialBins":
        lo, hi = float(w.scalar.min()), float(w.scalar.max())
        pad = margin * max(hi - lo, 1e-6) + 1e-12
        return cls(lo - pad, hi + pad, m)

    def index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        bad = (x < self.z_min) | (x > self.z_max) | ~np.isfinite(x)
        if np.any(bad):
            v = x[bad].flat[0]
            raise OccupationError(
                f"path value {v!r} lies outside the bin range [{self.z_min}, {self.z_max}]"
            )
        k = np.floor((x - self.z_min) / self.width).astype(np.int64)
        return np.clip(k, 0, self.m - 1)


class LocalTimeField:
    """Histogram local time ``L[t][k] = dt * #{nodes s < t with w_s in bin k} / width``.

    Only the bin index of every cell is stored; the dense table is built on
    demand by :attr:`values`.
    """

    def __init__(self, bins: SpatialBins, grid: TimeGrid, cell_bins: np.ndarray):
        self.bins = bins
        self.grid = grid
        self.cell_bins = np.asarray(cell_bins, dtype=np.int64)
        if self.cell_bins.shape != (grid.n,):
            raise OccupationError("one bin index per grid cell required")
        self._dense = None

    @property
    def values(self) -> np.ndarray:
        if self._dense is None:
            n, m = self.grid.n, self.bins.m
            dense = np.zeros((n + 1, m))
            dense[np.arange(1, n + 1), self.cell_bins] = self.grid.dt / self.bins.width
            np.cumsum(dense, axis=0, out=dense)
            dense.setflags(write=False)
            self._dense = dense
        return self._dense

    def at_node(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.grid.n:
            raise OccupationError(f"node {k} outside 0..{self.grid.n}")
        counts = np.bincount(self.cell_bins[:k], minlength=self.bins.m)
        return counts * (self.grid.dt / self.bins.width)

    def increment(self, s_node: int, t_node: int) -> np.ndarray:
        """``L_t - L_s`` at two nodes."""
        if not 0 <= s_node <= t_node <= self.grid.n:
            raise OccupationError("increment needs 0 <= s <= t <= n")
        counts = np.bincount(self.cell_bins[s_node:t_node], minlength=self.bins.m)
        return counts * (self.grid.dt / self.bins.width)

    def occupation(self, s_node: int, t_node: int) -> np.ndarray:
        """Time spent in each bin between two nodes (``width * (L_t - L_s)``)."""
        return self.increment(s_node, t_node) * self.bins.width

    def mass(self, k: int) -> float:
        return float(self.bins.width * self.at_node(k).sum())

    def to_csv(self, path, every: int = 1) -> Path:
        """Long-format ``t,z,value`` rows (every ``every``-th node)."""
        path = Path(path)
        z = self.bins.centers
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "z", "value"])
            times = self.grid.times
            for k in range(0, self.grid.n + 1, every):
                row = self.at_node(k)
                for zi, v in zip(z, row):
                    w.writerow([repr(float(times[k])), repr(float(zi)), repr(float(v))])
        return path


def local_time(w: SampledPath, bins: SpatialBins) -> LocalTimeField:
    if w.space_dim != 1:
        raise OccupationError("local time needs a scalar path")
    idx = bins.index(w.scalar)  # validates the full path, endpoint included
    return LocalTimeField(bins, w.grid, idx[:-1])


@dataclass
class OccupationReport:
    time_side: float
    space_side: float
    gap: float
    relative_gap: float


def occupation_formula_check(
    f: Callable, w: SampledPath, t_node: int, bins: SpatialBins
) -> OccupationReport:
    """Compare ``dt sum_{s<t} f(w_s)`` with ``width sum_k f(z_k) L_t[k]``."""
    L = local_time(w, bins)
    lhs = float(w.grid.dt * np.sum(f(w.scalar[:t_node])))
    rhs = float(bins.width * np.sum(f(bins.centers) * L.at_node(t_node)))
    gap = abs(lhs - rhs)
    return OccupationReport(lhs, rhs, gap, gap / abs(lhs) if lhs else math.inf)


# ---------------------------------------------------------------------------
# drifts


@dataclass(frozen=True)
class DriftSpec:
    """Scalar drift ``b`` with growth/Lipschitz constant ``C`` (``|b(x)| <= C(1+|x|)``,
    ``|b(x)-b(y)| <= C|x-y|``); ``eps`` records the mollification parameter."""

    b: Callable[[np.ndarray], np.ndarray]
    C: float
    eps: float | None = None
    name: str = "b"

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.b(np.asarray(x, dtype=float)), dtype=float)

    def spot_check(self, samples: int = 500, seed: int = 0, scale: float = 3.0) -> list:
        rng = make_rng(seed)
        x = scale * rng.standard_normal(samples)
        y = x + rng.standard_normal(samples) * rng.choice([1e-3, 1e-1, 1.0], samples)
        bx, by = self(x), self(y)
        bad = []
        grow = np.abs(bx) > self.C * (1 + np.abs(x)) * (1 + 1e-12)
        lip = np.abs(bx - by) > self.C * np.abs(x - y) * (1 + 1e-9) + 1e-15
        bad += [("growth", float(v)) for v in x[grow]]
        bad += [("lipschitz", float(a), float(c)) for a, c in zip(x[lip], y[lip])]
        return bad


def mollified_delta(eps: float) -> DriftSpec:
    """Gaussian kernel of width ``eps`` with ``C = sup|b'| + sup b``."""
    if not eps > 0:
        raise OccupationError("mollification must be positive")
    peak = 1.0 / math.sqrt(2.0 * math.pi * eps * eps)
    C = peak * (1.0 + math.exp(-0.5) / eps)
    return DriftSpec(lambda x: peak * np.exp(-0.5 * (x / eps) ** 2), C, eps, f"gauss({eps})")


def lipschitz_drift(b: Callable, C: float, name: str = "b") -> DriftSpec:
    return DriftSpec(b, C, None, name)


class ConvolvedMap:
    """``u -> width * sum_k b(u - z_k) (L_t[k] - L_s[k])`` tabulated on bin centers,
    linearly interpolated in between."""

    def __init__(self, centers: np.ndarray, table: np.ndarray):
        self.centers = centers
        self.table = table

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        lo, hi = self.centers[0], self.centers[-1]
        if np.any((u < lo - 1e-12) | (u > hi + 1e-12)):
            bad = u[(u < lo) | (u > hi)].flat[0]
            raise OccupationError(
                f"query {bad!r} outside the representable range [{lo}, {hi}]"
            )
        if self.centers.size == 1:
            return np.full_like(u, self.table[0])
        return np.interp(u, self.centers, self.table)


def convolve_local_time(
    drift: DriftSpec, L: LocalTimeField, s_node: int, t_node: int
) -> ConvolvedMap:
    if not s_node < t_node:
        raise OccupationError("convolution needs s < t")
    z = L.bins.centers
    occ = L.occupation(s_node, t_node)
    used = occ > 0
    table = drift(z[:, None] - z[None, used]) @ occ[used]
    return ConvolvedMap(z, table)


# ---------------------------------------------------------------------------
# regularized drift germ and integral


def regularized_drift_germ(
    drift: DriftSpec,
    w: SampledPath,
    u: SampledPath,
    bins: SpatialBins | None = None,
    m: int = 512,
    gamma: float = 2.0,
    average: bool = True,
) -> Germ:
    """Germ ``G_{s,t}(x) = width * sum_k b(<u(x)>_{s,t} - z_k) (L_t - L_s)[k]``.

    The convolution is evaluated directly at the averaged value of ``u`` in
    every spatial point.  With ``average=False`` the left value ``u_s`` is used
    instead of the time average.
    """
    if u.grid != w.grid:
        raise OccupationError("u and w must share the time grid")
    bins = bins or SpatialBins.covering(w, m)
    L = local_time(w, bins)
    grid = w.grid
    t0, dt, n = grid.t0, grid.dt, grid.n
    centers = bins.centers
    cell_z = centers[L.cell_bins]
    ui = PathInterpolant(u)
    d = u.space_dim
    # cumulative occupation per bin at nodes, built lazily for long pairs
    cache = {}

    def occ_at(t):
        if "nodes" not in cache:
            cache["nodes"] = L.values * bins.width
        dense = cache["nodes"]
        x = (t - t0) / dt
        k = np.clip(np.floor(x).astype(np.int64), 0, n - 1)
        r = (x - k) * dt
        out = dense[k].copy()
        out[np.arange(k.size), L.cell_bins[k]] += r
        return out

    def ev(s, t):
        if average:
            safe_t = np.where(t > s, t, s + dt)
            ubar = np.where((t > s)[:, None], ui.average(s, safe_t), ui.value(s))
        else:
            ubar = ui.value(s)
        ks = np.clip(np.floor((s - t0) / dt + 1e-9).astype(np.int64), 0, n - 1)
        kt = np.clip(np.ceil((t - t0) / dt - 1e-9).astype(np.int64), 1, n)
        out = np.empty((s.size, d))
        short = kt - ks <= 1
        if np.any(short):
            out[short] = (t - s)[short, None] * drift(ubar[short] - cell_z[ks[short], None])
        long_ = np.flatnonzero(~short)
        chunk = max(1, (1 << 22) // (d * bins.m))
        for c0 in range(0, long_.size, chunk):
            sel = long_[c0 : c0 + chunk]
            occ = occ_at(t[sel]) - occ_at(s[sel])  # (M, m)
            vals = drift(ubar[sel][:, :, None] - centers[None, None, :])
            out[sel] = np.einsum("xdm,xm->xd", vals, occ)
        return out

    return Germ(ev, d, 1.0, gamma, "reg-drift")


def direct_drift_sum(drift: DriftSpec, w: SampledPath, u: SampledPath) -> SampledPath:
    """Left-point Bochner sum ``dt sum_{r<t} b(u_r - w_r)`` in every spatial point."""
    vals = drift(u.values[:-1] - w.values[:-1, :1]) * w.grid.dt
    out = np.zeros_like(u.values)
    np.cumsum(vals, axis=0, out=out[1:])
    return SampledPath(u.grid, out, {"kind": "direct_drift"})


def regularized_drift_integral(
    drift: DriftSpec,
    w: SampledPath,
    u: SampledPath,
    q: float,
    gamma: float,
    bins: SpatialBins | None = None,
    m: int = 512,
    full: bool = False,
    **sew_opts,
) -> SampledPath | SewingResult:
    """Sew the regularized-drift germ into an H-valued path vanishing at ``t0``."""
    if not gamma + 1.0 / q > 1:
        raise OccupationError("outside Young-eligibility: need gamma + 1/q > 1")
    germ = regularized_drift_germ(drift, w, u, bins, m, gamma=gamma + 1.0 / q)
    sew_opts.setdefault("remainder_lags", None)
    sew_opts.setdefault("tol", 1e-9)
    sew_opts.setdefault("max_level", 8)
    res = sew(germ, u.grid, **sew_opts)
    res.sewn = res.sewn.with_meta(kind="regularized_drift")
    return res if full else res.sewn


def convolution_regularity(
    drift: DriftSpec,
    w: SampledPath,
    gamma: float,
    bins: SpatialBins | None = None,
    m: int = 512,
    u_points: int = 65,
    u_range: tuple | None = None,
) -> float:
    """Estimate ``||b * L^w||_{C^gamma_t C^{0,1}_u}`` over dyadic lags.

    The convolution at time ``t`` is tabulated on a uniform ``u`` grid via the
    cumulative sum ``dt sum_{r<t} b(u - z(w_r))``; the ``C^{0,1}`` norm is the
    sup plus the largest difference quotient on that grid.
    """
    bins = bins or SpatialBins.covering(w, m)
    L = local_time(w, bins)
    lo, hi = u_range or (bins.z_min, bins.z_max)
    ug = np.linspace(lo, hi, u_points)
    cz = bins.centers[L.cell_bins]
    grid = w.grid
    phi = np.zeros((grid.n + 1, u_points))
    np.cumsum(grid.dt * drift(ug[None, :] - cz[:, None]), axis=0, out=phi[1:])
    du = ug[1] - ug[0]
    best = 0.0
    for k in dyadic_lags(grid.n):
        D = phi[k:] - phi[:-k]
        lip = np.abs(np.diff(D, axis=1)).max(axis=1) / du
        val = np.max(np.abs(D).max(axis=1) + lip)
        best = max(best, float(val) / (k * grid.dt) ** gamma)
    return best


def regularized_drift_audit(
    drift: DriftSpec,
    w: SampledPath,
    u: SampledPath,
    q: float,
    gamma: float,
    ip: InnerProduct | None = None,
    bins: SpatialBins | None = None,
    m: int = 512,
    integral: SampledPath | None = None,
) -> dict:
    """Realized constant of ``[I(u)]_{gamma,q} <= C ||b*L||_{C^gamma C^{0,1}} (1 + ||u||_inf + [u]_{1/2,2})``."""
    Iu = integral if integral is not None else regularized_drift_integral(drift, w, u, q, gamma, bins, m)
    lhs = besov_seminorm(Iu, BesovIndex(min(gamma, 1.0), q), ip)
    umin, umax = float(u.values.min()), float(u.values.max())
    pad = 1e-3 + 1e-3 * (umax - umin)
    reg = convolution_regularity(drift, w, min(gamma, 1.0), bins, m, u_range=(umin - pad, umax + pad))
    unorm = 1.0 + u.sup_norm(ip) + besov_seminorm(u, BesovIndex(0.5, 2.0), ip)
    rhs = reg * unorm
    return {"lhs": lhs, "regularity": reg, "rhs": rhs, "constant": lhs / rhs if rhs > 0 else 0.0}
