"""Driver operators ``I(u)`` and their time-local diagnostics.

Four variants are supported:

* ``Additive(Z)``: ``I_t(u) = Z_t - Z_{t0}``.
* ``LinearMultiplicative(beta)``: ``I_t(u) = int u d beta`` (scalar ``beta``).
* ``AbstractYoung(sigma, X, product)``: ``I_t(u) = int sigma(u) dX``.
* ``RegularizedDrift(drift, w)``: ``I_t(u) = int b(u_s - w_s) ds`` read through
  the local time of ``w``.

Inside the solver the increment over a step only uses the history up to the
step start (left-point evaluation); when the history covers the whole window
the increment is obtained by sewing on that window instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..grid_paths import (
    BesovIndex,
    InnerProduct,
    SampledPath,
    TimeGrid,
    besov_seminorm,
    lp_norm,
    mollify_path,
    seminorm_table,
)
from ..occupation import (
    DriftSpec,
    SpatialBins,
    regularized_drift_germ,
)
from ..sewing import Germ, sew
from ..young import MultiplierProduct, NemytskiiMap, abstract_young_germ


class DriverError(ValueError):
    """Inadmissible exponents or inconsistent driver data."""


@dataclass(frozen=True)
class Additive:
    Z: SampledPath


@dataclass(frozen=True)
class LinearMultiplicative:
    beta: SampledPath


@dataclass(frozen=True)
class AbstractYoung:
    sigma: NemytskiiMap
    X: SampledPath
    product: MultiplierProduct


@dataclass(frozen=True)
class RegularizedDrift:
    drift: DriftSpec
    w: SampledPath
    bins: SpatialBins | None = None
    m: int = 512


@dataclass(frozen=True)
class DriverOperator:
    """A driver variant with its Young exponents and approximant data."""

    variant: object
    gamma: float = 0.8
    q: float = 4.0
    approximant_level: int | None = None
    h5_data: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.variant, (Additive, LinearMultiplicative, AbstractYoung, RegularizedDrift)):
            raise DriverError(f"unknown driver variant {type(self.variant).__name__}")
        if isinstance(self.variant, LinearMultiplicative) and self.variant.beta.space_dim != 1:
            raise DriverError("linear multiplicative driver needs a scalar beta")
        if isinstance(self.variant, RegularizedDrift) and self.variant.w.space_dim != 1:
            raise DriverError("regularized drift needs a scalar path w")

    @property
    def kind(self) -> str:
        return type(self.variant).__name__

    @property
    def admissible(self) -> bool:
        return self.gamma > 0.5 + 1.0 / self.q

    def require_admissible(self):
        if not self.admissible:
            raise DriverError(
                f"driver exponents gamma={self.gamma}, q={self.q} violate gamma > 1/2 + 1/q"
            )

    @property
    def grid(self) -> TimeGrid:
        v = self.variant
        if isinstance(v, Additive):
            return v.Z.grid
        if isinstance(v, LinearMultiplicative):
            return v.beta.grid
        if isinstance(v, AbstractYoung):
            return v.X.grid
        return v.w.grid

    def approximant(self, level: int | None = None) -> "DriverOperator":
        """Driver with the rough path replaced by its level-``level`` mollification."""
        level = self.approximant_level if level is None else level
        if level is None:
            return self
        v = self.variant
        if isinstance(v, Additive):
            nv = Additive(mollify_path(v.Z, level))
        elif isinstance(v, LinearMultiplicative):
            nv = LinearMultiplicative(mollify_path(v.beta, level))
        elif isinstance(v, AbstractYoung):
            nv = AbstractYoung(v.sigma, mollify_path(v.X, level), v.product)
        else:
            nv = v  # the drift family is already Lipschitz
        return replace(self, variant=nv, approximant_level=level)


def additive_driver(Z: SampledPath, gamma: float = 0.8, q: float = 4.0) -> DriverOperator:
    return DriverOperator(Additive(Z), gamma, q)


def zero_driver(grid: TimeGrid, d: int) -> DriverOperator:
    return DriverOperator(Additive(SampledPath(grid, np.zeros((grid.n + 1, d)))), 1.0, math.inf)


# ---------------------------------------------------------------------------
# germs and increments


def _values(history) -> np.ndarray:
    return history.values if isinstance(history, SampledPath) else np.atleast_2d(np.asarray(history, float))


def driver_germ(driver: DriverOperator, u: SampledPath) -> Germ:
    v = driver.variant
    gam = driver.gamma + 1.0 / driver.q
    if isinstance(v, Additive):
        from ..sewing import increment_germ

        return increment_germ(v.Z)
    if isinstance(v, LinearMultiplicative):
        ident = NemytskiiMap(lambda x: x, 1.0, 1.0, "id")
        return abstract_young_germ(ident, u, v.beta, MultiplierProduct.scalar(), gamma=gam)
    if isinstance(v, AbstractYoung):
        return abstract_young_germ(v.sigma, u, v.X, v.product, gamma=gam)
    return regularized_drift_germ(v.drift, v.w, u, v.bins, v.m, gamma=gam)


def _dyadic_blocks(s: int, t: int):
    """Split ``[s, t)`` into blocks whose lengths are powers of two."""
    out = []
    while s < t:
        size = 1 << int(math.floor(math.log2(t - s)))
        out.append((s, s + size))
        s += size
    return out


def _left_point(driver: DriverOperator, us: np.ndarray, s: int, t: int) -> np.ndarray:
    v = driver.variant
    if isinstance(v, Additive):
        return v.Z.values[t] - v.Z.values[s]
    if isinstance(v, LinearMultiplicative):
        return us * (v.beta.values[t, 0] - v.beta.values[s, 0])
    if isinstance(v, AbstractYoung):
        dX = v.X.values[t] - v.X.values[s]
        return v.product(v.sigma(us)[None, :], dX[None, :])[0]
    bins = v.bins or SpatialBins.covering(v.w, v.m)
    zc = bins.centers[bins.index(v.w.scalar[s:t])]
    dt = v.w.grid.dt
    return dt * np.sum(v.drift(us[None, :] - zc[:, None]), axis=0)


def driver_increment(driver: DriverOperator, u_history, s_node: int, t_node: int) -> np.ndarray:
    """Increment ``I_t(u) - I_s(u)`` from the history of ``u``.

    If the history reaches ``t_node`` the window ``[s, t]`` is sewn; otherwise
    the integrand is frozen at ``u_s`` (explicit treatment of the driver).
    """
    if not 0 <= s_node < t_node <= driver.grid.n:
        raise DriverError(f"need 0 <= s < t <= {driver.grid.n}, got {s_node}, {t_node}")
    vals = _values(u_history)
    if vals.shape[0] <= s_node:
        raise DriverError("history does not reach the window start")
    v = driver.variant
    if isinstance(v, Additive):
        return v.Z.values[t_node] - v.Z.values[s_node]
    if vals.shape[0] <= t_node:
        return _left_point(driver, vals[s_node], s_node, t_node)
    grid = driver.grid
    total = np.zeros(vals.shape[1])
    for a, b in _dyadic_blocks(s_node, t_node):
        sub = grid.subgrid(a, b)
        full = SampledPath(grid.subgrid(0, b) if b > 0 else grid, vals[: b + 1])
        germ = driver_germ(_restrict(driver, b), full)
        res = sew(germ, sub, remainder_lags=None, tol=1e-9, max_level=8)
        total += res.sewn.values[-1]
    return total


def _restrict(driver: DriverOperator, b: int) -> DriverOperator:
    """Driver with its paths cut to nodes ``0..b`` (so germs share the history grid)."""
    v = driver.variant
    if b == driver.grid.n:
        return driver
    if isinstance(v, LinearMultiplicative):
        nv = LinearMultiplicative(v.beta.window(0, b))
    elif isinstance(v, AbstractYoung):
        nv = AbstractYoung(v.sigma, v.X.window(0, b), v.product)
    elif isinstance(v, RegularizedDrift):
        bins = v.bins or SpatialBins.covering(v.w, v.m)
        nv = RegularizedDrift(v.drift, v.w.window(0, b), bins, v.m)
    else:
        nv = Additive(v.Z.window(0, b))
    return replace(driver, variant=nv)


def driver_integral(driver: DriverOperator, u: SampledPath, **sew_opts) -> SampledPath:
    """``I(u)`` on the whole grid (sewn), vanishing at ``t0``."""
    v = driver.variant
    if isinstance(v, Additive):
        return SampledPath(v.Z.grid, v.Z.values - v.Z.values[0], {"kind": "driver"})
    if u.grid != driver.grid:
        raise DriverError("u and the driver live on different grids")
    sew_opts.setdefault("remainder_lags", None)
    sew_opts.setdefault("tol", 1e-9)
    sew_opts.setdefault("max_level", 8)
    res = sew(driver_germ(driver, u), u.grid, **sew_opts)
    return res.sewn.with_meta(kind="driver")


def left_point_integral(driver: DriverOperator, u: SampledPath) -> SampledPath:
    """Accumulated left-point increments, the quantity the solver actually adds."""
    n = u.grid.n
    out = np.zeros_like(u.values)
    for k in range(n):
        out[k + 1] = out[k] + _left_point(driver, u.values[k], k, k + 1)
    return SampledPath(u.grid, out, {"kind": "driver_left_point"})


# ---------------------------------------------------------------------------
# time-local diagnostics


def dyadic_windows(n: int, depth: int = 6) -> list:
    """All tiles ``[j n / 2^l, (j+1) n / 2^l]`` for ``l = 0..depth``."""
    out = []
    for lvl in range(depth + 1):
        size = n >> lvl
        if size < 2:
            break
        out += [(j * size, (j + 1) * size) for j in range(n // size)]
    return out


@dataclass
class H5Table:
    """Window table for the time-local bound ``LHS_W <= c4 (1 + lambda(|W|) Q_W)``.

    ``rows`` hold ``(s, t, lhs, q_value, germ_part, remainder_part, ratio)`` with
    ``ratio = 2 remainder_part / (c4 Q_W)``; ``lam`` maps a window length to
    the largest ratio among windows of that length.
    """

    c4: float
    rows: list
    lam: dict
    dt: float = 1.0

    @property
    def lengths(self) -> list:
        return sorted(self.lam, reverse=True)

    @property
    def fitted_lambda(self) -> dict:
        """Smallest nondecreasing majorant of the per-length ratios (the fitted ``lambda``)."""
        out, run = {}, 0.0
        for r in sorted(self.lam):
            run = max(run, self.lam[r])
            out[r] = run
        return out

    def bound_violations(self, rel: float = 1e-9) -> list:
        """Windows where the fitted bound fails (empty by construction up to round-off)."""
        return [
            (s, t)
            for s, t, lhs, qv, *_ in self.rows
            if lhs > self.c4 * (1.0 + self.lam[(t - s) * self.dt] * qv) * (1.0 + rel)
        ]


def _window_lag_norms(G: Germ, I: SampledPath, ip, q: float, lags: np.ndarray):
    """Per lag ``k``: cumulative sums of ``|G_{j,j+k}|^q`` and ``|R_{j,j+k}|^q`` over ``j``,
    where ``R = (I_{j+k} - I_j) - G_{j,j+k}`` is the sewing remainder."""
    t = I.grid.times
    out = {}
    for k in lags:
        g = G(t[:-k], t[k:])
        r = (I.values[k:] - I.values[:-k]) - g
        gn = ip.norm(g) if ip is not None else np.linalg.norm(g, axis=1)
        rn = ip.norm(r) if ip is not None else np.linalg.norm(r, axis=1)
        if q == math.inf:
            out[int(k)] = (gn, rn)
        else:
            out[int(k)] = (
                np.concatenate([[0.0], np.cumsum(gn**q)]),
                np.concatenate([[0.0], np.cumsum(rn**q)]),
            )
    return out


def _window_seminorm(table, s: int, t: int, lags, dt: float, gamma: float, q: float, which: int) -> float:
    best = 0.0
    for k in lags:
        k = int(k)
        if k > t - s or (q != math.inf and k >= t - s):
            continue
        arr = table[k][which]
        if q == math.inf:
            val = float(arr[s : t - k + 1].max())
        else:
            val = (dt * (arr[t - k] - arr[s])) ** (1.0 / q)
        best = max(best, val * (k * dt) ** (-gamma))
    return best


def h5_diagnostic(
    driver: DriverOperator,
    u: SampledPath,
    windows: list | None = None,
    ip: InnerProduct | None = None,
    level: int | None = None,
    lags="dyadic",
) -> H5Table:
    """Time-local boundedness table.

    For each window ``W`` the left side is ``LHS_W = [I^n(u)]^2_{B^gamma_{q,inf}(W)}``
    and ``Q_W = [u]^2_{B^{1/2}_{2,inf}(W)} + ||u||^2_{inf}(W)``.  The sewn path
    splits into its germ and the sewing remainder, so
    ``LHS_W <= 2 [G]^2_W + 2 [R]^2_W``.  The germ part is absorbed into
    ``c4 = 2 max_W [G]^2_W`` and the remainder into
    ``lambda(r) = max_{|W| = r} 2 [R]^2_W / (c4 Q_W)``, which yields the
    bound ``LHS_W <= c4 (1 + lambda(|W|) Q_W)`` on every window.
    Seminorms use the lag selection ``lags`` on every window.
    """
    from ..grid_paths import _lag_array

    drv = driver.approximant(level)
    Iu = driver_integral(drv, u)
    G = driver_germ(drv, u)
    n = u.grid.n
    dt = u.grid.dt
    windows = windows or dyadic_windows(n)
    gam = min(driver.gamma, 1.0)
    q = driver.q
    all_lags = sorted({int(k) for s, t in windows for k in _lag_array(t - s, lags)})
    table = _window_lag_norms(G, Iu, ip, q, np.array(all_lags))
    rows = []
    for s, t in windows:
        Iw = Iu.window(s, t)
        uw = u.window(s, t)
        wl = _lag_array(t - s, lags)
        _, tab = seminorm_table(Iw, gam, q, ip, wl)
        lhs = float(tab.max()) ** 2
        qv = besov_seminorm(uw, BesovIndex(0.5, 2.0), ip, wl) ** 2 + uw.sup_norm(ip) ** 2
        gp = _window_seminorm(table, s, t, wl, dt, gam, q, 0) ** 2
        rp = _window_seminorm(table, s, t, wl, dt, gam, q, 1) ** 2
        rows.append([s, t, lhs, qv, gp, rp])
    c4 = 2.0 * max(r[4] for r in rows)
    lam: dict = {}
    for row in rows:
        s, t, lhs, qv, gp, rp = row
        ratio = 2.0 * rp / (c4 * qv) if c4 > 0 and qv > 0 else 0.0
        row.append(ratio)
        r = (t - s) * dt
        lam[r] = max(lam.get(r, 0.0), ratio)
    return H5Table(c4, [tuple(r) for r in rows], lam, dt)


@dataclass
class H6Table:
    levels: list
    gaps: list
    input_bounds: list  # (sup norm, B^{1/2}_{2,inf} seminorm) of each u^n

    @property
    def decreasing(self) -> bool:
        return all(b <= a * (1 + 1e-9) + 1e-14 for a, b in zip(self.gaps, self.gaps[1:]))


def h6_diagnostic(
    driver: DriverOperator,
    u_seq: list,
    u_limit: SampledPath,
    levels: list | None = None,
    gamma_bar: float = 0.5,
    ip: InnerProduct | None = None,
) -> H6Table:
    """Gaps ``||I^n(u^n) - I(u)||_{B^{gamma_bar}_{2,inf}}`` (L^2 norm plus seminorm)."""
    n = u_limit.grid.n
    top = int(math.log2(n))
    if levels is None:
        levels = [min(top, 3 + 2 * i) for i in range(len(u_seq))]
    if len(levels) != len(u_seq):
        raise DriverError("one approximation level per sequence element required")
    ref = driver_integral(driver, u_limit)
    gaps, bounds = [], []
    for lvl, un in zip(levels, u_seq):
        approx = driver_integral(driver.approximant(lvl), un)
        diff = approx - ref
        _, tab = seminorm_table(diff, gamma_bar, 2.0, ip, "auto")
        gaps.append(lp_norm(diff, 2.0, ip) + float(tab.max()))
        bounds.append((un.sup_norm(ip), besov_seminorm(un, BesovIndex(0.5, 2.0), ip, "auto")))
    return H6Table(list(levels), gaps, bounds)
