"""Uniform time grids, sampled paths and difference-quotient seminorms.

Every path in the package is a :class:`SampledPath`: ``n + 1`` samples of a
``d``-vector on a uniform :class:`TimeGrid`.  Between nodes a path is read as
its piecewise-linear interpolant (see :class:`PathInterpolant`), which is what
the sewing machinery evaluates when it refines below the grid.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

P_INF = math.inf


class PathError(ValueError):
    """Invalid grid, path or seminorm request."""


# ---------------------------------------------------------------------------
# grids and paths


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise PathError(f"grid needs n >= 1 intervals, got {self.n!r}")
        if not (math.isfinite(self.t0) and math.isfinite(self.T)) or self.T <= self.t0:
            raise PathError(f"grid needs t0 < T, got [{self.t0}, {self.T}]")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n

    @property
    def length(self) -> float:
        return self.T - self.t0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n + 1)

    def node(self, k: int) -> float:
        if not 0 <= k <= self.n:
            raise PathError(f"node {k} outside 0..{self.n}")
        return self.t0 + k * self.dt

    def subgrid(self, s: int, t: int) -> "TimeGrid":
        if not 0 <= s < t <= self.n:
            raise PathError(f"need 0 <= s < t <= {self.n}, got s={s}, t={t}")
        return TimeGrid(self.node(s), self.node(t), t - s)

    def coarsen(self, factor: int) -> "TimeGrid":
        if factor < 1 or self.n % factor:
            raise PathError(f"cannot coarsen n={self.n} by {factor}")
        return TimeGrid(self.t0, self.T, self.n // factor)

    def is_dyadic(self) -> bool:
        return self.n & (self.n - 1) == 0


class SampledPath:
    """Samples ``values[k]`` of a ``d``-vector at the nodes of ``grid``.

    ``meta`` carries free-form provenance such as ``kind`` and ``seed`` and is
    written into the JSON descriptor on serialization.
    """

    def __init__(self, grid: TimeGrid, values, meta: dict | None = None):
        arr = np.array(values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] != grid.n + 1:
            raise PathError(
                f"path needs {grid.n + 1} samples of equal length, got shape {arr.shape}"
            )
        if arr.shape[1] < 1:
            raise PathError("path state dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise PathError("path contains non-finite samples")
        arr.setflags(write=False)
        self.grid = grid
        self.values = arr
        self.meta = dict(meta or {})

    @property
    def space_dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def scalar(self) -> np.ndarray:
        """The sample array of a 1-dimensional path."""
        if self.space_dim != 1:
            raise PathError(f"path has dimension {self.space_dim}, not 1")
        return self.values[:, 0]

    @classmethod
    def from_function(cls, grid: TimeGrid, f: Callable, meta: dict | None = None):
        vals = np.asarray(f(grid.times), dtype=float)
        if vals.ndim == 0:
            vals = np.full(grid.n + 1, float(vals))
        return cls(grid, vals, meta)

    @classmethod
    def constant(cls, grid: TimeGrid, value) -> "SampledPath":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(v, (grid.n + 1, 1)))

    def with_meta(self, **meta) -> "SampledPath":
        return SampledPath(self.grid, self.values, {**self.meta, **meta})

    def window(self, s: int, t: int) -> "SampledPath":
        return SampledPath(self.grid.subgrid(s, t), self.values[s : t + 1], self.meta)

    def subsample(self, factor: int) -> "SampledPath":
        return SampledPath(self.grid.coarsen(factor), self.values[::factor], self.meta)

    def map(self, f: Callable[[np.ndarray], np.ndarray]) -> "SampledPath":
        return SampledPath(self.grid, f(self.values))

    def sup_norm(self, ip: "InnerProduct | None" = None) -> float:
        return float(np.max(_norms(self.values, ip)))

    def _check_same(self, other: "SampledPath"):
        if other.grid != self.grid or other.space_dim != self.space_dim:
            raise PathError("paths live on different grids or dimensions")

    def __add__(self, other):
        if isinstance(other, SampledPath):
            self._check_same(other)
            return SampledPath(self.grid, self.values + other.values)
        return SampledPath(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, SampledPath):
            self._check_same(other)
            return SampledPath(self.grid, self.values - other.values)
        return SampledPath(self.grid, self.values - other)

    def __mul__(self, c):
        return SampledPath(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return SampledPath(self.grid, -self.values)

    def __repr__(self):
        return f"SampledPath(grid={self.grid}, d={self.space_dim}, meta={self.meta})"

    # -- serialization -----------------------------------------------------

    def descriptor(self, kind: str | None = None) -> dict:
        desc = {
            "t0": self.grid.t0,
            "T": self.grid.T,
            "n": self.grid.n,
            "d": self.space_dim,
            "kind": kind or self.meta.get("kind", "path"),
        }
        if "seed" in self.meta:
            desc["seed"] = self.meta["seed"]
        return desc

    def to_csv(self, path, kind: str | None = None) -> tuple[Path, Path]:
        """Write ``<path>`` as CSV and ``<path>.json`` as the descriptor."""
        path = Path(path)
        header = ["t"] + [f"v{i}" for i in range(self.space_dim)]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])
        desc_path = path.with_name(path.name + ".json")
        desc_path.write_text(json.dumps(self.descriptor(kind), sort_keys=True))
        return path, desc_path

    @classmethod
    def from_csv(cls, path) -> "SampledPath":
        path = Path(path)
        desc = json.loads(path.with_name(path.name + ".json").read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        grid = TimeGrid(desc["t0"], desc["T"], desc["n"])
        meta = {"kind": desc.get("kind", "path")}
        if "seed" in desc:
            meta["seed"] = desc["seed"]
        return cls(grid, data[:, 1:], meta)


class PathInterpolant:
    """Piecewise-linear reading of a sampled path at arbitrary times.

    ``value`` evaluates the interpolant, ``integral`` its antiderivative from
    ``t0`` (piecewise quadratic, exact), and ``average`` the time mean over
    ``[s, t]``.  All three are vectorized over time arrays.
    """

    def __init__(self, path: SampledPath):
        self.path = path
        g = path.grid
        self._t0, self._dt, self._n = g.t0, g.dt, g.n
        v = path.values
        self._v = v
        self._dv = np.diff(v, axis=0)
        cum = np.zeros_like(v)
        cum[1:] = np.cumsum(0.5 * self._dt * (v[:-1] + v[1:]), axis=0)
        self._cum = cum

    def _locate(self, t):
        x = (np.asarray(t, dtype=float) - self._t0) / self._dt
        k = np.clip(np.floor(x).astype(np.int64), 0, self._n - 1)
        r = x - k
        return k, r

    def value(self, t) -> np.ndarray:
        k, r = self._locate(t)
        return self._v[k] + self._dv[k] * r[..., None]

    def integral(self, t) -> np.ndarray:
        k, r = self._locate(t)
        rr = r[..., None]
        return self._cum[k] + self._dt * (self._v[k] * rr + 0.5 * self._dv[k] * rr * rr)

    def average(self, s, t) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        width = (t - s)[..., None]
        return (self.integral(t) - self.integral(s)) / width


# ---------------------------------------------------------------------------
# inner products


class InnerProduct:
    """Inner product on ``R^d`` used as the discrete ``H``.

    Two kinds exist: ``weighted`` with ``(u, v) = sum_k m_k u_k v_k`` and
    ``inverse_stiffness`` with ``(u, v) = u^T K^{-1} v`` for a symmetric
    positive-definite ``K``.  Both are realised through a whitening map ``W``
    with ``(u, v) = (W u) . (W v)``.
    """

    def __init__(self, kind: str, dim: int, weights=None, stiffness=None):
        self.kind = kind
        self.dim = int(dim)
        if kind == "weighted":
            w = np.asarray(weights, dtype=float)
            if w.shape != (self.dim,) or np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise PathError("mass weights must be positive and match the dimension")
            self.weights = w
            self._sqrtw = np.sqrt(w)
        elif kind == "inverse_stiffness":
            K = np.asarray(stiffness, dtype=float)
            if K.shape != (self.dim, self.dim):
                raise PathError("stiffness matrix must be d x d")
            if not np.allclose(K, K.T, rtol=1e-12, atol=1e-12 * np.abs(K).max()):
                raise PathError("stiffness matrix must be symmetric")
            try:
                self._chol = scipy.linalg.cholesky(K, lower=True)
            except np.linalg.LinAlgError as exc:
                raise PathError("stiffness matrix must be positive definite") from exc
            self.stiffness = K
        else:
            raise PathError(f"unknown inner product kind {kind!r}")

    @classmethod
    def euclidean(cls, dim: int) -> "InnerProduct":
        return cls("weighted", dim, weights=np.ones(dim))

    @classmethod
    def weighted(cls, weights) -> "InnerProduct":
        w = np.asarray(weights, dtype=float)
        return cls("weighted", w.size, weights=w)

    @classmethod
    def inverse_stiffness(cls, K) -> "InnerProduct":
        K = np.asarray(K, dtype=float)
        return cls("inverse_stiffness", K.shape[0], stiffness=K)

    def _check(self, u):
        if u.shape[-1] != self.dim:
            raise PathError(
                f"inner product of dimension {self.dim} applied to vectors of length {u.shape[-1]}"
            )

    def whiten(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        self._check(u)
        if self.kind == "weighted":
            return u * self._sqrtw
        flat = u.reshape(-1, self.dim)
        out = scipy.linalg.solve_triangular(self._chol, flat.T, lower=True).T
        return out.reshape(u.shape)

    def inner(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind == "weighted":
            self._check(u)
            self._check(v)
            return np.sum(u * v * self.weights, axis=-1)
        return np.sum(self.whiten(u) * self.whiten(v), axis=-1)

    def norm(self, u) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(u, u), 0.0))

    def riesz(self, v) -> np.ndarray:
        """Coefficients ``r`` with ``(u, v)_H = u . r`` for every ``u``."""
        v = np.asarray(v, dtype=float)
        if self.kind == "weighted":
            return v * self.weights
        flat = v.reshape(-1, self.dim)
        out = scipy.linalg.cho_solve((self._chol, True), flat.T).T
        return out.reshape(v.shape)


def _norms(values: np.ndarray, ip: InnerProduct | None) -> np.ndarray:
    if ip is None:
        return np.sqrt(np.sum(values * values, axis=-1))
    return ip.norm(values)


def _whitened(path: SampledPath, ip: InnerProduct | None) -> np.ndarray:
    if ip is None:
        return path.values
    if ip.dim != path.space_dim:
        raise PathError(
            f"inner product dimension {ip.dim} does not match path dimension {path.space_dim}"
        )
    return ip.whiten(path.values)


# ---------------------------------------------------------------------------
# regularity descriptors


@dataclass(frozen=True)
class BesovIndex:
    """Regularity ``alpha``, integrability ``p`` and fine index ``q`` (always infinity)."""

    alpha: float
    p: float
    q: float = P_INF

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise PathError(f"Besov regularity must lie in (0, 1], got {self.alpha}")
        if not self.p >= 1:
            raise PathError(f"Besov integrability must be >= 1, got {self.p}")
        if self.q != P_INF:
            raise PathError("only the Nikolskii scale q = infinity is estimated")


@dataclass(frozen=True)
class HurstSpec:
    H: float
    coloring: tuple = field(default=(1.0,))

    def __post_init__(self):
        if not 0 < self.H < 1:
            raise PathError(f"Hurst in (0,1) required, got {self.H}")
        c = tuple(float(x) for x in self.coloring)
        if not all(math.isfinite(x) for x in c):
            raise PathError("coloring coefficients must be finite")
        object.__setattr__(self, "coloring", c)


# ---------------------------------------------------------------------------
# seminorm estimators


def dyadic_lags(n: int) -> np.ndarray:
    """Lags ``2^j`` and ``3 * 2^j`` not exceeding ``n``."""
    lags = set()
    k = 1
    while k <= n:
        lags.add(k)
        if 3 * k <= n:
            lags.add(3 * k)
        k *= 2
    lags.add(n)
    return np.array(sorted(lags), dtype=np.int64)


def _lag_array(n: int, lags) -> np.ndarray:
    if isinstance(lags, str):
        if lags == "all":
            return np.arange(1, n + 1)
        if lags == "dyadic":
            return dyadic_lags(n)
        if lags == "auto":
            return np.arange(1, n + 1) if n <= 4096 else dyadic_lags(n)
        raise PathError(f"unknown lag selection {lags!r}")
    arr = np.unique(np.asarray(lags, dtype=np.int64))
    if arr.size == 0 or arr[0] < 1 or arr[-1] > n:
        raise PathError(f"lags must lie in 1..{n}")
    return arr


_DIRECT_LAGS = 64


def _increment_means(x: np.ndarray, dt: float, p: float, lags: np.ndarray) -> np.ndarray:
    """``(dt * sum_{j<n-k} |x_{j+k} - x_j|^p)^{1/p}`` per lag (max over all pairs for p=inf)."""
    n = x.shape[0] - 1
    out = np.empty(lags.size)
    use_fft = p == 2 and lags.size > _DIRECT_LAGS and n > 2 * _DIRECT_LAGS
    if use_fft:
        y = x[:-1] - x[:-1].mean(axis=0)
        sq = np.sum(y * y, axis=1)
        csq = np.concatenate([[0.0], np.cumsum(sq)])
        m = 1 << int(math.ceil(math.log2(2 * n)))
        f = np.fft.rfft(y, n=m, axis=0)
        acorr = np.fft.irfft(np.sum(f * np.conj(f), axis=1), n=m)[:n]
    for i, k in enumerate(lags):
        if p == P_INF:
            diff = x[k:] - x[:-k]
            out[i] = np.sqrt(np.max(np.sum(diff * diff, axis=1)))
            continue
        if k >= n:
            out[i] = 0.0
            continue
        if use_fft and k > _DIRECT_LAGS:
            # sum_{j<n-k} |y_{j+k}|^2 + |y_j|^2 - 2 y_j.y_{j+k}
            total = (csq[n] - csq[k]) + csq[n - k] - 2.0 * acorr[k]
            out[i] = math.sqrt(max(total, 0.0) * dt)
            continue
        diff = x[k:n] - x[: n - k]
        nrm = np.sqrt(np.sum(diff * diff, axis=1))
        if p == 1:
            out[i] = dt * nrm.sum()
        else:
            peak = nrm.max()
            if peak == 0.0:
                out[i] = 0.0
            else:
                out[i] = peak * (dt * np.sum((nrm / peak) ** p)) ** (1.0 / p)
    return out


def seminorm_table(
    path: SampledPath, alpha: float, p: float, ip: InnerProduct | None = None, lags="all"
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled increment means ``h^{-alpha} (dt sum |u_{t+h}-u_t|^p)^{1/p}`` per lag.

    Returns ``(h, values)``.  No restriction on ``alpha`` is imposed here, so the
    sewing engine can use it for exponents above 1.
    """
    if path.grid.n < 1:
        raise PathError("seminorm undefined for a single sample")
    x = _whitened(path, ip)
    lag = _lag_array(path.grid.n, lags)
    means = _increment_means(x, path.grid.dt, p, lag)
    h = lag * path.grid.dt
    return h, means * h ** (-alpha)


def besov_seminorm(
    path: SampledPath, idx: BesovIndex, ip: InnerProduct | None = None, lags="all"
) -> float:
    """Discrete Nikolskii seminorm of ``path`` for ``B^alpha_{p,inf}``.

    The sup runs over lags that are multiples of the grid step and the time
    integral is a left-endpoint Riemann sum over ``[t0, T - h]``; ``p = inf``
    takes the max over all node pairs at that lag.
    """
    if not isinstance(idx, BesovIndex):
        raise PathError("besov_seminorm expects a BesovIndex")
    _, vals = seminorm_table(path, idx.alpha, idx.p, ip, lags)
    return float(vals.max())


def holder_seminorm(path: SampledPath, alpha: float, ip: InnerProduct | None = None) -> float:
    """``sup_{s != t} |u_t - u_s| / |t - s|^alpha`` over all grid pairs."""
    if not 0 < alpha <= 1:
        raise PathError(f"Holder exponent must lie in (0, 1], got {alpha}")
    _, vals = seminorm_table(path, alpha, P_INF, ip, "all")
    return float(vals.max())


def lp_norm(path: SampledPath, p: float, ip: InnerProduct | None = None) -> float:
    """Left-endpoint Riemann ``L^p_t H`` norm (sup norm for ``p = inf``)."""
    nrm = _norms(path.values, ip)
    if p == P_INF:
        return float(nrm.max())
    return float((path.grid.dt * np.sum(nrm[:-1] ** p)) ** (1.0 / p))


def nikolskii_glue_bound(
    sub_seminorms: Sequence[float],
    linf_norm: float,
    N: int,
    h_min: float,
    interval_len: float,
) -> float:
    """Upper bound for the global ``B^{1/2}_{2,inf}`` seminorm of a glued path.

    ``sqrt(sum sub^2 + linf^2 * 2 (N - 1 + |J| / h_min))``.
    """
    if h_min <= 0:
        raise PathError("h_min must be positive")
    if N < 1:
        raise PathError("need at least one sub-interval")
    subs = np.asarray(sub_seminorms, dtype=float)
    if np.any(subs < 0) or linf_norm < 0:
        raise PathError("seminorms and sup norm must be nonnegative")
    return math.sqrt(
        float(np.sum(subs**2)) + linf_norm**2 * 2.0 * (N - 1 + interval_len / h_min)
    )


def shift_bound_constant(gamma: float, q: float) -> float:
    r = gamma - 1.0 / q
    if r <= 0:
        raise PathError("shift bound needs gamma > 1/q")
    return 3.0 ** (2.0 - r) / r


def shift_bound_check(
    path: SampledPath, gamma: float, q: float, ip: InnerProduct | None = None
) -> tuple[float, float]:
    """Return ``(sup_s (dt sum_t |u_t - u_s|^q)^{1/q}, C |J|^gamma [u]_{gamma,q})``."""
    x = _whitened(path, ip)
    dt = path.grid.dt
    lhs = 0.0
    for s in range(x.shape[0]):
        d = x[:-1] - x[s]
        nrm = np.sqrt(np.sum(d * d, axis=1))
        lhs = max(lhs, float((dt * np.sum(nrm**q)) ** (1.0 / q)))
    _, vals = seminorm_table(path, gamma, q, ip, "all")
    rhs = shift_bound_constant(gamma, q) * path.grid.length**gamma * float(vals.max())
    return lhs, rhs


# ---------------------------------------------------------------------------
# fractional Brownian motion


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator; the only RNG used by the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


def _fgn_autocov(H: float, n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    return 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


@lru_cache(maxsize=64)
def _circulant_scale(n: int, H: float):
    gam = _fgn_autocov(H, n)
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        return None
    return np.sqrt(np.clip(lam, 0.0, None) / row.size)


@lru_cache(maxsize=16)
def _toeplitz_cholesky(n: int, H: float) -> np.ndarray:
    gam = _fgn_autocov(H, n)
    return scipy.linalg.cholesky(scipy.linalg.toeplitz(gam[:n]), lower=True)


def _unit_fgn(rng: np.random.Generator, H: float, n: int) -> np.ndarray:
    """Unit-step fractional Gaussian noise of length n, exact covariance."""
    scale = _circulant_scale(n, H)
    if scale is None:
        return _toeplitz_cholesky(n, H) @ rng.standard_normal(n)
    m = scale.size
    z = rng.standard_normal((2, m))
    w = np.fft.fft(scale * (z[0] + 1j * z[1]))
    return w.real[:n]


def _fbm_values(rng, H: float, grid: TimeGrid) -> np.ndarray:
    inc = _unit_fgn(rng, H, grid.n) * grid.dt**H
    out = np.empty(grid.n + 1)
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


def generate_fbm(seed: int, H: float, grid: TimeGrid) -> SampledPath:
    """Scalar fBm with ``B(t0) = 0`` by circulant embedding (Cholesky fallback)."""
    HurstSpec(H)
    vals = _fbm_values(make_rng(seed), H, grid)
    return SampledPath(grid, vals, {"kind": "fbm", "seed": int(seed), "H": H})


def fbm_ensemble(seeds: Sequence[int], H: float, grid: TimeGrid) -> np.ndarray:
    """Stack of scalar fBm samples, one row per seed (same streams as generate_fbm)."""
    HurstSpec(H)
    return np.stack([_fbm_values(make_rng(s), H, grid) for s in seeds])


def fbm_covariance(H: float, s, t) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (np.abs(s) ** (2 * H) + np.abs(t) ** (2 * H) - np.abs(t - s) ** (2 * H))


def generate_colored_fbm(
    seed: int,
    H: float,
    grid: TimeGrid,
    spec: HurstSpec,
    basis,
    ip: InnerProduct | None = None,
) -> SampledPath:
    """``W_t = sum_k lambda_k e_k beta^k_t`` with independent scalar fBms ``beta^k``.

    Mode ``k`` consumes the k-th block of the seed's stream, so a single-mode
    coloring reproduces ``generate_fbm(seed, ...)`` along ``e_1``.
    """
    if spec.H != H:
        raise PathError("HurstSpec and H disagree")
    E = np.atleast_2d(np.asarray(basis, dtype=float))
    lam = np.asarray(spec.coloring, dtype=float)
    if E.shape[0] != lam.size:
        raise PathError(f"{lam.size} coloring coefficients but {E.shape[0]} basis vectors")
    ip = ip or InnerProduct.euclidean(E.shape[1])
    gram = np.array([[float(ip.inner(a, b)) for b in E] for a in E])
    if not np.allclose(gram, np.eye(lam.size), atol=1e-8):
        raise PathError("basis vectors are not orthonormal in the given inner product")
    rng = make_rng(seed)
    vals = np.zeros((grid.n + 1, E.shape[1]))
    for lk, ek in zip(lam, E):
        beta = _fbm_values(rng, H, grid)
        vals += lk * beta[:, None] * ek[None, :]
    return SampledPath(grid, vals, {"kind": "colored_fbm", "seed": int(seed), "H": H})


# ---------------------------------------------------------------------------
# smoothing and averaging


def mollify_path(path: SampledPath, level: int) -> SampledPath:
    """Piecewise-linear interpolation through ``2^level + 1`` equispaced nodes."""
    level = int(level)
    if level < 0 or 2**level > path.grid.n:
        raise PathError(f"mollification level {level} too large for n={path.grid.n}")
    g = path.grid
    coarse_t = np.linspace(g.t0, g.T, 2**level + 1)
    coarse_v = PathInterpolant(path).value(coarse_t)
    times = g.times
    vals = np.column_stack(
        [np.interp(times, coarse_t, coarse_v[:, j]) for j in range(path.space_dim)]
    )
    return SampledPath(g, vals, {**path.meta, "kind": "mollified", "level": level})


def time_average(path: SampledPath, s: int, t: int, ip: InnerProduct | None = None) -> np.ndarray:
    """Trapezoid mean of ``path`` over the nodes ``s..t``."""
    if not 0 <= s < t <= path.grid.n:
        raise PathError(f"time average needs node indices s < t, got s={s}, t={t}")
    if ip is not None and ip.dim != path.space_dim:
        raise PathError("inner product dimension does not match the path")
    v = path.values[s : t + 1]
    return 0.5 * (v[:-1] + v[1:]).sum(axis=0) / (t - s)
