"""Gaussian random paths on finite time grids.

The central object is the drifted, operator-injected path

    w(t_l) = J_0 xi_0(t_l) + **i** J_1 xi_1(t_l) + p (t_l - t_0) + w(t_0),

where xi_0 and xi_1 are independent standard Wiener samples in R^n
(embedded along the i_0 axis), J_k is the block square root of the
covariance U_k, and the central unit **i** carries the second stream
into the imaginary half.  Passing a plain ``CovarianceOperator`` drops
that half and yields a path with values in the non-complexified algebra.

Reproducibility contract: every draw comes from a counter-based Philox
generator keyed by ``(seed, tag)``.  Single-path sampling tags by
replica index inside its own key family; ensembles tag by fixed-size
batch so a whole block of replicas is one vectorized draw.  The realized
ensemble therefore depends only on the seed and the batch size constant,
never on thread count or completion order.  Reductions place per-batch
partial sums by batch index and collapse them in one fixed pairwise
pass, so estimates are bit-identical for any worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .algebra import AlgebraError, LevelMismatch, dim_of, mul_tensor
from .linops import (
    CdVector,
    ComplexCovariance,
    CovarianceOperator,
    RealFunctional,
)

# Two-sided 0.99 normal quantile, used for every confidence interval.
Z99 = 2.5758293035489004

# Replicas per keyed batch.  Part of the reproducibility contract:
# changing it changes which Philox stream feeds which replica.
DEFAULT_BATCH = 2048

# Single-path draws live above 2^63 so they can never collide with
# ensemble batch tags under the same seed.
_SINGLE_DRAW_TAG = 1 << 63


class GridError(AlgebraError):
    """A time value or partition does not live on the grid."""


# ------------------------------------------------------------------ time grid

@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing partition t_0 < t_1 < ... < t_K of a window."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise GridError("a grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise GridError("grid points must be finite")
        if not np.all(np.diff(pts) > 0):
            raise GridError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, a: float, b: float, steps: int) -> "TimeGrid":
        if steps < 1:
            raise GridError("need at least one step")
        return cls(np.linspace(float(a), float(b), steps + 1))

    @property
    def a(self) -> float:
        return float(self.points[0])

    @property
    def b(self) -> float:
        return float(self.points[-1])

    @property
    def steps(self) -> int:
        return self.points.size - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.points)

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to t, or GridError."""
        i = int(np.searchsorted(self.points, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < self.points.size:
                if abs(self.points[j] - t) <= 1e-12 * max(1.0, abs(t)):
                    return j
        raise GridError(f"t={t!r} is not a grid point")

    def __len__(self) -> int:
        return self.points.size


# ---------------------------------------------------------------- noise draws

def _philox(seed: int, tag: int) -> np.random.Generator:
    # The key words must be handed over as uint64: a plain int list with a
    # value above 2^63 would be routed through float64 and lose low bits.
    key = np.array([seed, tag], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def batch_normals(seed: int, batch_index: int, count: int, shape: tuple,
                  stream: int) -> np.ndarray:
    """Standard normals (count, *shape) for one keyed ensemble batch."""
    g = _philox(seed, batch_index * 8 + stream)
    return g.standard_normal((count, *shape))


def batch_increments(grid: TimeGrid, n: int, seed: int, batch_index: int,
                     count: int, stream: int) -> np.ndarray:
    """(count, K, n) Gaussian increments with per-step variance dt_l."""
    z = batch_normals(seed, batch_index, count, (grid.steps, n), stream)
    return z * np.sqrt(grid.deltas)[None, :, None]


@dataclass(frozen=True)
class NoiseRealization:
    """One replica of independent N(0, dt_l) grid increments."""

    grid: TimeGrid
    increments: np.ndarray
    seed: int
    replica_index: int

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2 or inc.shape[0] != self.grid.steps:
            raise GridError("increment rows must match grid steps")
        if not np.all(np.isfinite(inc)):
            raise GridError("increments must be finite")
        object.__setattr__(self, "increments", inc)

    @property
    def n(self) -> int:
        return self.increments.shape[1]

    def cumulative(self) -> np.ndarray:
        """xi(t_l) at every grid point, starting from xi(t_0) = 0."""
        out = np.zeros((self.grid.steps + 1, self.n))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out


def wiener_sample(grid: TimeGrid, n: int, seed: int, replica: int,
                  stream: int = 0) -> NoiseRealization:
    """Draw one replica of Wiener increments, reproducibly keyed.

    The same (seed, replica, stream) triple always yields the same
    increments; distinct streams of one replica are independent.
    """
    if n < 1:
        raise AlgebraError("dimension must be at least 1")
    g = _philox(seed, _SINGLE_DRAW_TAG + replica * 4 + stream)
    z = g.standard_normal((grid.steps, n))
    inc = z * np.sqrt(grid.deltas)[:, None]
    return NoiseRealization(grid, inc, seed, replica)


# ------------------------------------------------------------- path assembly

def assemble_paths(grid: TimeGrid, e0: np.ndarray, e1: np.ndarray | None,
                   p: CdVector | None, start: CdVector | None,
                   inc0: np.ndarray, inc1: np.ndarray | None) -> np.ndarray:
    """Coefficient array (batch, K+1, n, 2, dim) of w over the grid.

    e0/e1 are entry arrays of the covariance square roots; the second
    injection lands in the imaginary half.  Drift advances from the
    first grid point, so w(t_0) equals the start value exactly.
    """
    b, k, n = inc0.shape
    dim = e0.shape[-1]
    xi0 = np.zeros((b, k + 1, n))
    np.cumsum(inc0, axis=1, out=xi0[:, 1:])
    w = np.zeros((b, k + 1, n, 2, dim))
    w[..., 0, :] = np.einsum("lkd,btk->btld", e0, xi0)
    if inc1 is not None:
        xi1 = np.zeros((b, k + 1, n))
        np.cumsum(inc1, axis=1, out=xi1[:, 1:])
        w[..., 1, :] = np.einsum("lkd,btk->btld", e1, xi1)
    if p is not None:
        tau = np.asarray(grid.points) - grid.a
        w += p.data[None, None] * tau[None, :, None, None, None]
    if start is not None:
        w += start.data[None, None]
    return w


@dataclass(frozen=True)
class CdPath:
    """Grid-aligned algebra-valued path, one replica."""

    level: int
    grid: TimeGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        dim = dim_of(self.level)
        if c.ndim != 4 or c.shape[0] != len(self.grid) or c.shape[2:] != (2, dim):
            raise AlgebraError("path coefficients must be (K+1, n, 2, dim)")
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    def value(self, index: int) -> CdVector:
        return CdVector(self.level, self.n, self.coeffs[index])

    def at_time(self, t: float) -> CdVector:
        return self.value(self.grid.index_of(t))


def _split_u(u) -> tuple[CovarianceOperator, CovarianceOperator | None]:
    if isinstance(u, ComplexCovariance):
        return u.u0, u.u1
    if isinstance(u, CovarianceOperator):
        return u, None
    raise AlgebraError("covariance must be a block operator or a pair of them")


def u_path(noise0: NoiseRealization, noise1: NoiseRealization | None, u,
           p: CdVector | None = None, start: CdVector | None = None) -> CdPath:
    """Path w(t_l) = J_0 xi_0 + **i** J_1 xi_1 + p (t_l - t_0) + w(t_0)."""
    u0, u1 = _split_u(u)
    if noise0.n != u0.n:
        raise AlgebraError("noise dimension does not match the covariance")
    if u1 is not None:
        if noise1 is None:
            raise AlgebraError("a complexified covariance needs a second noise stream")
        if noise1.n != u0.n or not np.array_equal(noise1.grid.points,
                                                  noise0.grid.points):
            raise AlgebraError("the two noise streams must share grid and dimension")
    elif noise1 is not None:
        raise AlgebraError("a plain covariance takes a single noise stream")
    level = u0.level
    for vec, name in ((p, "drift"), (start, "start")):
        if vec is not None and (vec.level != level or vec.n != u0.n):
            raise LevelMismatch(f"{name} vector does not match the covariance")
    e0 = u0.sqrt_entries()
    e1 = u1.sqrt_entries() if u1 is not None else None
    inc1 = noise1.increments[None] if noise1 is not None else None
    w = assemble_paths(noise0.grid, e0, e1, p, start,
                       noise0.increments[None], inc1)
    return CdPath(level, noise0.grid, w[0])


# ------------------------------------------------------------- path ensembles

class BatchPaths:
    """Lazily materialized block of consecutive replicas."""

    __slots__ = ("ensemble", "index", "start", "count", "_inc0", "_inc1", "_w")

    def __init__(self, ensemble: "PathEnsemble", index: int, start: int,
                 count: int):
        self.ensemble = ensemble
        self.index = index
        self.start = start
        self.count = count
        self._inc0 = None
        self._inc1 = None
        self._w = None

    @property
    def inc0(self) -> np.ndarray:
        if self._inc0 is None:
            e = self.ensemble
            self._inc0 = batch_increments(e.grid, e.n, e.seed, self.index,
                                          self.count, stream=0)
        return self._inc0

    @property
    def inc1(self) -> np.ndarray | None:
        e = self.ensemble
        if not e.complexified:
            return None
        if self._inc1 is None:
            self._inc1 = batch_increments(e.grid, e.n, e.seed, self.index,
                                          self.count, stream=1)
        return self._inc1

    @property
    def w(self) -> np.ndarray:
        """Path coefficients (count, K+1, n, 2, dim)."""
        if self._w is None:
            e = self.ensemble
            self._w = assemble_paths(e.grid, e.sqrt_entries0, e.sqrt_entries1,
                                     e.p, e.start, self.inc0, self.inc1)
        return self._w

    @property
    def dw(self) -> np.ndarray:
        """Per-step path increments (count, K, n, 2, dim)."""
        return np.diff(self.w, axis=1)

    def normals(self, shape: tuple, stream: int) -> np.ndarray:
        """Extra standard normals tied to this batch's replicas."""
        e = self.ensemble
        return batch_normals(e.seed, self.index, self.count, shape, stream)


@dataclass(frozen=True)
class PathEnsemble:
    """Replicated path family with a fixed generator specification.

    Noise is organized in fixed-size batches keyed by batch index, so the
    realized ensemble depends only on (seed, batch_size) and is identical
    for any worker count.
    """

    grid: TimeGrid
    u: ComplexCovariance | CovarianceOperator
    p: CdVector | None
    seed: int
    n_replicas: int
    batch_size: int = DEFAULT_BATCH
    start: CdVector | None = None

    def __post_init__(self):
        u0, _ = _split_u(self.u)
        if self.n_replicas < 1 or self.batch_size < 1:
            raise AlgebraError("replica and batch counts must be positive")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise AlgebraError("seed must fit in 64 unsigned bits")
        for vec, name in ((self.p, "drift"), (self.start, "start")):
            if vec is not None and (vec.level != u0.level or vec.n != u0.n):
                raise LevelMismatch(f"{name} vector does not match the covariance")

    @property
    def complexified(self) -> bool:
        return isinstance(self.u, ComplexCovariance)

    @property
    def u0(self) -> CovarianceOperator:
        return self.u.u0 if self.complexified else self.u

    @property
    def u1(self) -> CovarianceOperator | None:
        return self.u.u1 if self.complexified else None

    @property
    def level(self) -> int:
        return self.u0.level

    @property
    def n(self) -> int:
        return self.u0.n

    @cached_property
    def sqrt_entries0(self) -> np.ndarray:
        return self.u0.sqrt_entries()

    @cached_property
    def sqrt_entries1(self) -> np.ndarray | None:
        return self.u1.sqrt_entries() if self.complexified else None

    @property
    def n_batches(self) -> int:
        return -(-self.n_replicas // self.batch_size)

    def batches(self):
        for index in range(self.n_batches):
            start = index * self.batch_size
            count = min(self.batch_size, self.n_replicas - start)
            yield BatchPaths(self, index, start, count)

    def map_batches(self, fn, threads: int = 1) -> list:
        """Apply fn to every batch; results are placed by batch index."""
        batches = list(self.batches())
        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                return list(ex.map(fn, batches))
        return [fn(b) for b in batches]


def _tree_sum(parts: list) -> np.ndarray:
    """Fixed-order pairwise reduction of per-batch partial sums."""
    return np.sum(np.stack([np.asarray(p, dtype=float) for p in parts],
                           axis=0), axis=0)


# ------------------------------------------------------------- MC estimators

@dataclass(frozen=True)
class McReport:
    """Monte Carlo point estimate with its 0.99 normal interval."""

    estimate: np.ndarray
    standard_error: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    sample_count: int
    seed: int

    def __post_init__(self):
        for name in ("estimate", "standard_error", "ci_low", "ci_high"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if np.any(self.standard_error < 0):
            raise AlgebraError("standard errors must be nonnegative")
        if np.any(self.ci_low > self.estimate) or np.any(self.estimate > self.ci_high):
            raise AlgebraError("interval must contain the estimate")

    @classmethod
    def from_sums(cls, s1: np.ndarray, s2: np.ndarray, count: int,
                  seed: int) -> "McReport":
        mean = np.asarray(s1, dtype=float) / count
        var = (np.asarray(s2, dtype=float) - count * mean * mean)
        var = np.clip(var / max(count - 1, 1), 0.0, None)
        se = np.sqrt(var / count)
        return cls(mean, se, mean - Z99 * se, mean + Z99 * se, count, seed)

    def within(self, target, k: float = 4.0, atol: float = 1e-12) -> np.ndarray:
        """Componentwise |estimate - target| <= k standard errors."""
        gap = np.abs(self.estimate - np.asarray(target, dtype=float))
        return gap <= k * self.standard_error + atol

    def max_gap(self, target) -> float:
        return float(np.max(np.abs(self.estimate - np.asarray(target, dtype=float))))


def complex_of(report: McReport) -> complex:
    """Complex value of a (re, im) shaped report."""
    est = report.estimate
    if est.shape != (2,):
        raise AlgebraError("report does not hold a complex estimate")
    return complex(est[0], est[1])


def modulus_se(report: McReport) -> float:
    """Combined standard error for the modulus of a complex estimate."""
    se = report.standard_error
    if se.shape != (2,):
        raise AlgebraError("report does not hold a complex estimate")
    return float(np.sqrt(se[0] ** 2 + se[1] ** 2))


def mc_mean(ensemble: PathEnsemble, sampler, threads: int = 1) -> McReport:
    """Ensemble mean of sampler(batch), with deterministic reduction."""

    def fn(batch: BatchPaths):
        v = np.asarray(sampler(batch), dtype=float)
        return np.sum(v, axis=0), np.sum(v * v, axis=0), v.shape[0]

    parts = ensemble.map_batches(fn, threads)
    s1 = _tree_sum([p[0] for p in parts])
    s2 = _tree_sum([p[1] for p in parts])
    count = int(sum(p[2] for p in parts))
    return McReport.from_sums(s1, s2, count, ensemble.seed)


# -------------------------------------------------------------- moment checks

def increment_mean_estimator(ensemble: PathEnsemble, t1: float, t2: float,
                             threads: int = 1) -> McReport:
    """Mean of w(t2) - w(t1), coefficientwise over (n, 2, dim)."""
    i1 = ensemble.grid.index_of(t1)
    i2 = ensemble.grid.index_of(t2)
    return mc_mean(ensemble, lambda b: b.w[:, i2] - b.w[:, i1], threads)


def mean_increment_check(ensemble: PathEnsemble, t1: float, t2: float,
                         threads: int = 1) -> dict:
    """Mean increment against (t2 - t1) p, within 4 standard errors."""
    rep = increment_mean_estimator(ensemble, t1, t2, threads)
    if ensemble.p is None:
        target = np.zeros((ensemble.n, 2, dim_of(ensemble.level)))
    else:
        target = (t2 - t1) * ensemble.p.data
    return {
        "name": "mean_increment",
        "passed": bool(np.all(rep.within(target))),
        "max_gap": rep.max_gap(target),
        "max_standard_error": float(np.max(rep.standard_error)),
        "sample_count": rep.sample_count,
        "t1": float(t1),
        "t2": float(t2),
    }


def _scalar_products(m: np.ndarray, x: np.ndarray, y: np.ndarray,
                     complexified: bool) -> np.ndarray:
    """Pointwise algebra products of two batches of scalar values."""
    rr = np.einsum("kxy,bx,by->bk", m, x[:, 0], y[:, 0])
    if not complexified:
        return rr
    ii = np.einsum("kxy,bx,by->bk", m, x[:, 1], y[:, 1])
    ri = np.einsum("kxy,bx,by->bk", m, x[:, 0], y[:, 1])
    ir = np.einsum("kxy,bx,by->bk", m, x[:, 1], y[:, 0])
    return np.stack([rr - ii, ri + ir], axis=1)


@dataclass(frozen=True)
class IncrementCovariance:
    """Both product-moment estimates for one (t1, t2, k, h) choice."""

    increment_form: McReport
    as_stated: McReport
    expected: np.ndarray
    t1: float
    t2: float
    k: int
    h: int

    @property
    def as_stated_gap(self) -> float:
        return self.as_stated.max_gap(self.expected)


def increment_cov_estimator(ensemble: PathEnsemble, t1: float, t2: float,
                            k: int, h: int, threads: int = 1) -> IncrementCovariance:
    """Second-moment structure of the centered path at components k, h.

    Returns the asserted increment-form estimate E[(dw_k)(dw_h)] over
    [t1, t2] and, alongside it, the two-time product taken verbatim at
    (t2, t1); both are compared to the same (t2 - t1)-scaled block value,
    with only the increment form meant to match it.
    """
    n = ensemble.n
    if not (0 <= k < n and 0 <= h < n):
        raise AlgebraError("component index out of range")
    grid = ensemble.grid
    i1, i2 = grid.index_of(t1), grid.index_of(t2)
    if i1 >= i2:
        raise GridError("need t1 < t2 on the grid")
    m = mul_tensor(ensemble.level)
    cx = ensemble.complexified
    dim = dim_of(ensemble.level)
    pc = ensemble.p.data if ensemble.p is not None else np.zeros((n, 2, dim))

    def fn(batch: BatchPaths):
        w = batch.w
        xs = w[:, i2, k] - t2 * pc[k][None]
        ys = w[:, i1, h] - t1 * pc[h][None]
        stated = _scalar_products(m, xs, ys, cx)
        dx = (w[:, i2, k] - w[:, i1, k]) - (t2 - t1) * pc[k][None]
        dy = (w[:, i2, h] - w[:, i1, h]) - (t2 - t1) * pc[h][None]
        inc = _scalar_products(m, dx, dy, cx)
        return (np.sum(inc, axis=0), np.sum(inc * inc, axis=0),
                np.sum(stated, axis=0), np.sum(stated * stated, axis=0),
                inc.shape[0])

    parts = ensemble.map_batches(fn, threads)
    count = int(sum(p[4] for p in parts))
    inc_rep = McReport.from_sums(_tree_sum([p[0] for p in parts]),
                                 _tree_sum([p[1] for p in parts]),
                                 count, ensemble.seed)
    stated_rep = McReport.from_sums(_tree_sum([p[2] for p in parts]),
                                    _tree_sum([p[3] for p in parts]),
                                    count, ensemble.seed)
    expected = (t2 - t1) * ensemble.u0.entries()[k, h]
    if cx:
        expected = expected - (t2 - t1) * ensemble.u1.entries()[k, h]
        expected = np.stack([expected, np.zeros_like(expected)])
    return IncrementCovariance(inc_rep, stated_rep, expected,
                               float(t1), float(t2), k, h)


def increment_cov_check(ensemble: PathEnsemble, t1: float, t2: float,
                        k: int, h: int, threads: int = 1) -> dict:
    """Assert the increment form; report the as-stated residual."""
    res = increment_cov_estimator(ensemble, t1, t2, k, h, threads)
    rep = res.increment_form
    return {
        "name": "increment_covariance",
        "passed": bool(np.all(rep.within(res.expected))),
        "max_gap": rep.max_gap(res.expected),
        "max_standard_error": float(np.max(rep.standard_error)),
        "as_stated_gap": res.as_stated_gap,
        "sample_count": rep.sample_count,
        "t1": float(t1),
        "t2": float(t2),
        "k": k,
        "h": h,
    }


def disjoint_increment_corr(ensemble: PathEnsemble, t1: float, t2: float,
                            t3: float, t4: float, threads: int = 1) -> dict:
    """Largest coefficientwise correlation between disjoint increments."""
    grid = ensemble.grid
    i1, i2 = grid.index_of(t1), grid.index_of(t2)
    i3, i4 = grid.index_of(t3), grid.index_of(t4)
    if not (i1 < i2 <= i3 < i4):
        raise GridError("increment windows must be ordered and disjoint")

    def fn(batch: BatchPaths):
        w = batch.w
        x = (w[:, i2] - w[:, i1]).reshape(batch.count, -1)
        y = (w[:, i4] - w[:, i3]).reshape(batch.count, -1)
        return (np.sum(x, 0), np.sum(y, 0), np.sum(x * x, 0),
                np.sum(y * y, 0), np.sum(x * y, 0), x.shape[0])

    parts = ensemble.map_batches(fn, threads)
    count = int(sum(p[5] for p in parts))
    sx, sy, sxx, syy, sxy = (_tree_sum([p[i] for p in parts]) for i in range(5))
    mx, my = sx / count, sy / count
    vx = np.clip(sxx / count - mx * mx, 0.0, None)
    vy = np.clip(syy / count - my * my, 0.0, None)
    cov = sxy / count - mx * my
    # Deterministic coordinates (drift only) carry pure cancellation noise
    # in the one-pass variance, so gate relative to the coordinate scale.
    live = (vx > 1e-12 * np.maximum(1.0, mx * mx)) \
        & (vy > 1e-12 * np.maximum(1.0, my * my))
    corr = np.zeros_like(cov)
    corr[live] = cov[live] / np.sqrt(vx[live] * vy[live])
    bound = 4.0 / np.sqrt(count)
    top = float(np.max(np.abs(corr))) if corr.size else 0.0
    return {
        "name": "disjoint_increment_correlation",
        "passed": bool(top <= bound),
        "max_abs_correlation": top,
        "bound": bound,
        "sample_count": count,
    }


# --------------------------------------------------- characteristic functional

def char_functional_estimator(ensemble: PathEnsemble, y: RealFunctional,
                              t: float, threads: int = 1) -> McReport:
    """Empirical mean of exp(**i** y(w(t))) as an (re, im) report."""
    if y.level != ensemble.level or y.n != ensemble.n:
        raise LevelMismatch("functional does not match the ensemble")
    idx = ensemble.grid.index_of(t)

    def sampler(batch: BatchPaths):
        theta = y(batch.w[:, idx].reshape(batch.count, -1))
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)

    return mc_mean(ensemble, sampler, threads)


def char_functional_closed_form(u, p: CdVector | None, y: RealFunctional,
                                duration: float) -> complex:
    """exp(**i** d y(p) - d Var[y(w_unit)] / 2) for the Gaussian path law.

    The variance rate is assembled from the square-root entry columns of
    the two injections, which are exactly the images of the embedded unit
    noise coordinates.
    """
    if duration < 0:
        raise AlgebraError("duration must be nonnegative")
    u0, u1 = _split_u(u)
    if y.level != u0.level or y.n != u0.n:
        raise LevelMismatch("functional does not match the covariance")
    c = y.coeffs.reshape(u0.n, 2, dim_of(u0.level))
    g0 = np.einsum("ld,lkd->k", c[:, 0], u0.sqrt_entries())
    var_rate = float(g0 @ g0)
    if u1 is not None:
        g1 = np.einsum("ld,lkd->k", c[:, 1], u1.sqrt_entries())
        var_rate += float(g1 @ g1)
    drift_rate = y(p) if p is not None else 0.0
    return complex(np.exp(1j * duration * drift_rate - duration * var_rate / 2.0))


def char_functional_check(ensemble: PathEnsemble, y: RealFunctional, t: float,
                          threads: int = 1) -> dict:
    """Empirical functional against the closed form, 0.99 modulus interval."""
    rep = char_functional_estimator(ensemble, y, t, threads)
    oracle = char_functional_closed_form(ensemble.u, ensemble.p, y,
                                         t - ensemble.grid.a)
    gap = abs(complex_of(rep) - oracle)
    radius = Z99 * modulus_se(rep)
    return {
        "name": "char_functional",
        "passed": bool(gap <= radius + 1e-12),
        "gap": float(gap),
        "radius": float(radius),
        "estimate_re": float(rep.estimate[0]),
        "estimate_im": float(rep.estimate[1]),
        "oracle_re": float(oracle.real),
        "oracle_im": float(oracle.imag),
        "t": float(t),
        "sample_count": rep.sample_count,
    }


def char_semigroup_check(ensemble: PathEnsemble, y: RealFunctional,
                         d1: float, d2: float, threads: int = 1) -> dict:
    """Composition of durations against the product of functionals."""
    a = ensemble.grid.a
    r1 = char_functional_estimator(ensemble, y, a + d1, threads)
    r2 = char_functional_estimator(ensemble, y, a + d2, threads)
    r12 = char_functional_estimator(ensemble, y, a + d1 + d2, threads)
    gap = abs(complex_of(r12) - complex_of(r1) * complex_of(r2))
    tol = 5.0 * (modulus_se(r1) + modulus_se(r2))
    return {
        "name": "char_semigroup",
        "passed": bool(gap < tol),
        "gap": float(gap),
        "tolerance": float(tol),
        "d1": float(d1),
        "d2": float(d2),
        "sample_count": r12.sample_count,
    }


# ------------------------------------------------------- stochastic continuity

def path_continuity_check(ensemble: PathEnsemble, eps: float,
                          halvings: int = 8, threads: int = 1) -> dict:
    """Tail P{ ||w(t + delta) - w(t)|| > eps } over a halving ladder.

    For each delta the tail is the worst grid offset at that exact lag;
    the ladder must be non-increasing within binomial slack as delta
    shrinks.  Per-lag tails at the window start are returned as well,
    since they are plain binomial proportions suitable for oracles.
    """
    k = ensemble.grid.steps
    if halvings < 1 or k % (2 ** halvings) != 0:
        raise GridError("grid does not support that many halvings")
    lags = [k >> j for j in range(1, halvings + 1)]

    def fn(batch: BatchPaths):
        w = batch.w
        outs = []
        for lag in lags:
            d = w[:, lag:] - w[:, :-lag]
            d2 = 2.0 * np.sum(d * d, axis=(2, 3, 4))
            outs.append(np.sum(d2 > eps * eps, axis=0))
        return tuple(outs)

    parts = ensemble.map_batches(fn, threads)
    count = ensemble.n_replicas
    pts = ensemble.grid.points
    deltas, tails, origin = [], [], []
    for j, lag in enumerate(lags):
        probs = _tree_sum([p[j] for p in parts]) / count
        deltas.append(float(np.max(pts[lag:] - pts[:-lag])))
        tails.append(float(np.max(probs)))
        origin.append(float(probs[0]))
    ok = True
    for j in range(len(tails) - 1):
        se = np.sqrt(max(tails[j] * (1 - tails[j]), 1e-12) / count)
        se_next = np.sqrt(max(tails[j + 1] * (1 - tails[j + 1]), 1e-12) / count)
        if tails[j + 1] > tails[j] + 2.0 * (se + se_next):
            ok = False
    return {
        "name": "path_continuity",
        "passed": bool(ok),
        "eps": float(eps),
        "deltas": deltas,
        "tails": tails,
        "origin_tails": origin,
        "sample_count": count,
    }


# ----------------------------------------------------------------- CSV export

CSV_HEADER = ("replica", "t", "component", "basis", "imag", "value")


def write_path_rows(writer, grid: TimeGrid, coeffs: np.ndarray,
                    replica_offset: int = 0) -> None:
    """Rows (replica, t, component, basis, imag flag, value) for a block."""
    b, kk, n, _, dim = coeffs.shape
    for r in range(b):
        for it in range(kk):
            t = repr(float(grid.points[it]))
            for comp in range(n):
                for flag in (0, 1):
                    vals = coeffs[r, it, comp, flag]
                    for d in range(dim):
                        writer.writerow([replica_offset + r, t, comp, d, flag,
                                         repr(float(vals[d]))])


def export_paths_csv(ensemble: PathEnsemble, path, max_replicas: int = 10) -> int:
    """Write up to max_replicas paths in the fixed CSV schema."""
    written = 0
    with open(path, "w", newline="") as f:
        wtr = csv.writer(f)
        wtr.writerow(CSV_HEADER)
        remaining = min(max_replicas, ensemble.n_replicas)
        for batch in ensemble.batches():
            if remaining <= 0:
                break
            take = min(remaining, batch.count)
            write_path_rows(wtr, ensemble.grid, batch.w[:take], batch.start)
            remaining -= take
            written += take
    return written
