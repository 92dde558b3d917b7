"""Stochastic integration of operator-valued step functions.

An integrand is a piecewise-constant family of right-linear operators on
a partition of the path window.  Its integral against a path w is the
finite sum

    eta(t) = sum_l S_l (w(tau_{l+1} ^ t) - w(tau_l ^ t)),

accumulated here as a running path over the full grid, so eta(t_0) = 0
and every grid point carries the truncated value.  Predictable
integrands (prefix-measurable callbacks) are discretized onto the grid
steps, with refinement studies standing in for the mean-square limit.

Adaptedness is enforced by the interface: slot callbacks receive only
the path prefix up to their step's left endpoint.  A ``full_view``
escape hatch hands them the whole path instead; it exists solely so
negative controls can demonstrate that the martingale test has power.

Slot callbacks may return a bare operator, a ``(weights, op)`` pair with
one scalar weight per replica, or a list of such terms to be summed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .algebra import AlgebraError, LevelMismatch, dim_of
from .linops import (
    ComplexCovariance,
    CovarianceOperator,
    RightLinearOp,
    compose_entries,
    f_functional,
    f_functional_cross,
    vec_norm2,
)
from .paths import (
    CdPath,
    GridError,
    McReport,
    PathEnsemble,
    TimeGrid,
    _tree_sum,
    mc_mean,
    write_path_rows,
)


# ------------------------------------------------------------------ integrands

@dataclass(frozen=True)
class StepIntegrand:
    """Piecewise-constant operator family on a partition.

    Each slot is either a fixed ``RightLinearOp`` or a callable taking the
    replica-batch path view (prefix up to the slot's left endpoint unless
    ``full_view``) and returning operator terms.
    """

    partition: TimeGrid
    slots: tuple
    level: int
    n: int
    h: int
    full_view: bool = False

    def __post_init__(self):
        if len(self.slots) != self.partition.steps:
            raise GridError("one slot per partition step is required")

    @classmethod
    def constant(cls, partition: TimeGrid, op: RightLinearOp) -> "StepIntegrand":
        return cls(partition, (op,) * partition.steps, op.level, op.n, op.h)

    @classmethod
    def from_ops(cls, partition: TimeGrid, ops) -> "StepIntegrand":
        ops = tuple(ops)
        first = ops[0]
        return cls(partition, ops, first.level, first.n, first.h)

    def __add__(self, other: "StepIntegrand") -> "StepIntegrand":
        """Slotwise sum; integration is linear in the integrand."""
        if not isinstance(other, StepIntegrand):
            return NotImplemented
        if (self.level, self.n, self.h) != (other.level, other.n, other.h):
            raise LevelMismatch("integrand shapes differ")
        if not np.array_equal(self.partition.points, other.partition.points):
            raise GridError("integrand partitions differ")
        if self.full_view != other.full_view:
            raise AlgebraError("cannot mix adapted and full-view integrands")

        def joined(a, b):
            return lambda view: (_raw_terms(a, view) + _raw_terms(b, view))

        slots = tuple(joined(a, b) for a, b in zip(self.slots, other.slots))
        return StepIntegrand(self.partition, slots, self.level, self.n,
                             self.h, self.full_view)

    def restrict(self, c: float, b: float) -> "StepIntegrand":
        """Sub-integrand on [c, b]; both ends must be partition points."""
        i = self.partition.index_of(c)
        j = self.partition.index_of(b)
        if i >= j:
            raise GridError("need c < b on the partition")
        sub = TimeGrid(self.partition.points[i:j + 1])
        return StepIntegrand(sub, self.slots[i:j], self.level, self.n,
                             self.h, self.full_view)


@dataclass(frozen=True)
class PredictableIntegrand:
    """Prefix-measurable operator callback with a second-moment certificate.

    ``evaluator(t_index, view)`` must produce the operator terms for the
    grid step starting at ``t_index`` from the path prefix alone; ``bound``
    is the declared finite constant dominating the expected quadrature of
    the squared operator norm.
    """

    level: int
    n: int
    h: int
    evaluator: object
    bound: float

    def __post_init__(self):
        if not (np.isfinite(self.bound) and self.bound >= 0):
            raise AlgebraError("the second-moment certificate must be finite")

    def as_step(self, grid: TimeGrid) -> StepIntegrand:
        """Grid-step discretization: the grid is the approximant."""

        def bind(idx):
            return lambda view: self.evaluator(idx, view)

        slots = tuple(bind(l) for l in range(grid.steps))
        return StepIntegrand(grid, slots, self.level, self.n, self.h)


def _raw_terms(slot, view):
    raw = slot(view) if callable(slot) else slot
    if isinstance(raw, (RightLinearOp, tuple)):
        return [raw]
    return list(raw)


def _slot_terms(integrand: StepIntegrand, j: int, view, count: int):
    """Normalize one slot to [(weights | None, op)] and validate shapes."""
    out = []
    for item in _raw_terms(integrand.slots[j], view):
        if isinstance(item, RightLinearOp):
            weights, op = None, item
        else:
            weights, op = item
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (count,):
                raise AlgebraError("weights must hold one scalar per replica")
        if (op.level, op.n, op.h) != (integrand.level, integrand.n, integrand.h):
            raise LevelMismatch("slot operator shape does not match the integrand")
        out.append((weights, op))
    return out


def _slot_spans(integrand: StepIntegrand, grid: TimeGrid):
    idxs = [grid.index_of(t) for t in integrand.partition.points]
    return [(j, idxs[j], idxs[j + 1]) for j in range(len(idxs) - 1)]


# ----------------------------------------------------------------- the engine

def integral_paths(integrand: StepIntegrand, grid: TimeGrid,
                   w: np.ndarray) -> np.ndarray:
    """Running integral (batch, K+1, h, 2, dim) over the whole grid.

    The cumulative sum realizes the wedge truncation: the value at grid
    index m contains exactly the increments of steps below m.
    """
    dim = dim_of(integrand.level)
    b, kk = w.shape[:2]
    if w.shape[1:] != (grid.steps + 1, integrand.n, 2, dim):
        raise AlgebraError("path array does not match integrand and grid")
    spans = _slot_spans(integrand, grid)
    w_flat = w.reshape(b, kk, -1)
    dw = np.diff(w_flat, axis=1)
    out_size = 2 * integrand.h * dim
    steps = np.zeros((b, grid.steps, out_size))
    for j, i0, i1 in spans:
        view = w if integrand.full_view else w[:, :i0 + 1]
        for weights, op in _slot_terms(integrand, j, view, b):
            seg = dw[:, i0:i1] @ op.realized.T
            if weights is not None:
                seg = seg * weights[:, None, None]
            steps[:, i0:i1] += seg
    eta = np.zeros((b, kk, out_size))
    np.cumsum(steps, axis=1, out=eta[:, 1:])
    return eta.reshape(b, kk, integrand.h, 2, dim)


@dataclass(frozen=True)
class IntegralPath:
    """Grid-aligned running integral for a replica batch; zero at the left end."""

    level: int
    h: int
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        kk = len(self.grid)
        dim = dim_of(self.level)
        if self.values.ndim != 5 or self.values.shape[1:] != (kk, self.h, 2, dim):
            raise AlgebraError("integral values do not match the grid")
        if self.values[:, 0].any():
            raise AlgebraError("a running integral must vanish at the left end")

    @classmethod
    def compute(cls, integrand: StepIntegrand, grid: TimeGrid,
                w: np.ndarray) -> "IntegralPath":
        return cls(integrand.level, integrand.h, grid,
                   integral_paths(integrand, grid, w))

    def at(self, t: float) -> np.ndarray:
        return self.values[:, self.grid.index_of(t)]


def elementary_integral(s: StepIntegrand, path: CdPath, t: float):
    """Integral of a step integrand against one path, as a vector value."""
    eta = integral_paths(s, path.grid, path.coeffs[None])
    idx = path.grid.index_of(t)
    from .linops import CdVector
    return CdVector(s.level, s.h, eta[0, idx])


def predictable_integral(s: PredictableIntegrand, path: CdPath, t: float):
    """Integral of a predictable integrand via grid-step discretization."""
    return elementary_integral(s.as_step(path.grid), path, t)


# ------------------------------------------------------ second-moment helpers

def _hs_inner(op1: RightLinearOp, op2: RightLinearOp) -> float:
    """Entrywise inner product matching hs_norm2 on the diagonal."""
    b1, b2 = op1.blocks(), op2.blocks()
    return float(sum(np.sum(b1[key] * b2[key]) for key in b1))


def _lri_trace_fn(u0: CovarianceOperator):
    root = u0.sqrt_entries()

    def fn(op1: RightLinearOp, op2: RightLinearOp) -> float:
        for op in (op1, op2):
            if not op.is_lri:
                raise AlgebraError("the isometry identity needs lri-valued slots")
        g1 = compose_entries(op1.entries, root, op1.level)
        g2 = compose_entries(op2.entries, root, op2.level)
        return float(np.sum(g1 * g2))

    return fn


def _f_trace_fn(u: ComplexCovariance):
    def fn(op1: RightLinearOp, op2: RightLinearOp) -> float:
        if op1 is op2:
            return f_functional(op1, u)
        return f_functional_cross(op1, op2, u)

    return fn


def _second_moment_samples(integrand: StepIntegrand, grid: TimeGrid,
                           w: np.ndarray, upto: int, trace_fn) -> np.ndarray:
    """Per-replica quadrature sum_l dt_l tr(slot_l) below grid index upto."""
    b = w.shape[0]
    out = np.zeros(b)
    for j, i0, i1 in _slot_spans(integrand, grid):
        lo, hi = i0, min(i1, upto)
        if lo >= hi:
            continue
        span = float(grid.points[hi] - grid.points[lo])
        view = w if integrand.full_view else w[:, :i0 + 1]
        terms = _slot_terms(integrand, j, view, b)
        q = np.zeros(b)
        for wi, opi in terms:
            for wj, opj in terms:
                c = trace_fn(opi, opj)
                if wi is None and wj is None:
                    q += c
                else:
                    ww = (wi if wi is not None else 1.0) * \
                         (wj if wj is not None else 1.0)
                    q += ww * c
        out += span * q
    return out


def _sqrt_hs2(u: CovarianceOperator) -> float:
    return u.sqrt_op().hs_norm2()


def _require_match(integrand, ensemble: PathEnsemble):
    if integrand.level != ensemble.level or integrand.n != ensemble.n:
        raise LevelMismatch("integrand does not match the ensemble")


# ----------------------------------------------------------------- the checks

def zero_mean_check(integrand: StepIntegrand, ensemble: PathEnsemble,
                    t: float | None = None, threads: int = 1) -> dict:
    """Ensemble mean of the integral, within 4 standard errors of zero."""
    _require_match(integrand, ensemble)
    grid = ensemble.grid
    idx = grid.index_of(grid.b if t is None else t)

    def sampler(batch):
        eta = integral_paths(integrand, grid, batch.w)
        return eta[:, idx].reshape(batch.count, -1)

    rep = mc_mean(ensemble, sampler, threads)
    zero = np.zeros_like(rep.estimate)
    return {
        "name": "zero_mean",
        "passed": bool(np.all(rep.within(zero))),
        "max_abs_mean": float(np.max(np.abs(rep.estimate))),
        "max_standard_error": float(np.max(rep.standard_error)),
        "sample_count": rep.sample_count,
    }


def isometry_check(integrand: StepIntegrand, ensemble: PathEnsemble,
                   t: float | None = None, threads: int = 1) -> dict:
    """Mean squared integral against the trace quadrature, two-sided.

    Valid in the plain-algebra setting: the ensemble must carry a single
    covariance and every slot operator must be lri-valued.
    """
    _require_match(integrand, ensemble)
    if ensemble.complexified:
        raise AlgebraError("the isometry identity lives on plain-covariance paths")
    grid = ensemble.grid
    idx = grid.index_of(grid.b if t is None else t)
    trace_fn = _lri_trace_fn(ensemble.u0)

    def fn(batch):
        eta = integral_paths(integrand, grid, batch.w)
        lhs = np.sum(eta[:, idx, :, 0, :] ** 2, axis=(1, 2))
        rhs = _second_moment_samples(integrand, grid, batch.w, idx, trace_fn)
        return (lhs.sum(), (lhs * lhs).sum(), rhs.sum(), (rhs * rhs).sum(),
                lhs.shape[0])

    parts = ensemble.map_batches(fn, threads)
    count = int(sum(p[4] for p in parts))
    lhs = McReport.from_sums(_tree_sum([p[0] for p in parts]),
                             _tree_sum([p[1] for p in parts]), count,
                             ensemble.seed)
    rhs = McReport.from_sums(_tree_sum([p[2] for p in parts]),
                             _tree_sum([p[3] for p in parts]), count,
                             ensemble.seed)
    gap = abs(float(lhs.estimate) - float(rhs.estimate))
    combined = float(np.sqrt(lhs.standard_error ** 2 + rhs.standard_error ** 2))
    return {
        "name": "isometry",
        "passed": bool(gap <= 4.0 * combined + 1e-12),
        "lhs": float(lhs.estimate),
        "rhs": float(rhs.estimate),
        "gap": gap,
        "combined_standard_error": combined,
        "sample_count": count,
    }


def bound_check(integrand: StepIntegrand, ensemble: PathEnsemble,
                t: float | None = None, threads: int = 1,
                slack: float = 1e-9) -> dict:
    """Second-moment identity and domination for complexified paths.

    M1 = mean squared norm of the integral, M2 = twice the F-functional
    quadrature, M3 = the covariance factor times the squared-norm
    quadrature; asserts M1 = M2 within combined error and M1 <= M3 with
    Monte Carlo slack.
    """
    _require_match(integrand, ensemble)
    if not ensemble.complexified:
        raise AlgebraError("the norm bound needs a complexified covariance")
    grid = ensemble.grid
    idx = grid.index_of(grid.b if t is None else t)
    f_fn = _f_trace_fn(ensemble.u)
    factor = max(_sqrt_hs2(ensemble.u0), _sqrt_hs2(ensemble.u1))

    def fn(batch):
        eta = integral_paths(integrand, grid, batch.w)
        m1 = vec_norm2(eta[:, idx].reshape(batch.count, -1))
        m2 = 2.0 * _second_moment_samples(integrand, grid, batch.w, idx, f_fn)
        m3 = _second_moment_samples(integrand, grid, batch.w, idx, _hs_inner)
        return (m1.sum(), (m1 * m1).sum(), m2.sum(), (m2 * m2).sum(),
                m3.sum(), (m3 * m3).sum(), m1.shape[0])

    parts = ensemble.map_batches(fn, threads)
    count = int(sum(p[6] for p in parts))
    m1 = McReport.from_sums(_tree_sum([p[0] for p in parts]),
                            _tree_sum([p[1] for p in parts]), count,
                            ensemble.seed)
    m2 = McReport.from_sums(_tree_sum([p[2] for p in parts]),
                            _tree_sum([p[3] for p in parts]), count,
                            ensemble.seed)
    m3 = McReport.from_sums(_tree_sum([p[4] for p in parts]),
                            _tree_sum([p[5] for p in parts]), count,
                            ensemble.seed)
    v1, v2 = float(m1.estimate), float(m2.estimate)
    v3 = factor * float(m3.estimate)
    se12 = float(np.sqrt(m1.standard_error ** 2 + m2.standard_error ** 2))
    se13 = float(np.sqrt(m1.standard_error ** 2
                         + (factor * float(m3.standard_error)) ** 2))
    equality = abs(v1 - v2) <= 4.0 * se12 + 1e-12
    dominated = v1 <= v3 * (1.0 + slack) + 4.0 * se13 + 1e-12
    return {
        "name": "norm_bound",
        "passed": bool(equality and dominated),
        "equality_passed": bool(equality),
        "dominated": bool(dominated),
        "m1": v1,
        "m2": v2,
        "m3": v3,
        "combined_standard_error": se12,
        "sample_count": count,
    }


def martingale_check(integrand: StepIntegrand, ensemble: PathEnsemble,
                     t1: float, t2: float, bins: int = 8,
                     threads: int = 1) -> dict:
    """Conditional-increment test for the running integral.

    Checks the unconditional mean of eta(t2) - eta(t1) and, as a stronger
    probe, the mean inside quantile bins of the first coordinate of
    eta(t1); every bin must be centered within 4 of its standard errors.
    """
    _require_match(integrand, ensemble)
    grid = ensemble.grid
    i1, i2 = grid.index_of(t1), grid.index_of(t2)
    if i1 >= i2:
        raise GridError("need t1 < t2 on the grid")

    def fn(batch):
        eta = integral_paths(integrand, grid, batch.w)
        d = (eta[:, i2] - eta[:, i1]).reshape(batch.count, -1)
        stat = eta[:, i1, 0, 0, 0]
        return d, stat

    parts = ensemble.map_batches(fn, threads)
    diffs = np.concatenate([p[0] for p in parts], axis=0)
    stat = np.concatenate([p[1] for p in parts], axis=0)
    count = diffs.shape[0]

    rep = McReport.from_sums(diffs.sum(0), (diffs * diffs).sum(0), count,
                             ensemble.seed)
    uncond_ok = bool(np.all(rep.within(np.zeros_like(rep.estimate))))

    edges = np.quantile(stat, np.linspace(0.0, 1.0, bins + 1))
    edges[0], edges[-1] = -np.inf, np.inf
    which = np.clip(np.searchsorted(edges, stat, side="right") - 1, 0, bins - 1)
    worst = 0.0
    bins_ok = True
    for b in range(bins):
        sel = diffs[which == b]
        if sel.shape[0] < 2:
            continue
        mean = sel.mean(0)
        se = sel.std(0, ddof=1) / np.sqrt(sel.shape[0])
        z = np.abs(mean) / np.where(se > 0, se, np.inf)
        worst = max(worst, float(np.max(z)))
        if np.any(z > 4.0):
            bins_ok = False
    return {
        "name": "martingale",
        "passed": bool(uncond_ok and bins_ok),
        "unconditional_passed": uncond_ok,
        "bins_passed": bool(bins_ok),
        "worst_bin_z": worst,
        "max_abs_mean": float(np.max(np.abs(rep.estimate))),
        "bins": bins,
        "sample_count": count,
    }


def lookahead_control(grid: TimeGrid, level: int, n: int) -> StepIntegrand:
    """Non-adapted control: each step is signed by its own future increment.

    Exists to demonstrate the power of the martingale test; the positive
    drift it produces must make martingale_check fail.
    """
    from .linops import RightLinearOp as Op
    identity = Op.identity(level, n)

    def bind(idx):
        def slot(full_w):
            step = full_w[:, idx + 1, 0, 0, 0] - full_w[:, idx, 0, 0, 0]
            return np.sign(step), identity

        return slot

    slots = tuple(bind(l) for l in range(grid.steps))
    return StepIntegrand(grid, slots, level, n, n, full_view=True)


def chebyshev_check(integrand: StepIntegrand, ensemble: PathEnsemble,
                    beta: float, alpha: float, threads: int = 1) -> dict:
    """Tail of the running supremum against both quadrature bounds."""
    _require_match(integrand, ensemble)
    if not ensemble.complexified:
        raise AlgebraError("the tail bounds need a complexified covariance")
    if beta <= 0 or alpha <= 0:
        raise AlgebraError("need positive beta and alpha")
    grid = ensemble.grid
    f_fn = _f_trace_fn(ensemble.u)
    mstar2 = max(_sqrt_hs2(ensemble.u0), _sqrt_hs2(ensemble.u1))
    threshold2 = beta * beta * mstar2

    def fn(batch):
        eta = integral_paths(integrand, grid, batch.w)
        sup2 = np.max(vec_norm2(eta.reshape(batch.count, len(grid), -1)), axis=1)
        exceed = int(np.sum(sup2 > threshold2))
        fq = _second_moment_samples(integrand, grid, batch.w, grid.steps, f_fn)
        hq = _second_moment_samples(integrand, grid, batch.w, grid.steps,
                                    _hs_inner)
        over = int(np.sum(hq > alpha))
        return (exceed, fq.sum(), (fq * fq).sum(), over, batch.count)

    parts = ensemble.map_batches(fn, threads)
    count = int(sum(p[4] for p in parts))
    emp = float(sum(p[0] for p in parts)) / count
    f_rep = McReport.from_sums(_tree_sum([p[1] for p in parts]),
                               _tree_sum([p[2] for p in parts]), count,
                               ensemble.seed)
    over_prob = float(sum(p[3] for p in parts)) / count
    se_emp = float(np.sqrt(max(emp * (1 - emp), 1e-12) / count))
    bound_f = float(f_rep.estimate) / beta ** 2
    se_f = float(f_rep.standard_error) / beta ** 2
    bound_split = alpha / beta ** 2 + over_prob
    se_split = float(np.sqrt(max(over_prob * (1 - over_prob), 1e-12) / count))
    ok_f = emp <= bound_f + 4.0 * (se_emp + se_f)
    ok_split = emp <= bound_split + 4.0 * (se_emp + se_split)
    return {
        "name": "chebyshev",
        "passed": bool(ok_f and ok_split),
        "empirical": emp,
        "bound_quadrature": bound_f,
        "bound_split": bound_split,
        "beta": float(beta),
        "alpha": float(alpha),
        "sample_count": count,
    }


def continuity_check(integrand: StepIntegrand, ensemble: PathEnsemble,
                     eps: float, halvings: int = 6, threads: int = 1) -> dict:
    """Tail of integral increments over nested lag windows.

    tail(delta_j) takes the worst grid pair within lag delta_j; the pair
    sets are nested, so the ladder is non-increasing by construction and
    the assertion is about the finest level staying under 0.01.
    """
    _require_match(integrand, ensemble)
    grid = ensemble.grid
    k = grid.steps
    if halvings < 1 or k % (2 ** halvings) != 0:
        raise GridError("grid does not support that many halvings")
    top_lag = k >> 1

    def fn(batch):
        eta = integral_paths(integrand, grid, batch.w)
        flat = eta.reshape(batch.count, k + 1, -1)
        outs = []
        for lag in range(1, top_lag + 1):
            d2 = vec_norm2(flat[:, lag:] - flat[:, :-lag])
            outs.append(np.sum(d2 > eps * eps, axis=0))
        return outs

    parts = ensemble.map_batches(fn, threads)
    count = ensemble.n_replicas
    per_lag_max = np.zeros(top_lag)
    for lag_i in range(top_lag):
        probs = _tree_sum([p[lag_i] for p in parts]) / count
        per_lag_max[lag_i] = float(np.max(probs))
    running = np.maximum.accumulate(per_lag_max)
    pts = grid.points
    deltas, tails = [], []
    for j in range(1, halvings + 1):
        lag = k >> j
        deltas.append(float(np.max(pts[lag:] - pts[:-lag])))
        tails.append(float(running[lag - 1]))
    finest_ok = tails[-1] < 0.01
    monotone = all(tails[j + 1] <= tails[j] + 1e-15 for j in range(len(tails) - 1))
    return {
        "name": "stochastic_continuity",
        "passed": bool(finest_ok and monotone),
        "eps": float(eps),
        "deltas": deltas,
        "tails": tails,
        "sample_count": count,
    }


def refinement_study(integrand_factory, ensemble: PathEnsemble,
                     halvings: int = 3, threads: int = 1) -> dict:
    """Mean-square gap between successive grid resolutions on shared noise.

    The ensemble grid is the finest level; coarser levels integrate the
    subsampled path, so every level sees the same underlying increments.
    integrand_factory(grid) builds the integrand at each resolution.
    """
    grid = ensemble.grid
    k = grid.steps
    if halvings < 1 or k % (2 ** halvings) != 0:
        raise GridError("grid does not support that many halvings")
    factors = [2 ** (halvings - j) for j in range(halvings + 1)]
    grids = [TimeGrid(grid.points[::f]) for f in factors]
    integrands = [integrand_factory(g) for g in grids]

    def fn(batch):
        finals = []
        for f, g, s in zip(factors, grids, integrands):
            eta = integral_paths(s, g, batch.w[:, ::f])
            finals.append(eta[:, -1].reshape(batch.count, -1))
        sums = []
        for a, b in zip(finals[:-1], finals[1:]):
            d2 = np.sum((b - a) ** 2, axis=1)
            sums.append((d2.sum(), (d2 * d2).sum()))
        return sums, batch.count

    parts = ensemble.map_batches(fn, threads)
    count = int(sum(p[1] for p in parts))
    gaps, ses = [], []
    for i in range(halvings):
        rep = McReport.from_sums(_tree_sum([p[0][i][0] for p in parts]),
                                 _tree_sum([p[0][i][1] for p in parts]),
                                 count, ensemble.seed)
        gaps.append(float(rep.estimate))
        ses.append(float(rep.standard_error))
    steps = [k // f for f in factors]
    decays = all(gaps[i + 1] <= 0.8 * gaps[i] + 4.0 * (ses[i] + ses[i + 1])
                 for i in range(len(gaps) - 1))
    return {
        "name": "refinement",
        "passed": bool(decays),
        "grid_steps": steps,
        "mean_square_gaps": gaps,
        "standard_errors": ses,
        "sample_count": count,
    }


def export_integrals_csv(integrand: StepIntegrand, ensemble: PathEnsemble,
                         path, max_replicas: int = 10) -> int:
    """Write up to max_replicas integral paths in the path CSV schema."""
    import csv as _csv

    _require_match(integrand, ensemble)
    written = 0
    with open(path, "w", newline="") as f:
        wtr = _csv.writer(f)
        from .paths import CSV_HEADER
        wtr.writerow(CSV_HEADER)
        remaining = min(max_replicas, ensemble.n_replicas)
        for batch in ensemble.batches():
            if remaining <= 0:
                break
            take = min(remaining, batch.count)
            eta = integral_paths(integrand, ensemble.grid, batch.w[:take])
            write_path_rows(wtr, ensemble.grid, eta, batch.start)
            remaining -= take
            written += take
    return written
