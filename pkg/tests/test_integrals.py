"""Tests for the stochastic integral layer."""

import numpy as np
import pytest

from cdstoch.algebra import AlgebraError, CdReal, LevelMismatch, dim_of
from cdstoch.integrals import (
    IntegralPath,
    PredictableIntegrand,
    StepIntegrand,
    bound_check,
    chebyshev_check,
    continuity_check,
    elementary_integral,
    export_integrals_csv,
    integral_paths,
    isometry_check,
    lookahead_control,
    martingale_check,
    predictable_integral,
    refinement_study,
    zero_mean_check,
)
from cdstoch.linops import (
    ComplexCovariance,
    CovarianceOperator,
    RightLinearOp,
    vec_norm2,
)
from cdstoch.paths import CdPath, GridError, PathEnsemble, TimeGrid


def one_real(level):
    c = np.zeros(dim_of(level))
    c[0] = 1.0
    return CdReal(level, c)


def unit_real(level, axis):
    c = np.zeros(dim_of(level))
    c[axis] = 1.0
    return CdReal(level, c)


def identity_cov(level, n):
    return CovarianceOperator.simple(one_real(level), np.eye(n))


def complexified_identity(level, n):
    u = identity_cov(level, n)
    return ComplexCovariance(u, u)


def small_ensemble(level=1, n=1, steps=16, seed=11, replicas=8,
                   complexified=True):
    grid = TimeGrid.uniform(0.0, 1.0, steps)
    u = complexified_identity(level, n) if complexified else identity_cov(level, n)
    return PathEnsemble(grid, u, None, seed=seed, n_replicas=replicas)


def random_op(rng, level, h, n):
    dim = dim_of(level)
    return RightLinearOp.from_blocks(
        level,
        s00=rng.normal(size=(h, n, dim)),
        s01=rng.normal(size=(h, n, dim)),
        s10=rng.normal(size=(h, n, dim)),
        s11=rng.normal(size=(h, n, dim)),
    )


# --------------------------------------------------------- elementary values

def test_identity_integrand_telescopes():
    ens = small_ensemble(level=2, n=2, replicas=6)
    s = StepIntegrand.constant(ens.grid, RightLinearOp.identity(2, 2))
    for batch in ens.batches():
        eta = integral_paths(s, ens.grid, batch.w)
        assert np.array_equal(eta, batch.w - batch.w[:, :1])


def test_single_step_truncation():
    ens = small_ensemble(level=1, n=2, steps=8, seed=3)
    grid = ens.grid
    rng = np.random.default_rng(0)
    op = random_op(rng, 1, 3, 2)
    part = TimeGrid(np.array([grid.points[0], grid.points[1]]))
    s = StepIntegrand.constant(part, op)
    batch = next(ens.batches())
    path = CdPath(1, grid, batch.w[0])
    inc = (batch.w[0, 1] - batch.w[0, 0]).reshape(-1)
    expected = op.apply_vec(inc)
    for t in (grid.points[1], grid.points[4], grid.b):
        got = elementary_integral(s, path, float(t))
        assert np.allclose(got.data.reshape(-1), expected, atol=1e-14)
    at_a = elementary_integral(s, path, grid.a)
    assert not at_a.data.any()


def test_partition_must_lie_on_grid():
    ens = small_ensemble(steps=8)
    part = TimeGrid(np.array([0.0, 0.3, 1.0]))
    s = StepIntegrand.constant(part, RightLinearOp.identity(1, 1))
    batch = next(ens.batches())
    with pytest.raises(GridError):
        integral_paths(s, ens.grid, batch.w)


def test_slot_count_must_match_partition():
    part = TimeGrid(np.array([0.0, 0.5, 1.0]))
    with pytest.raises(GridError):
        StepIntegrand(part, (RightLinearOp.identity(1, 1),), 1, 1, 1)


def test_additivity_over_adjacent_windows():
    ens = small_ensemble(level=1, n=2, steps=16, seed=7)
    grid = ens.grid
    rng = np.random.default_rng(1)
    part = TimeGrid(grid.points[::4])
    ops = [random_op(rng, 1, 2, 2) for _ in range(part.steps)]
    s = StepIntegrand.from_ops(part, ops)
    batch = next(ens.batches())
    path = CdPath(1, grid, batch.w[0])
    c = float(grid.points[8])
    whole = elementary_integral(s, path, grid.b).data
    left = elementary_integral(s.restrict(grid.a, c), path, c).data
    right = elementary_integral(s.restrict(c, grid.b), path, grid.b).data
    assert np.allclose(whole, left + right, atol=1e-12)


def test_linearity_in_the_integrand():
    ens = small_ensemble(level=1, n=1, steps=8, seed=9)
    grid = ens.grid
    rng = np.random.default_rng(2)
    s1 = StepIntegrand.constant(grid, random_op(rng, 1, 1, 1))
    s2 = StepIntegrand.constant(grid, random_op(rng, 1, 1, 1))
    batch = next(ens.batches())
    joint = integral_paths(s1 + s2, grid, batch.w)
    split = (integral_paths(s1, grid, batch.w)
             + integral_paths(s2, grid, batch.w))
    assert np.allclose(joint, split, atol=1e-12)


def test_integrand_sum_validates_shapes():
    grid = TimeGrid.uniform(0.0, 1.0, 4)
    other = TimeGrid.uniform(0.0, 2.0, 4)
    s = StepIntegrand.constant(grid, RightLinearOp.identity(1, 1))
    with pytest.raises(GridError):
        s + StepIntegrand.constant(other, RightLinearOp.identity(1, 1))
    with pytest.raises(LevelMismatch):
        s + StepIntegrand.constant(grid, RightLinearOp.identity(2, 1))
    with pytest.raises(AlgebraError):
        s + lookahead_control(grid, 1, 1)


def test_weights_must_be_per_replica():
    ens = small_ensemble(steps=4, replicas=6)
    grid = ens.grid
    op = RightLinearOp.identity(1, 1)
    s = StepIntegrand(grid, tuple(
        (lambda view: (np.ones(3), op)) for _ in range(grid.steps)
    ), 1, 1, 1)
    batch = next(ens.batches())
    with pytest.raises(AlgebraError):
        integral_paths(s, grid, batch.w)


def test_slot_operator_shape_is_checked():
    grid = TimeGrid.uniform(0.0, 1.0, 4)
    s = StepIntegrand(grid, (RightLinearOp.identity(1, 1),) * 4, 1, 1, 2)
    ens = small_ensemble(steps=4)
    batch = next(ens.batches())
    with pytest.raises(LevelMismatch):
        integral_paths(s, grid, batch.w)


def test_integral_path_type():
    ens = small_ensemble(level=1, n=1, steps=8, replicas=4)
    s = StepIntegrand.constant(ens.grid, RightLinearOp.identity(1, 1))
    batch = next(ens.batches())
    ip = IntegralPath.compute(s, ens.grid, batch.w)
    assert not ip.at(ens.grid.a).any()
    assert np.array_equal(ip.at(ens.grid.b), ip.values[:, -1])
    bad = ip.values.copy()
    bad[:, 0] = 1.0
    with pytest.raises(AlgebraError):
        IntegralPath(1, 1, ens.grid, bad)


# ----------------------------------------------------------- predictability

def test_predictable_matches_elementary_for_constant():
    ens = small_ensemble(level=1, n=2, steps=8, seed=5)
    op = RightLinearOp.identity(1, 2)
    pred = PredictableIntegrand(1, 2, 2, lambda idx, view: op, bound=16.0)
    step = StepIntegrand.constant(ens.grid, op)
    batch = next(ens.batches())
    path = CdPath(1, ens.grid, batch.w[0])
    a = predictable_integral(pred, path, ens.grid.b)
    b = elementary_integral(step, path, ens.grid.b)
    assert np.array_equal(a.data, b.data)


def test_slots_see_only_the_prefix():
    ens = small_ensemble(steps=8, replicas=4)
    seen = []

    def evaluator(idx, view):
        seen.append((idx, view.shape[1]))
        return RightLinearOp.identity(1, 1)

    pred = PredictableIntegrand(1, 1, 1, evaluator, bound=8.0)
    batch = next(ens.batches())
    integral_paths(pred.as_step(ens.grid), ens.grid, batch.w)
    assert seen == [(idx, idx + 1) for idx in range(8)]


def test_predictable_bound_must_be_finite():
    with pytest.raises(AlgebraError):
        PredictableIntegrand(1, 1, 1, lambda i, v: None, bound=np.inf)
    with pytest.raises(AlgebraError):
        PredictableIntegrand(1, 1, 1, lambda i, v: None, bound=-1.0)


# ------------------------------------------------------------- moment checks

def test_zero_mean_identity_and_zero():
    ens = small_ensemble(level=1, n=1, steps=16, seed=13, replicas=20000)
    s = StepIntegrand.constant(ens.grid, RightLinearOp.identity(1, 1))
    rep = zero_mean_check(s, ens, threads=2)
    assert rep["passed"]
    zero = StepIntegrand.constant(ens.grid, RightLinearOp.identity(1, 1).scaled(0.0))
    rep0 = zero_mean_check(zero, ens)
    assert rep0["passed"] and rep0["max_abs_mean"] == 0.0


def test_zero_mean_path_dependent_adapted():
    ens = small_ensemble(level=1, n=1, steps=16, seed=19, replicas=30000)
    ident = RightLinearOp.identity(1, 1)

    def bind(idx):
        return lambda view: (np.tanh(view[:, idx, 0, 0, 0]), ident)

    slots = tuple(bind(l) for l in range(ens.grid.steps))
    s = StepIntegrand(ens.grid, slots, 1, 1, 1)
    rep = zero_mean_check(s, ens, threads=2)
    assert rep["passed"], rep


def test_isometry_identity_anchor():
    ens = small_ensemble(level=1, n=1, steps=16, seed=17, replicas=30000,
                         complexified=False)
    s = StepIntegrand.constant(ens.grid, RightLinearOp.identity(1, 1))
    rep = isometry_check(s, ens, threads=2)
    assert rep["passed"]
    assert abs(rep["rhs"] - 1.0) < 1e-12


def test_isometry_unit_direction():
    level = 3
    ens = small_ensemble(level=level, n=1, steps=16, seed=23, replicas=30000,
                         complexified=False)
    op = RightLinearOp.left_mult(unit_real(level, 1), 1)
    s = StepIntegrand.constant(ens.grid, op)
    rep = isometry_check(s, ens, threads=2)
    assert rep["passed"]
    assert abs(rep["rhs"] - 1.0) < 1e-12


def test_isometry_zero_and_errors():
    ens = small_ensemble(level=1, n=1, steps=8, replicas=64,
                         complexified=False)
    zero = StepIntegrand.constant(ens.grid,
                                  RightLinearOp.identity(1, 1).scaled(0.0))
    rep = isometry_check(zero, ens)
    assert rep["passed"] and rep["lhs"] == 0.0 and rep["rhs"] == 0.0
    with pytest.raises(AlgebraError):
        isometry_check(zero, small_ensemble(steps=8, replicas=64))
    rng = np.random.default_rng(3)
    bad = StepIntegrand.constant(ens.grid, random_op(rng, 1, 1, 1))
    with pytest.raises(AlgebraError):
        isometry_check(bad, ens)


def test_bound_identity_anchor():
    ens = small_ensemble(level=1, n=1, steps=16, seed=29, replicas=30000)
    s = StepIntegrand.constant(ens.grid, RightLinearOp.identity(1, 1))
    rep = bound_check(s, ens, threads=2)
    assert rep["passed"]
    assert abs(rep["m2"] - 4.0) < 1e-12
    assert abs(rep["m3"] - 4.0) < 1e-12


def test_bound_zero_and_random_battery():
    ens = small_ensemble(level=2, n=2, steps=8, seed=31, replicas=20000)
    zero = StepIntegrand.constant(ens.grid,
                                  RightLinearOp.identity(2, 2).scaled(0.0))
    rep0 = bound_check(zero, ens)
    assert rep0["passed"] and rep0["m1"] == 0.0 and rep0["m3"] == 0.0
    rng = np.random.default_rng(4)
    for _ in range(3):
        s = StepIntegrand.constant(ens.grid, random_op(rng, 2, 2, 2))
        rep = bound_check(s, ens, threads=2)
        assert rep["passed"], rep
    with pytest.raises(AlgebraError):
        bound_check(zero, small_ensemble(level=2, n=2, steps=8,
                                         complexified=False))


def test_martingale_pass_and_lookahead_power():
    ens = small_ensemble(level=1, n=1, steps=32, seed=37, replicas=30000)
    s = StepIntegrand.constant(ens.grid, RightLinearOp.identity(1, 1))
    rep = martingale_check(s, ens, 0.5, 1.0, threads=2)
    assert rep["passed"], rep
    control = lookahead_control(ens.grid, 1, 1)
    rep2 = martingale_check(control, ens, 0.5, 1.0, threads=2)
    assert not rep2["passed"]
    assert rep2["worst_bin_z"] > 10.0


def test_martingale_zero_integrand_is_exact():
    ens = small_ensemble(level=1, n=1, steps=8, replicas=256)
    zero = StepIntegrand.constant(ens.grid,
                                  RightLinearOp.identity(1, 1).scaled(0.0))
    rep = martingale_check(zero, ens, 0.5, 1.0)
    assert rep["passed"] and rep["max_abs_mean"] == 0.0
    with pytest.raises(GridError):
        martingale_check(zero, ens, 1.0, 0.5)


def test_chebyshev_bounds():
    ens = small_ensemble(level=1, n=1, steps=16, seed=41, replicas=20000)
    s = StepIntegrand.constant(ens.grid, RightLinearOp.identity(1, 1))
    rep = chebyshev_check(s, ens, beta=1.0, alpha=1.5, threads=2)
    assert rep["passed"]
    huge = chebyshev_check(s, ens, beta=50.0, alpha=1.5)
    assert huge["passed"] and huge["empirical"] == 0.0
    rng = np.random.default_rng(6)
    for _ in range(2):
        sr = StepIntegrand.constant(ens.grid, random_op(rng, 1, 1, 1))
        beta = float(rng.uniform(0.5, 3.0))
        alpha = float(rng.uniform(0.5, 5.0))
        assert chebyshev_check(sr, ens, beta, alpha, threads=2)["passed"]
    with pytest.raises(AlgebraError):
        chebyshev_check(s, ens, beta=-1.0, alpha=1.0)
    with pytest.raises(AlgebraError):
        chebyshev_check(s, small_ensemble(complexified=False), 1.0, 1.0)


def test_continuity_ladder():
    ens = small_ensemble(level=1, n=1, steps=64, seed=43, replicas=4000)
    s = StepIntegrand.constant(ens.grid, RightLinearOp.identity(1, 1))
    rep = continuity_check(s, ens, eps=1.2, halvings=5, threads=2)
    assert rep["passed"]
    tails = rep["tails"]
    assert all(tails[i + 1] <= tails[i] for i in range(len(tails) - 1))
    assert tails[-1] < 0.01
    zero = StepIntegrand.constant(ens.grid,
                                  RightLinearOp.identity(1, 1).scaled(0.0))
    rep0 = continuity_check(zero, ens, eps=0.1, halvings=5)
    assert rep0["passed"] and max(rep0["tails"]) == 0.0
    with pytest.raises(GridError):
        continuity_check(s, ens, eps=1.0, halvings=9)


def test_refinement_of_path_dependent_integrand():
    ens = small_ensemble(level=1, n=1, steps=64, seed=47, replicas=8000)
    ident = RightLinearOp.identity(1, 1)

    def factory(grid):
        def bind(idx):
            def slot(view):
                flat = view[:, idx].reshape(view.shape[0], -1)
                return np.sqrt(vec_norm2(flat)), ident

            return slot

        slots = tuple(bind(l) for l in range(grid.steps))
        return StepIntegrand(grid, slots, 1, 1, 1)

    rep = refinement_study(factory, ens, halvings=3, threads=2)
    assert rep["passed"], rep
    gaps = rep["mean_square_gaps"]
    assert gaps[-1] < gaps[0]

    const = refinement_study(
        lambda g: StepIntegrand.constant(g, ident), ens, halvings=2)
    assert max(const["mean_square_gaps"]) < 1e-20


def test_csv_export(tmp_path):
    ens = small_ensemble(level=1, n=1, steps=4, replicas=7)
    s = StepIntegrand.constant(ens.grid, RightLinearOp.identity(1, 1))
    out = tmp_path / "eta.csv"
    written = export_integrals_csv(s, ens, out, max_replicas=3)
    assert written == 3
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "replica,t,component,basis,imag,value"
    assert len(lines) == 1 + 3 * 5 * 1 * 2 * 2
