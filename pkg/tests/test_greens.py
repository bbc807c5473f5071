import math

import numpy as np
import pytest

from wiggleguide import (
    BoundViolation,
    PreconditionError,
    SpectralGapError,
    WeightFunction,
    assemble,
    ct_bound,
    ct_measure,
    ct_sweep,
    decay_rate_fit,
    grid_for,
    make_spec,
    pa_bound_report,
    smallest_eigs,
    spec_with_epsilon,
    weight_eval,
)
from wiggleguide.greens import final_bound


def test_weight_function_values():
    J = WeightFunction(6.0)
    assert weight_eval(J, 0.0) == (0.0, 0.0, 6.0)
    assert weight_eval(J, 1.0) == pytest.approx((1.0, 1.0, 0.0))
    assert weight_eval(J, 6.0) == pytest.approx((6.0, 0.0, -6.0))
    assert weight_eval(J, 3.3) == pytest.approx((3.3, 1.0, 0.0))
    with pytest.raises(PreconditionError):
        weight_eval(J, 6.5)
    with pytest.raises(PreconditionError):
        WeightFunction(1.5)


def test_weight_function_sup_bounds_and_monotonicity():
    J = WeightFunction(5.0)
    t = np.linspace(0, 5, 100_001)
    v, d1, d2 = weight_eval(J, t)
    assert np.abs(d1).max() <= 1.25 + 1e-12
    assert np.abs(d2).max() <= 6 + 1e-12
    assert np.all(np.diff(v) >= 0)


def test_weight_function_point_symmetry():
    J = WeightFunction(7.0)
    t = np.linspace(0, 7, 71)
    assert np.allclose(J(t)[0] + J(7 - t)[0], 7.0)


@pytest.mark.parametrize("x", [1.0, 4.0])
def test_weight_function_junction_smoothness(x):
    J = WeightFunction(5.0)
    h = 1e-7
    left = (J(x)[0] - J(x - h)[0]) / h
    right = (J(x + h)[0] - J(x)[0]) / h
    assert abs(left - right) < 1e-6  # C^2 junction: mismatch O(h)
    assert abs(J(x - 1e-12)[1] - J(x + 1e-12)[1]) < 1e-10
    assert abs(J(x - 1e-12)[2] - J(x + 1e-12)[2]) < 1e-10


def test_ct_bound_values():
    assert ct_bound(0.3, 0.0) == pytest.approx(2 / 0.3)
    assert ct_bound(0.5, 48.0) == pytest.approx(4 * math.exp(-1))
    with pytest.raises(PreconditionError):
        ct_bound(1.5, 1.0)
    with pytest.raises(PreconditionError):
        ct_bound(0.5, -1.0)


def test_ct_bound_at_gap_half_over_root_n():
    # (2/delta) e^{-delta d/24} with delta = 1/(2 sqrt N) is 4 sqrt N e^{-d/(48 sqrt N)}:
    # twice the final bound, and the bound is decreasing in delta
    for N in (1, 4, 9, 64):
        d = 10.0
        delta = 1 / (2 * math.sqrt(N))
        assert ct_bound(delta, d) == pytest.approx(2 * final_bound(N, d), rel=1e-14)
        assert ct_bound(min(1.0, 1.3 * delta), d) <= ct_bound(delta, d)


def test_pa_chain():
    assert pa_bound_report(1.0, 1.0) <= 0.5
    assert pa_bound_report(0.01, 2.0) <= 0.5
    with pytest.raises(PreconditionError):
        pa_bound_report(0.5, 2.5)
    with pytest.raises(PreconditionError):
        pa_bound_report(0.0, 1.0)


def test_pa_chain_violation_raised(monkeypatch):
    import wiggleguide.greens as gr

    monkeypatch.setattr(gr.math, "sqrt", lambda x: 1e3)
    with pytest.raises(BoundViolation):
        gr.pa_bound_report(0.5, 1.0)


def test_ct_measure_straight_guide(bump):
    s = make_spec(bump, 0.0, np.full(8, 0.5))
    g = grid_for(s, 4, 9)
    rep = ct_measure(s, g, 0.5, 2.0, 2.0)
    assert rep.dist == 4.0 and rep.residual_ok
    assert 0 < rep.measured_norm <= rep.proof_bound
    assert rep.delta == pytest.approx(smallest_eigs(assemble(s, g), 1).eigenvalues[0] - 0.5)


def test_ct_measure_touching_strips(bump):
    s = make_spec(bump, 0.0, np.full(4, 0.5))
    rep = ct_measure(s, grid_for(s, 4, 9), 0.5, 2.0, 2.0)
    assert rep.dist == 0.0
    assert rep.measured_norm <= 1 / rep.delta + 1e-9
    assert rep.proof_bound == pytest.approx(2 / rep.delta)


def test_ct_measure_preconditions(bump):
    s = make_spec(bump, 0.0, np.full(4, 0.5))
    g = grid_for(s, 4, 9)
    with pytest.raises(PreconditionError):
        ct_measure(s, g, 0.5, 3.0, 2.0)
    with pytest.raises(PreconditionError):
        ct_measure(s, g, 0.5, 1.0, 2.0)
    lam1 = smallest_eigs(assemble(s, g), 1).eigenvalues[0]
    with pytest.raises(SpectralGapError):
        ct_measure(s, g, lam1, 2.0, 2.0)
    with pytest.raises(PreconditionError):
        ct_measure(s, g, -1.0, 2.0, 2.0)


def test_sweep_decays_and_is_monotone(bump, rng):
    s = spec_with_epsilon(bump, rng.random(8), 0.05)
    g = grid_for(s, 8, 9)
    alphas = [2.0, 2.5, 3.0, 3.5, 4.0]
    lam = smallest_eigs(assemble(s, g), 1).eigenvalues[0] - 1e-3
    reps = ct_sweep(s, g, lam, alphas)
    # growing alpha = beta enlarges both strips and shrinks dist
    by_dist = sorted(reps, key=lambda r: r.dist)
    measured = [r.measured_norm for r in by_dist]
    assert all(b <= a + 1e-8 for a, b in zip(measured, measured[1:]))
    assert all(r.bound_ok for r in reps)
    assert decay_rate_fit(reps) >= reps[0].delta / 24
    # the norm times the gap stays bounded near the ground state
    assert all(r.measured_norm * r.delta <= 2 for r in reps)


def test_sweep_parallel_identical(bump):
    s = spec_with_epsilon(bump, np.linspace(0.2, 1, 8), 0.05)
    g = grid_for(s, 4, 9)
    a = ct_sweep(s, g, 0.9, [2.0, 3.0], workers=1)
    b = ct_sweep(s, g, 0.9, [2.0, 3.0], workers=2)
    assert [r.measured_norm for r in a] == [r.measured_norm for r in b]
