import math

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad

from wiggleguide import (
    constants,
    deterministic_bound,
    first_order_term,
    fourier_coefficients,
    m_sum_closed_form,
    make_bump,
    make_spec,
    margin_constant,
    predicted_shift,
    second_order_bracket,
    second_order_coefficient,
    spec_with_epsilon,
)

GPRIME_SQ = 32 / 3465
GTILDE_SQ = 1084 / 4729725


def unit_omega(rng, N):
    w = rng.random(N)
    return w / w.max()


def test_zero_disorder_gives_zero_series(bump):
    s = make_spec(bump, 0.0, [0.3, 0.4])
    series = fourier_coefficients(s, 64)
    assert series.G0 == 0.0 and not series.Gn.any()
    assert second_order_coefficient(series, s.L)[0] == 0.0
    assert predicted_shift(s) == 0.0
    assert first_order_term(s) == 0.0
    rep = deterministic_bound(s)
    assert rep.lower_bound == 0.0 and rep.predicted_shift == 0.0 and rep.premise_ok


def test_single_cell_mean_coefficient(bump):
    s = make_spec(bump, 0.1, [1.0])
    assert fourier_coefficients(s, 8).G0 == pytest.approx(2 / 105, rel=1e-13)


def test_coefficients_match_adaptive_quadrature(bump, rng):
    s = make_spec(bump, 0.2, rng.random(3))
    series = fourier_coefficients(s, 40)
    for n in (1, 2, 7, 23, 40):
        ref = sum(
            quad(lambda x: s.unit_profile(x) * math.cos(math.pi * n * x / s.L), k, k + 1,
                 epsabs=1e-14, epsrel=1e-13, limit=200)[0]
            for k in range(3)) * 2 / s.L
        assert series.Gn[n - 1] == pytest.approx(ref, abs=1e-13)


def test_coefficients_respect_decay_bound(bump, rng):
    s = make_spec(bump, 0.2, rng.random(4))
    series = fourier_coefficients(s)
    n = np.arange(1, series.n_max + 1)
    assert np.all(np.abs(series.Gn) <= series.coefficient_bound(n) + 1e-15)


def test_parseval(bump, rng):
    for _ in range(20):
        N = int(rng.integers(1, 5))
        s = make_spec(bump, 0.1, unit_omega(rng, N))
        series = fourier_coefficients(s)
        x, w = np.polynomial.legendre.leggauss(40)
        total = 0.0
        for k in range(N):
            t = k + 0.5 * (x + 1)
            total += 0.5 * w @ (s.unit_profile(t) - series.G0) ** 2
        # the flat part outside the bumps contributes G0^2 per unit length; integrals
        # over whole cells capture it because the profile is zero there
        parseval = 0.5 * s.L * np.sum(series.Gn**2)
        assert abs(parseval - total) <= series.tail_bound + 1e-15
        assert parseval + series.tail_bound >= GTILDE_SQ * (1 - 1e-12)


@pytest.mark.parametrize("b", [0.05, 0.5, 0.999, 1.0, 1.001, 2.4674011002723395, 9.0, 1e4])
def test_m_sum_closed_form(b):
    mpmath.mp.dps = 30
    ref = mpmath.nsum(lambda m: m**2 / ((4 * m**2 - 1) * (4 * m**2 - 1 + b)), [1, mpmath.inf])
    assert m_sum_closed_form(b) == pytest.approx(float(ref), rel=1e-13)


def test_series_positive_and_tails_honest(bump, rng):
    s = make_spec(bump, 0.1, unit_omega(rng, 3))
    series = fourier_coefficients(s)
    S, tail = second_order_coefficient(series, s.L, 64)
    S2, _ = second_order_coefficient(series, s.L, 128)
    S_exact, tail_exact = second_order_coefficient(series, s.L, None)
    assert S > 0
    assert 0 <= S2 - S <= tail
    assert S <= S_exact <= S + tail + tail_exact
    big = fourier_coefficients(s, 2 * series.n_max)
    S_big, _ = second_order_coefficient(big, s.L, None)
    assert abs(S_big - S_exact) <= tail_exact + 1e-15


def test_margin_against_lower_constant(bump, rng):
    for N in (1, 2, 4):
        for _ in range(10):
            s = make_spec(bump, 0.1, unit_omega(rng, N))
            S, tail = second_order_coefficient(fourier_coefficients(s), s.L)
            assert S * s.L**3 / GTILDE_SQ >= margin_constant() - tail * s.L**3 / GTILDE_SQ
    assert margin_constant() == pytest.approx(1.657653, abs=1e-6)
    assert margin_constant() > 1.5


def test_cancellation_identity(bump, rng):
    # S equals ||g'||^2/L minus the second-order resolvent bracket
    for N in (1, 2, 4):
        s = make_spec(bump, 0.1, unit_omega(rng, N))
        series = fourier_coefficients(s)
        S, _ = second_order_coefficient(series, s.L, None)
        bracket = second_order_bracket(series, s.L, 16384)
        assert S == pytest.approx(GPRIME_SQ / s.L - bracket, rel=1e-10)


def test_first_order_term_value(bump):
    s = spec_with_epsilon(bump, [1.0], 0.01)
    assert first_order_term(s) == pytest.approx(-0.01 * GPRIME_SQ, rel=1e-13)


def test_mirror_relabeling_invariance(bump, rng):
    w = unit_omega(rng, 4)
    a = second_order_coefficient(fourier_coefficients(make_spec(bump, 0.1, w)), 4.0, None)[0]
    b = second_order_coefficient(fourier_coefficients(make_spec(bump, 0.1, w[::-1])), 4.0,
                                 None)[0]
    assert a == pytest.approx(b, rel=1e-12)


def test_shift_is_quadratic_in_epsilon(bump):
    w = [0.3, 1.0, 0.6]
    p1 = predicted_shift(spec_with_epsilon(bump, w, 1e-3))
    p2 = predicted_shift(spec_with_epsilon(bump, w, 2e-3))
    assert p2 == pytest.approx(4 * p1, rel=1e-12)


def test_gtilde_scales_quadratically_with_profile():
    b = make_bump("skew_polynomial", 1.0)
    c = constants(b)
    t, w = np.polynomial.legendre.leggauss(30)
    t = 0.5 * (t + 1)
    g = 2.0 * b.g(t)  # doubled profile
    gt = 0.5 * w @ g**2 - (0.5 * w @ g) ** 2
    assert gt == pytest.approx(4 * c.gtilde_sq, rel=1e-12)


def test_bound_report_single_cell(bump):
    gt = constants(bump).gtilde_sq
    s = spec_with_epsilon(bump, [1.0], 0.999 * 3 * gt / 5000)
    rep = deterministic_bound(s)
    assert rep.premise_threshold == pytest.approx(3 * GTILDE_SQ / 5000, rel=1e-11)
    assert rep.premise_ok
    assert not rep.fem_resolvable
    assert rep.predicted_shift < 1e-9
    assert rep.lower_bound <= rep.predicted_shift
    assert rep.margin_ratio >= 1.5
    assert rep.neumann_factor <= 8 / (125 * math.pi**2)
    assert len(rep.third_order_bounds) == 4
    assert any("FEM resolution" in n for n in rep.notes)


def test_bound_report_attaches_fem_value(bump):
    from wiggleguide import grid_for

    s = spec_with_epsilon(bump, [0.5, 1.0], 0.05)
    rep = deterministic_bound(s, fem_grid=grid_for(s, 16, 17))
    assert 1.0 <= rep.numeric_lambda <= rep.upper_bound + 1e-2
    assert rep.as_dict()["numeric_lambda"] == rep.numeric_lambda
