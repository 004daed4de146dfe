import math

import mpmath as mp
import numpy as np
import pytest

from convecta.covariance import Constant, LogBoundary, PowerLaw
from convecta.geometry import FlowConfig
from convecta.quadrature import (SPACE_SHIFT, TIME_SHIFT, ExistenceError, IncrementSpec, QuadratureValue,
                                 cross_moment, fit_modulus_constants, increment_moment, modulus_bound,
                                 pair_kernel, pair_kernel_numeric, second_moment, theorem1_lower,
                                 theorem1_upper, time_kernel_exact, time_kernel_log_bounds)
from oracles import spectral_increment_power, spectral_second_moment_power


def _mp_time_kernel(a, b, s0, s1):
    with mp.workdps(30):
        f = lambda s: 1 / mp.sqrt((s - a) * (s + a) * (s - b) * (s + b))  # noqa: E731
        return float(mp.quad(f, [s0, (s0 + s1) / 2, s1]))


# -- inner time integral ---------------------------------------------------------

def test_time_kernel_degenerate_radii():
    q = time_kernel_exact(0.0, 0.0, 1.0, 2.0)
    assert q.value == pytest.approx(0.5, rel=1e-15) and q.converged


def test_time_kernel_equal_radii_partial_fractions():
    b, s0, s1 = 0.5, 0.6, 1.5
    ref = (math.log((s1 - b) / (s1 + b)) - math.log((s0 - b) / (s0 + b))) / (2 * b)
    assert time_kernel_exact(b, b, s0, s1).value == pytest.approx(ref, rel=1e-14)
    with pytest.raises(ValueError):
        time_kernel_exact(b, b, b, s1)  # log divergence at the lower end


@pytest.mark.parametrize("a,b,s0,s1", [(0.3, 0.6, 0.6, 1.0), (0.0, 0.6, 0.6, 1.0), (0.59, 0.6, 0.6, 3.0),
                                       (0.1, 0.2, 0.5, 0.7)])
def test_time_kernel_matches_tanh_sinh(a, b, s0, s1):
    q = time_kernel_exact(a, b, s0, s1)
    assert q.converged
    assert q.value == pytest.approx(_mp_time_kernel(a, b, s0, s1), rel=1e-11)


def test_time_kernel_rejects_bad_ordering():
    for args in ((0.6, 0.3, 0.6, 1.0), (0.3, 0.6, 0.5, 1.0), (0.3, 0.6, 0.6, 0.6), (-0.1, 0.6, 0.6, 1.0)):
        with pytest.raises(ValueError):
            time_kernel_exact(*args)


def test_log_bounds_example():
    lo, hi = time_kernel_log_bounds(0.3, 0.6, 1.0)
    exact = time_kernel_exact(0.3, 0.6, 0.6, 1.0).value
    assert lo <= exact <= hi


def test_log_bounds_sandwich_on_random_draws():
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        s1 = rng.uniform(0.05, 5.0)
        b = s1 * rng.uniform(1e-3, 1 - 1e-6)
        a = b * rng.uniform(0.0, 1 - 1e-9)
        lo, hi = time_kernel_log_bounds(a, b, s1)
        exact = time_kernel_exact(a, b, b, s1).value
        assert lo <= exact * (1 + 1e-12) and exact <= hi * (1 + 1e-12)


def test_log_bounds_track_the_log_divergence():
    # as a -> b both the exact integral and the upper bound grow like -ln(b - a)
    b, s1 = 0.5, 1.0
    ratios = []
    for gap in (1e-2, 1e-4, 1e-6, 1e-8):
        _, hi = time_kernel_log_bounds(b - gap, b, s1)
        ratios.append(hi / time_kernel_exact(b - gap, b, b, s1).value)
    assert all(1.0 <= r <= 2.0 for r in ratios)
    for fr in (0.9, 0.99, 0.999):
        _, hi = time_kernel_log_bounds(0.0, fr, 1.0)
        assert 1.0 <= hi / time_kernel_exact(0.0, fr, fr, 1.0).value <= 2.0


def test_log_bounds_near_coincident_radii_finite():
    lo, hi = time_kernel_log_bounds(0.5 - 1e-9, 0.5, 1.0)
    assert math.isfinite(lo) and math.isfinite(hi) and hi > lo > 0
    with pytest.raises(ValueError):
        time_kernel_log_bounds(0.5, 0.5, 1.0)


# -- pair kernel ------------------------------------------------------------------

@pytest.mark.parametrize("rho,t", [(0.3, 1.0), (1.2, 1.0), (1.9, 1.0)])
def test_pair_kernel_closed_form_matches_time_kernel_route(rho, t):
    num = pair_kernel_numeric(rho, t)
    assert pair_kernel(rho, t) == pytest.approx(num.value, rel=1e-7, abs=1e-10)


def test_pair_kernel_support():
    assert pair_kernel(2.0, 1.0) == 0.0
    assert pair_kernel(2.5, 1.0, 0.4) == 0.0
    assert pair_kernel(2.3, 1.0, 0.4) > 0.0


# -- second moment -----------------------------------------------------------------

@pytest.mark.parametrize("m", [0.0, 0.5])
def test_constant_covariance_gives_one_third(m):
    q = second_moment(1.0, FlowConfig(m, 1.0), Constant(1.0))
    assert q.converged and q.value == pytest.approx(1 / 3, rel=1e-10)


def test_power_law_one_is_quarter_pi():
    # f = 1/r: E X(1)^2 = pi/4 exactly
    q = second_moment(1.0, FlowConfig(0.0, 1.0), PowerLaw(1.0))
    assert q.value == pytest.approx(math.pi / 4, rel=1e-10)


@pytest.mark.parametrize("alpha,t", [(0.5, 1.0), (1.0, 0.5), (1.5, 0.25)])
def test_second_moment_matches_fourier_side(alpha, t):
    q = second_moment(t, FlowConfig(0.0, 1.0), PowerLaw(alpha))
    assert q.value == pytest.approx(spectral_second_moment_power(alpha, t), rel=1e-7)


@pytest.mark.parametrize("m", [0.25, 0.5, 0.9])
def test_frame_invariance_direct_vs_reduced(m):
    cfg = FlowConfig(m, 1.0)
    direct = second_moment(1.0, cfg, PowerLaw(1.0), method="direct")
    reduced = second_moment(1.0, cfg, PowerLaw(1.0))
    assert abs(direct.value - reduced.value) <= 2 * (direct.abs_err + reduced.abs_err)


def test_second_moment_refuses_dalang_divergent():
    with pytest.raises(ExistenceError):
        second_moment(0.5, FlowConfig(0.0, 1.0), LogBoundary(1.0))
    with pytest.raises(ValueError):
        second_moment(2.0, FlowConfig(0.0, 1.0), Constant(1.0))


# -- cross and increment moments -----------------------------------------------------

def test_cross_moment_zero_lag_is_second_moment():
    cfg = FlowConfig(0.5, 1.0)
    assert cross_moment(0.7, 0.7, (0.0, 0.0), cfg, PowerLaw(1.0)).value == pytest.approx(
        second_moment(0.7, cfg, PowerLaw(1.0)).value, rel=1e-9)


def test_cross_moment_symmetric_at_rest():
    cfg = FlowConfig(0.0, 1.0)
    a = cross_moment(1.0, 1.0, (0.3, 0.0), cfg, Constant(1.0)).value
    b = cross_moment(1.0, 1.0, (-0.3, 0.0), cfg, Constant(1.0)).value
    assert a == b


def test_cross_moment_in_flow_matches_fourier_side():
    cfg = FlowConfig(0.5, 1.1)
    c = cross_moment(1.0, 1.1, (0.0, 0.0), cfg, PowerLaw(1.0)).value
    v1 = second_moment(1.0, cfg, PowerLaw(1.0)).value
    v2 = second_moment(1.1, cfg, PowerLaw(1.0)).value
    inc = spectral_increment_power(1.0, 1.0, 0.1, 0.5, "time")
    assert c == pytest.approx((v1 + v2 - inc) / 2, rel=1e-8)


@pytest.mark.parametrize("m", [0.0, 0.5])
@pytest.mark.parametrize("h", [0.01, 0.1])
def test_time_increment_matches_fourier_side(m, h):
    q = increment_moment(IncrementSpec(TIME_SHIFT, h, 0.5), FlowConfig(m, 1.0), PowerLaw(1.0))
    assert q.value == pytest.approx(spectral_increment_power(1.0, 0.5, h, m, "time"), rel=1e-6)


@pytest.mark.parametrize("h", [0.01, 0.1])
def test_space_increment_matches_fourier_side(h):
    q = increment_moment(IncrementSpec(SPACE_SHIFT, h, 0.5), FlowConfig(0.5, 1.0), PowerLaw(1.0))
    assert q.value == pytest.approx(spectral_increment_power(1.0, 0.5, h, 0.5, "space"), rel=1e-6)


def test_space_increment_axes_agree_at_rest():
    cfg = FlowConfig(0.0, 1.0)
    a = increment_moment(IncrementSpec(SPACE_SHIFT, 0.1, 0.5, "x1"), cfg, PowerLaw(1.0)).value
    b = increment_moment(IncrementSpec(SPACE_SHIFT, 0.1, 0.5, "x2"), cfg, PowerLaw(1.0)).value
    assert a == pytest.approx(b, rel=1e-12)


def test_increment_shrinks_with_h():
    cfg = FlowConfig(0.5, 1.0)
    vals = [increment_moment(IncrementSpec(TIME_SHIFT, h, 0.5), cfg, PowerLaw(1.0)).value
            for h in (0.2, 0.1, 0.05)]
    assert vals[0] > vals[1] > vals[2] > 0.0


@pytest.mark.parametrize("m", [0.0, 0.5])
def test_increment_triangle_relation(m):
    cfg = FlowConfig(m, 1.0)
    t, h = 0.4, 0.1
    far = increment_moment(IncrementSpec(TIME_SHIFT, 2 * h, t), cfg, PowerLaw(1.0)).value
    a = increment_moment(IncrementSpec(TIME_SHIFT, h, t), cfg, PowerLaw(1.0)).value
    b = increment_moment(IncrementSpec(TIME_SHIFT, h, t + h), cfg, PowerLaw(1.0)).value
    assert 0.0 <= far <= 2 * a + 2 * b


def test_increment_spec_validation():
    with pytest.raises(ValueError):
        IncrementSpec("diagonal", 0.1, 0.5)
    with pytest.raises(ValueError):
        IncrementSpec(TIME_SHIFT, 0.0, 0.5)
    with pytest.raises(ValueError):
        increment_moment(IncrementSpec(TIME_SHIFT, 0.6, 0.5), FlowConfig(0.0, 1.0), PowerLaw(1.0))


# -- modulus bound ---------------------------------------------------------------------

def test_modulus_bound_nondecreasing_in_h_and_c2():
    cfg = FlowConfig(0.5, 1.0)
    vals = [modulus_bound(1.0, h, cfg, PowerLaw(1.0), 1.0, 1.0).value for h in (0.01, 0.04, 0.16)]
    assert vals[0] <= vals[1] <= vals[2]
    vals = [modulus_bound(1.0, 0.04, cfg, PowerLaw(1.0), 1.0, c).value for c in (0.1, 1.0, 10.0)]
    assert vals[0] <= vals[1] <= vals[2]


def test_modulus_bound_vanishes_as_h_shrinks():
    cfg = FlowConfig(0.5, 1.0)
    vals = [modulus_bound(1.0, 0.2 * 4.0**-k, cfg, PowerLaw(1.0), 1.0, 1.0).value for k in range(6)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_modulus_bound_rejects_bad_inputs():
    cfg = FlowConfig(0.5, 1.0)
    for h in (0.0, 1.0):
        with pytest.raises(ValueError):
            modulus_bound(1.0, h, cfg, PowerLaw(1.0), 1.0, 1.0)
    with pytest.raises(ValueError):
        modulus_bound(1.0, 0.1, cfg, PowerLaw(1.0), 0.0, 1.0)


def test_fitted_modulus_bound_dominates_increments():
    cfg = FlowConfig(0.5, 1.0)

    def target(h):
        return increment_moment(IncrementSpec(TIME_SHIFT, h, 0.5), cfg, PowerLaw(1.0)).value

    fit = fit_modulus_constants(cfg, PowerLaw(1.0), target)
    b = modulus_bound(1.0, 0.2, cfg, PowerLaw(1.0), fit["C1"], fit["C2"]).value
    assert b == pytest.approx(target(0.2), rel=1e-12)
    for h in (0.05, 0.1):
        assert modulus_bound(1.0, h, cfg, PowerLaw(1.0), fit["C1"], fit["C2"]).value >= target(h)


# -- comparison integrals ----------------------------------------------------------------

def test_theorem1_lower_closed_form_for_inverse_r():
    t = 0.25
    q = theorem1_lower(t, FlowConfig(0.0, 1.0), PowerLaw(1.0))
    assert q.value == pytest.approx(t * (1 + math.log(1 / t)), rel=1e-10) and q.value > 0


def test_theorem1_upper_range_widens_with_mach():
    t = 0.25
    at_rest = theorem1_upper(t, FlowConfig(0.0, 1.0), PowerLaw(1.0), C4=1.0).value
    R = 2 * t
    assert at_rest == pytest.approx(R * (2 + math.log(1 / R)), rel=1e-10)
    assert theorem1_upper(t, FlowConfig(0.5, 1.0), PowerLaw(1.0)).value > at_rest


def test_comparison_integrals_finite_for_constant():
    for t in (0.1, 0.5, 1.0):
        assert math.isfinite(theorem1_lower(t, FlowConfig(0.0, 1.0), Constant(1.0)).value)
        assert math.isfinite(theorem1_upper(t, FlowConfig(0.0, 1.0), Constant(1.0)).value)


def test_second_moment_to_lower_ratio_bounded_across_family():
    cfg = FlowConfig(0.0, 1.0)
    ratios = [second_moment(0.25, cfg, PowerLaw(a)).value / theorem1_lower(0.25, cfg, PowerLaw(a)).value
              for a in (0.5, 1.0, 1.5)]
    assert max(ratios) / min(ratios) < 10.0


# -- plumbing -----------------------------------------------------------------------------

def test_quadrature_value_invariants():
    with pytest.raises(ValueError):
        QuadratureValue(1.0, -1.0)
    assert QuadratureValue(1.0, 0.0, 3, True).to_json() == {"value": 1.0, "abs_err": 0.0, "evals": 3,
                                                            "converged": True}


def test_reevaluation_is_bit_identical():
    cfg = FlowConfig(0.5, 1.0)
    spec = IncrementSpec(SPACE_SHIFT, 0.1, 0.5, "x2")
    assert increment_moment(spec, cfg, PowerLaw(1.25)) == increment_moment(spec, cfg, PowerLaw(1.25))
    assert second_moment(0.9, cfg, PowerLaw(0.5)) == second_moment(0.9, cfg, PowerLaw(0.5))
