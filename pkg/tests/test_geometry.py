import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convecta.geometry import (FlowConfig, classical_green, eta, eta_inverse, green, green_array,
                               moving_frame, rho, support_contains)
from oracles import green_rho_form

mach = st.floats(0.0, 0.95)
coord = st.floats(-3.0, 3.0)
times = st.floats(0.01, 3.0)


def test_flow_config_rejects_supersonic_and_bad_horizon():
    with pytest.raises(ValueError):
        FlowConfig(1.0, 1.0)
    with pytest.raises(ValueError):
        FlowConfig(-0.1, 1.0)
    with pytest.raises(ValueError):
        FlowConfig(0.5, 0.0)
    assert FlowConfig(0.5, 2.0).reach == pytest.approx(4.0)


def test_rho_examples():
    assert rho(0.0, 0.0, 0.5) == 0.0
    assert rho(1.0, 0.0, 0.0) == 1.0
    assert rho(1.0, 0.0, 0.5) == pytest.approx(4.0 / 3.0, rel=1e-15)


def test_eta_examples():
    assert eta(0.0, 0.5) == pytest.approx(4.0 / 3.0, rel=1e-15)
    assert eta(math.pi / 2, 0.5) == pytest.approx(2.0 / math.sqrt(3.0), rel=1e-15)
    assert eta(math.pi / 4, 0.0) == pytest.approx(1.0, rel=1e-15)


def test_eta_bounds_and_period_on_random_draws():
    rng = np.random.default_rng(1)
    th = rng.uniform(-10, 10, 10_000)
    m = rng.uniform(0, 0.99, 10_000)
    b = 1 - m * m
    e = eta(th, m)
    assert np.all(e >= 1 / np.sqrt(b) * (1 - 1e-14))
    assert np.all(e <= 1 / b * (1 + 1e-14))
    np.testing.assert_allclose(eta(th + np.pi, m), e, rtol=1e-13)


@given(st.floats(0.0, math.pi / 2), st.floats(0.01, 0.95))
def test_eta_inverse_inverts_on_monotone_branch(theta, m):
    back = float(eta_inverse(eta(theta, m), m))
    assert float(eta(back, m)) == pytest.approx(float(eta(theta, m)), rel=1e-12)


def test_eta_inverse_clamps_outside_range():
    m = 0.5
    assert float(eta_inverse(10.0, m)) == 0.0
    assert float(eta_inverse(0.1, m)) == pytest.approx(math.pi / 2)


def test_support_examples():
    for m in (0.0, 0.3, 0.9):
        assert support_contains(1.0, 0.0, 0.0, m)
    assert not support_contains(1.0, 2.0, 0.0, 0.0)
    assert support_contains(1.0, 1.4, 0.0, 0.5)


def test_green_examples():
    g = green(1.0, 0.0, 0.0, 0.0)
    assert g.value == pytest.approx(1 / (2 * math.pi), rel=1e-15) and g.on_support
    g = green(1.0, 2.0, 0.0, 0.0)
    assert g.value == 0.0 and not g.on_support
    assert green(1.0, 0.5, 0.3, 0.5).value == pytest.approx(1 / (2 * math.pi * math.sqrt(0.91)), rel=1e-14)
    with pytest.raises(ValueError):
        green(0.0, 0.0, 0.0, 0.0)


def test_green_wavefront_is_flagged_singular():
    g = green(1.0, 1.0, 0.0, 0.0)
    assert g.on_support and g.singular and g.value == 0.0


def test_moving_frame_examples():
    assert moving_frame(1.0, 0.5, 0.3, 0.5) == (0.0, 0.3)
    assert moving_frame(2.0, 1.0, 1.0, 0.25) == (0.5, 1.0)
    assert moving_frame(3.0, 0.7, -0.2, 0.0) == (0.7, -0.2)


@settings(max_examples=300)
@given(times, coord, coord, mach)
def test_green_matches_high_precision_rho_form(t, x1, x2, m):
    value, on = green_rho_form(t, x1, x2, m)
    g = green(t, x1, x2, m)
    if g.singular:
        return
    assert g.on_support == on
    if on:
        # the discriminant cancels near the front; the bound scales with its conditioning
        q = (t + rho(x1, x2, m)) ** 2
        cond = q / max((t - rho(x1, x2, m) + m * x1 / (1 - m * m)) ** 2, 1e-300)
        assert g.value == pytest.approx(value, rel=1e-14 * max(1.0, cond))


@settings(max_examples=300)
@given(times, coord, coord, mach)
def test_support_monotone_in_time(t, x1, x2, m):
    if support_contains(t, x1, x2, m):
        assert support_contains(t * 1.5, x1, x2, m)


def test_m_zero_reduces_to_classical_kernel():
    rng = np.random.default_rng(2)
    t = rng.uniform(0.1, 2, 1000)
    r = rng.uniform(0, 2, 1000)
    th = rng.uniform(0, 2 * np.pi, 1000)
    val, on, sing = green_array(t, r * np.cos(th), r * np.sin(th), 0.0)
    ok = ~sing
    np.testing.assert_allclose(val[ok], classical_green(t, r)[ok], rtol=1e-12)


def test_radial_monotonicity_in_moving_frame():
    m, t = 0.6, 1.0
    r = np.linspace(0, 0.999, 200)
    for th in np.linspace(0, 2 * np.pi, 9):
        y1, y2 = r * np.cos(th), r * np.sin(th)
        val, _, _ = green_array(t, y1 + m * t, y2, m)
        assert np.all(np.diff(val) >= -1e-15 * val[:-1])
