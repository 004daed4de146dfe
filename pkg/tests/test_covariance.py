import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from convecta.covariance import (CONVERGENT, DIVERGENT, Classification, Constant, Custom, Exponential,
                                 LogBoundary, PowerLaw, classify_base, classify_dalang, classify_holder,
                                 evaluate, max_holder_band, model_from_json, shell_sums)


def test_evaluate_examples():
    assert evaluate(PowerLaw(1.0), 0.25) == 4.0
    assert evaluate(Constant(1.0), 7.0) == 1.0
    assert evaluate(PowerLaw(0.5), 4.0) == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(ValueError):
        evaluate(PowerLaw(1.0), 0.0)


def test_power_law_exponent_range():
    for a in (0.0, 2.0, 2.5, -1.0):
        with pytest.raises(ValueError):
            PowerLaw(a)


@given(st.floats(0.05, 1.95), st.floats(1e-6, 1e2))
def test_models_positive(a, r):
    for model in (PowerLaw(a), Constant(2.0), Exponential(0.7), LogBoundary(0.5)):
        assert evaluate(model, r) > 0.0


def test_log_boundary_continuous_at_scale():
    m = LogBoundary(0.5)
    assert evaluate(m, 0.5 * (1 - 1e-12)) == pytest.approx(evaluate(m, 0.5 * (1 + 1e-12)), rel=1e-9)


def test_json_round_trip_and_rejections():
    for model in (PowerLaw(1.25), Constant(3.0), Exponential(2.0), LogBoundary(1.0)):
        assert model_from_json(json.loads(json.dumps(model.to_json()))) == model
    assert model_from_json({"kind": "power_law", "alpha_f": 1.0}) == PowerLaw(1.0)
    with pytest.raises(ValueError):
        model_from_json({"kind": "bessel"})
    with pytest.raises(ValueError):
        model_from_json({"kind": "power_law", "alpha_f": 1.0, "scale": 2})
    with pytest.raises(ValueError):
        model_from_json({"kind": "power_law", "alpha_f": 2.5})


def test_classification_value_iff_convergent():
    with pytest.raises(ValueError):
        Classification(CONVERGENT, None)
    with pytest.raises(ValueError):
        Classification(DIVERGENT, 1.0)


def test_classify_base_examples():
    assert classify_base(PowerLaw(1.0)).convergent
    assert classify_base(PowerLaw(1.99)).convergent
    c = classify_base(LogBoundary(1.0))
    assert c.convergent
    # int_0^1 dr / (r ln^2(e/r)) = int_1^inf du / u^2 = 1
    assert c.value == pytest.approx(1.0, rel=2e-3)


def test_classify_dalang_examples():
    assert classify_dalang(PowerLaw(1.0)).convergent
    assert classify_dalang(LogBoundary(1.0)).verdict == DIVERGENT
    c = classify_dalang(Constant(1.0))
    assert c.convergent and c.value == pytest.approx(0.25, rel=1e-6)


def test_classify_holder_examples():
    assert classify_holder(PowerLaw(1.0), 0.9).convergent
    assert classify_holder(PowerLaw(1.5), 0.6).verdict == DIVERGENT
    assert classify_holder(Constant(1.0), 0.5).convergent
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            classify_holder(PowerLaw(1.0), bad)


def test_max_holder_band_examples():
    assert max_holder_band(PowerLaw(1.0)) == pytest.approx((0.0, 0.25))
    assert max_holder_band(PowerLaw(1.5)) == pytest.approx((0.0, 0.125))
    assert max_holder_band(Constant(1.0)) == pytest.approx((0.0, 0.25), abs=1e-6)
    assert max_holder_band(LogBoundary(1.0)) is None


def test_dalang_implies_base_on_family():
    family = [PowerLaw(a) for a in (0.25, 1.0, 1.75)] + [Constant(1.0), Exponential(1.0), LogBoundary(1.0)]
    for model in family:
        if classify_dalang(model).convergent:
            assert classify_base(model).convergent


@pytest.mark.parametrize("a", [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75])
def test_power_law_analytic_agrees_with_shells(a):
    shells = Custom(lambda r, a=a: r ** -a, name=f"r^-{a}", singularity=a)
    for fn in (classify_base, classify_dalang):
        exact, num = fn(PowerLaw(a)), fn(shells)
        assert exact.verdict == num.verdict == CONVERGENT
        assert num.value == pytest.approx(exact.value, rel=1e-6)
    for alpha in (0.1, 0.5, 0.9):
        e = 2.0 - alpha - a
        if abs(e) < 0.2:
            continue  # near the boundary the shells honestly report Inconclusive
        assert classify_holder(shells, alpha).verdict == classify_holder(PowerLaw(a), alpha).verdict


def test_shell_value_matches_adaptive_quadrature_plus_tail():
    g = lambda r: r * math.log(1 / r) * math.exp(-r)  # noqa: E731
    c = classify_dalang(Exponential(1.0))
    ref = integrate.quad(g, 1e-8, 1.0, epsabs=0, epsrel=1e-12, limit=500, points=[1e-6, 1e-4, 1e-2])[0]
    tail = 0.5 * 1e-16 * (math.log(1e8) + 0.5)  # int_0^1e-8 r ln(1/r) dr, exp(-r) = 1 there
    assert c.value == pytest.approx(ref + tail, rel=1e-6)


def test_shell_sums_exact_for_power():
    rows = shell_sums(lambda r: r ** 0.5, 1.0, 10)
    assert [row[0] for row in rows] == list(range(10))
    for k, lo, hi, s in rows:
        assert (lo, hi) == (2.0 ** -(k + 1), 2.0 ** -k)
        assert s == pytest.approx((hi**1.5 - lo**1.5) / 1.5, rel=1e-12)
