import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qkdgrid.analytics import (
    CgfEstimate,
    ClassDelay,
    DelayModel,
    SlaReport,
    availability,
    calibrate_prefactor,
    fallback_delay_bound,
    mean_ci,
    outage_probability,
    propagation_delay,
    reserve_depletion_is,
    reserve_depletion_mc,
    sample_delay,
    stability_margin,
    underflow_bound,
    underflow_exponent,
)
from qkdgrid.errors import NoUnderflowRisk, Unstable, UsageError
from qkdgrid.rng import stream
from qkdgrid.traffic import load_classes

prob = st.floats(0, 1, allow_nan=False)


def test_stability_margin_examples():
    assert stability_margin(100, 100, 0) == (0, True)
    assert stability_margin(100, 90, 5) == (5, True)
    assert stability_margin(100, 110, 0) == (-10, False)


def test_gaussian_exponent_oracle():
    # single-seed estimates scatter by a few percent: the root is set by draws
    # about four standard deviations into the lower tail
    ks = [underflow_exponent(stream(s, "gauss").normal(10, 5, 1_000_000)) for s in range(5)]
    assert np.median(ks) == pytest.approx(0.8, rel=0.05)


def test_exponent_signals():
    with pytest.raises(NoUnderflowRisk):
        underflow_exponent(np.full(100, 5.0))
    with pytest.raises(Unstable):
        underflow_exponent(stream(2, "neg").normal(-1, 1, 1000))


def test_exponent_is_root_of_cgf():
    est = CgfEstimate(stream(3, "cgf").normal(2, 4, 50_000)).fit()
    assert abs(est.cgf(-est.kappa)) < 1e-8
    assert est.kappa > 0


def test_two_point_exponent_closed_form():
    # X = +2 or -1 with equal weight: e^{-2k} + e^{k} = 2, so e^k = golden ratio
    x = np.array([2.0, -1.0] * 10)
    assert underflow_exponent(x) == pytest.approx(math.log((1 + math.sqrt(5)) / 2), rel=1e-8)


def test_underflow_bound_examples():
    assert underflow_bound(0.5, 0.3, 0) == 0.3
    assert underflow_bound(0.5, 3.0, 0) == 1.0
    assert underflow_bound(0.001, 1.0, 10_000) == pytest.approx(4.54e-5, rel=1e-3)
    b1 = underflow_bound(0.002, 1.0, 700)
    b2 = underflow_bound(0.002, 1.0, 1400)
    assert b2 / b1 == pytest.approx(math.exp(-0.002 * 700))
    with pytest.raises(UsageError):
        underflow_bound(0.0, 1.0, 1.0)


def test_calibrate_prefactor_uses_smallest_threshold():
    c = calibrate_prefactor(0.1, [20.0, 10.0], [0.01, 0.2])
    assert c == pytest.approx(0.2 * math.exp(1.0))


@given(st.floats(1e-4, 1), st.floats(1e-3, 1), st.floats(0, 100), st.floats(0, 100))
def test_bound_monotone_in_threshold(k, c, b, extra):
    assert underflow_bound(k, c, b + extra) <= underflow_bound(k, c, b)


def test_importance_sampling_matches_crude_mc():
    reserves = [0, 25, 50, 75, 100]
    crude = reserve_depletion_mc(10, 30, reserves, 20_000, 3000, stream(7, "mc"))
    tilted = np.exp(reserve_depletion_is(10, 30, reserves, 20_000, stream(7, "is")))
    se = np.sqrt(crude * (1 - crude) / 20_000)
    assert np.all(np.abs(crude - tilted) < 4 * se + 0.01)


def test_importance_sampling_decays_at_gaussian_rate():
    grid = np.arange(0, 2001, 500.0)
    lp = reserve_depletion_is(10, 30, grid, 2000, stream(8, "is"))
    slope = np.polyfit(grid, lp, 1)[0]
    assert slope == pytest.approx(-2 * 10 / 30**2, rel=0.03)


def test_importance_sampling_rejects_small_tilt():
    with pytest.raises(UsageError):
        reserve_depletion_is(10, 30, [0], 10, stream(0), tilt=0.001)


def test_outage_probability_examples():
    assert outage_probability(np.zeros((2, 100), bool))[0] == 0.0
    assert outage_probability(np.ones((1, 100), bool))[0] == 1.0
    flags = np.zeros(1000, bool)
    flags[[3, 100, 101, 500, 999]] = True
    assert outage_probability(flags)[0] == 0.005
    # warm-up is trimmed before counting
    assert outage_probability(flags, warmup=200)[0] == pytest.approx(2 / 800)
    with pytest.raises(UsageError):
        outage_probability(flags, warmup=1000)


def test_mean_ci():
    est = mean_ci([1.0, 1.0, 1.0])
    assert est.mean == 1.0 and est.lo == est.hi == 1.0 and est.ci_available
    single = mean_ci([0.4])
    assert not single.ci_available and math.isnan(single.lo)
    est = mean_ci([0.0, 1.0])
    assert est.lo < 0.5 < est.hi


def _fixed(prop=0.0, queue=0.0, crypto=0.0, fb=0.0):
    return ClassDelay(0.0, 0.0, crypto, crypto, 0.0, fb, deterministic_queue=queue)


def test_sample_delay_examples():
    rng = stream(0, "d")
    assert sample_delay(_fixed(), 0, rng) == 0.0
    m = _fixed(queue=2e-3, crypto=0.5e-3, fb=3e-3)
    assert sample_delay(m, 1, rng, prop=1e-3) == pytest.approx(6.5e-3)


def test_fallback_adds_exactly_switching_time():
    m = ClassDelay(math.log(0.002), 0.4, 1e-4, 5e-4, 1e-4, 3e-3)
    a = sample_delay(m, 0, stream(5, "x"), size=1000)
    b = sample_delay(m, 1, stream(5, "x"), size=1000)
    np.testing.assert_allclose(b - a, 3e-3, rtol=0, atol=1e-15)


def test_negative_delay_component_rejected():
    with pytest.raises(UsageError):
        ClassDelay(0.0, 0.1, -1.0, 0.0, 0.0, 0.0)


def test_propagation_speed():
    assert propagation_delay(200.0) == pytest.approx(1e-3, rel=1e-3)


def test_delay_model_roundtrip():
    m = DelayModel.default(load_classes(), {"n0": 20.0})
    back = DelayModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert back == m


def test_availability_examples():
    assert availability(0, 0, 0) == 1.0
    assert availability(0.001, 0.1, 0.01) == pytest.approx(0.998)
    assert availability(1.0, 0.5, 0.5) == 0.0


@given(prob, prob, prob, st.floats(0, 0.5))
def test_availability_monotone(p, e, f, bump):
    base = availability(p, e, f)
    assert availability(min(1, p + bump), e, f) <= base
    assert availability(p, min(1, e + bump), f) <= base
    assert availability(p, e, min(1, f + bump)) <= base
    assert 0 <= base <= 1


def test_fallback_delay_bound_examples():
    assert fallback_delay_bound(lambda t: 0.0, lambda t: 0.0, 0.01, 0.1, 0.01, 0.01) == 0.0
    assert fallback_delay_bound(lambda t: 0.02, lambda t: 0.03, 0.01, 0.1, 0.01, 0.01) == \
        pytest.approx(0.05)
    with pytest.raises(UsageError):
        fallback_delay_bound(lambda t: 0, lambda t: 0, 0.09, 0.1, 0.01, 0.01)
    with pytest.raises(UsageError):
        fallback_delay_bound(lambda t: 0, lambda t: 0, 0.0, 0.1, 0.01, 0.01)


def test_fallback_delay_bound_dominates_simulation():
    from scipy.stats import lognorm

    mu, sig, L, prop, crypto, fb = math.log(0.004), 0.6, 0.012, 0.001, 0.001, 0.003
    m = ClassDelay(mu, sig, crypto, crypto, 0.0, fb)
    d = sample_delay(m, 1, stream(11, "fb"), prop=prop, size=200_000)
    simulated = float(np.mean(d > L))
    q_tail = lognorm(s=sig, scale=math.exp(mu)).sf
    fb_tail = lambda t: 1.0 if t < fb else 0.0  # noqa: E731
    for tau in (0.004, 0.005, 0.006):
        assert fallback_delay_bound(q_tail, fb_tail, tau, L, prop, crypto) >= simulated


def test_sla_report_validates_and_serializes():
    rep = SlaReport({"GOOSE": {"availability": 0.99, "delay_exceedance": 0.01, "ci95": None}},
                    {"n0": {"p_out": 0.0, "fb_occupancy": 0.1, "ci95": [0.0, 0.0]}})
    d = json.loads(rep.to_json())
    assert set(d) == {"class", "node"}
    with pytest.raises(UsageError):
        SlaReport({"x": {"availability": 1.5}})
