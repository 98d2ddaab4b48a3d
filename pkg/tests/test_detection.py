import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import integrate

from ehwsn.detection import (
    intensity_pdf,
    intensity_support,
    llr,
    operating_point,
    operating_point_fixed,
    operating_point_random,
    q_function,
    q_inverse,
    threshold_for_pd,
    threshold_from_pd,
)
from ehwsn.model import Deployment, SensorModel

UNIT = SensorModel(1.0, 1.0, 1.0, signal_amplitude=1.0)
FAR = SensorModel(1.0, 1.0, 1.0, deployment=Deployment(10.0, 1.0, 100.0))


def test_q_function_values():
    assert q_function(0.0) == 0.5
    # mpmath quadrature of the Gaussian tail: 0.049995217468346303
    assert q_function(1.6449) == pytest.approx(0.05, abs=1e-4)
    assert q_function(1.6449) == pytest.approx(0.049995217468346303, rel=1e-13)


@given(st.floats(-30, 30))
def test_q_function_reflection(x):
    assert q_function(-x) == pytest.approx(1.0 - q_function(x), abs=1e-15)


@given(st.floats(1e-12, 1 - 1e-12))
def test_q_inverse_round_trip(p):
    assert q_function(q_inverse(p)) == pytest.approx(p, rel=1e-9, abs=1e-15)


def test_llr_examples():
    assert llr(0.5, UNIT) == 0.0
    assert llr(1.0, UNIT) == 0.5
    assert llr(0.0, UNIT) == -0.5


def test_fixed_operating_point_at_zero():
    op = operating_point_fixed(0.0, UNIT)
    assert op.pf + op.pd == 1.0
    # mpmath: Q(0.5) = 0.3085375387259869
    assert op.pf == pytest.approx(0.3085375387259869, rel=1e-14)
    assert (op.pf, op.pd) == pytest.approx((0.3085, 0.6915), abs=1e-4)


def test_fixed_operating_point_tail():
    op = operating_point_fixed(math.inf, UNIT)
    assert (op.pf, op.pd) == (0.0, 0.0)


def test_threshold_from_pd_examples():
    m = SensorModel(2.0, 1.0, 1.0, signal_amplitude=3.0)
    assert threshold_from_pd(0.5, m) == pytest.approx(3.0**2 / (2 * 2.0))
    assert threshold_from_pd(0.6915, UNIT) == pytest.approx(0.0, abs=1e-3)
    with pytest.raises(ValueError):
        threshold_from_pd(1.0, UNIT)


@given(st.floats(-3, 3), st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_threshold_round_trip(theta, amp, var):
    m = SensorModel(var, 1.0, 1.0, signal_amplitude=amp)
    pd = operating_point_fixed(theta, m).pd
    assume(1e-6 < pd < 1 - 1e-6)  # closer to 0 or 1 a double pd no longer pins theta down to 1e-9
    assert threshold_from_pd(pd, m) == pytest.approx(theta, abs=1e-9)


@given(st.floats(-5, 5), st.floats(0.0, 3.0), st.floats(0.2, 4.0))
def test_fixed_pd_dominates_and_is_monotone(theta, step, amp):
    m = SensorModel(1.0, 1.0, 1.0, signal_amplitude=amp)
    a, b = operating_point_fixed(theta, m), operating_point_fixed(theta + step, m)
    assert a.pd >= a.pf
    assert b.pf <= a.pf and b.pd <= a.pd


def test_intensity_pdf_normalized():
    for dep in (Deployment(10.0, 1.0, 100.0), Deployment(3.0, 0.5, 2.0)):
        lo, hi = intensity_support(dep)
        total = integrate.quad(lambda s: float(intensity_pdf(s, dep)), lo, hi, epsabs=1e-13, epsrel=1e-13,
                               limit=500, points=[lo * 10, lo * 100])[0]
        assert total == pytest.approx(1.0, abs=1e-9)


def test_random_matches_fixed_for_thin_annulus():
    r0 = 2.0
    thin = SensorModel(1.0, 1.0, 1.0, deployment=Deployment(8.0, r0, r0 * (1 + 1e-7)))
    fixed = SensorModel(1.0, 1.0, 1.0, signal_amplitude=8.0 / r0**2)
    for theta in (-1.0, 0.5, 2.0):
        a, b = operating_point_random(theta, thin), operating_point_fixed(theta, fixed)
        assert (a.pf, a.pd) == pytest.approx((b.pf, b.pd), abs=1e-6)


def test_random_tail_limit():
    op = operating_point_random(math.inf, FAR)
    assert (op.pf, op.pd) == (0.0, 0.0)


def test_random_matches_sampling_oracle():
    rng = np.random.default_rng(2024)
    r = rng.uniform(1.0, 100.0, 10**7)
    s = 10.0 / r**2
    pf_s = q_function((1.0 + s * s / 2) / s)
    pd_s = q_function((1.0 - s * s / 2) / s)
    op = operating_point_random(1.0, FAR)
    n = r.size
    assert abs(op.pf - pf_s.mean()) < 3 * pf_s.std() / math.sqrt(n)
    assert abs(op.pd - pd_s.mean()) < 3 * pd_s.std() / math.sqrt(n)


@pytest.mark.parametrize("theta", [-2.0, 0.0, 1.0, 4.0])
def test_random_pd_dominates_and_is_monotone(theta):
    a = operating_point_random(theta, FAR)
    b = operating_point_random(theta + 0.5, FAR)
    assert a.pd >= a.pf
    assert b.pf <= a.pf and b.pd <= a.pd


def test_threshold_for_pd_random_round_trip():
    for pd in (0.05, 0.3, 0.7):
        theta = threshold_for_pd(pd, FAR)
        assert operating_point(theta, FAR).pd == pytest.approx(pd, abs=1e-9)


def test_dispatch_uses_fixed_model():
    assert operating_point(0.0, UNIT) == operating_point_fixed(0.0, UNIT)
    assert threshold_for_pd(0.5, UNIT) == threshold_from_pd(0.5, UNIT)
