"""Local sensor detection: Gaussian tail, LLR and threshold <-> (P_f, P_d) maps."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize, special

from .model import Deployment, OperatingPoint, SensorModel


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


QUAD_TOL = 1e-8
QUAD_LIMIT = 200


def q_function(x):
    """Standard normal upper tail P(Z > x).

    Evaluated as ``erfc(x / sqrt 2) / 2``; scipy's erfc has relative error
    near machine precision, so the absolute error stays below 1e-15.
    """
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def q_inverse(p):
    """Inverse of :func:`q_function` on (0, 1)."""
    return math.sqrt(2.0) * special.erfcinv(2.0 * np.asarray(p, dtype=float))


def llr(x, model: SensorModel):
    """Log-likelihood ratio of an observation for the fixed-amplitude model."""
    a = model.signal_amplitude
    return (a * np.asarray(x, dtype=float) - 0.5 * a * a) / model.obs_noise_var


def _tails(theta, amplitude, obs_noise_var):
    # Shared by the fixed model and the integrand of the random-deployment one.
    d = np.abs(amplitude) / math.sqrt(obs_noise_var)
    snr = amplitude * amplitude / (2.0 * obs_noise_var)
    return q_function((theta + snr) / d), q_function((theta - snr) / d)


def operating_point_fixed(theta: float, model: SensorModel) -> OperatingPoint:
    pf, pd = _tails(theta, model.signal_amplitude, model.obs_noise_var)
    return OperatingPoint(float(theta), float(pf), float(pd))


def threshold_from_pd(pd: float, model: SensorModel) -> float:
    """Closed-form inverse of the detection probability in theta."""
    if not 0.0 < pd < 1.0:
        raise ValueError("pd must lie strictly inside (0, 1); the threshold would be infinite")
    d = model.signal_amplitude / math.sqrt(model.obs_noise_var)
    return float(d * q_inverse(pd) + 0.5 * d * d)


def intensity_support(dep: Deployment) -> tuple[float, float]:
    return dep.source_power / dep.outer_radius**2, dep.source_power / dep.inner_radius**2


def intensity_pdf(s, dep: Deployment):
    """Density of the received intensity ``s = P0 / r**2`` for r ~ U(r0, r1)."""
    s = np.asarray(s, dtype=float)
    lo, hi = intensity_support(dep)
    inside = (s > lo) & (s <= hi)
    safe = np.where(inside, s, 1.0)
    val = math.sqrt(dep.source_power) / (2.0 * safe * np.sqrt(safe) * (dep.outer_radius - dep.inner_radius))
    return np.where(inside, val, 0.0)


def _quad(f, lo, hi):
    val, err, *rest = integrate.quad(f, lo, hi, epsabs=QUAD_TOL, epsrel=0.0, limit=QUAD_LIMIT, full_output=1)
    if len(rest) > 1 and err > QUAD_TOL:
        raise QuadratureError(f"quadrature stopped at estimated error {err:.3g} (target {QUAD_TOL:g})")
    return val


def operating_point_random(theta: float, model: SensorModel) -> OperatingPoint:
    """(P_f, P_d) averaged over the random source-to-sensor distance.

    The Q arguments use the intensity in the place the fixed model uses the
    amplitude, then the result is integrated against :func:`intensity_pdf`.
    """
    dep = model.deployment
    lo, hi = intensity_support(dep)
    if math.isinf(theta):
        p = 0.0 if theta > 0 else 1.0
        return OperatingPoint(float(theta), p, p)

    def pf_int(s):
        return float(_tails(theta, s, model.obs_noise_var)[0] * intensity_pdf(s, dep))

    def pd_int(s):
        return float(_tails(theta, s, model.obs_noise_var)[1] * intensity_pdf(s, dep))

    pf, pd = _quad(pf_int, lo, hi), _quad(pd_int, lo, hi)
    return OperatingPoint(float(theta), min(max(pf, 0.0), 1.0), min(max(pd, 0.0), 1.0))


def operating_point(theta: float, model: SensorModel) -> OperatingPoint:
    if model.is_random:
        return operating_point_random(theta, model)
    return operating_point_fixed(theta, model)


def threshold_for_pd(pd: float, model: SensorModel) -> float:
    """Threshold achieving detection probability ``pd`` for either deployment variant."""
    if not model.is_random:
        return threshold_from_pd(pd, model)
    if not 0.0 < pd < 1.0:
        raise ValueError("pd must lie strictly inside (0, 1); the threshold would be infinite")

    def gap(theta):
        return operating_point_random(theta, model).pd - pd

    lo, hi = -1.0, 1.0
    while gap(lo) < 0:
        lo *= 2.0
    while gap(hi) > 0:
        hi *= 2.0
    return float(optimize.brentq(gap, lo, hi, xtol=1e-13, rtol=1e-14))
