"""J-divergence of the received-signal densities and its channel averages.

The per-sensor divergence uses the moment-matched Gaussian approximation of the
two mixture densities at the FC. Its scale follows the moment-matched formula,
which equals 2 (not 0) for identical densities.

Averaging over the Rayleigh channel uses the closed form of
``E[(a + b x) / (c + d x); x in [lo, hi]]`` for exponential ``x``; the
exponential-integral terms are evaluated in scaled form so they stay finite
when ``c / d`` is large (rarely transmitting or nearly silent sensors).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .battery import BatteryChain, transmit_probability, units_table
from .model import OperatingPoint, PowerPolicy, Priors, Quantizer, SensorModel

_CF_SWITCH = 2.0
_CF_TERMS = 80


@dataclass(frozen=True)
class MomentPair:
    """Mean/variance of the Gaussian fits under H0 and H1 (fields may be arrays)."""

    mean0: float
    var0: float
    mean1: float
    var1: float


class JnCoefficients(NamedTuple):
    a: float
    b: float
    c: float
    d: float


def moment_match(g, alpha_sq, op: OperatingPoint, ch_noise_var, unit_energy: float = 1.0) -> MomentPair:
    """Gaussian fits to the received mixtures for gain ``g`` and ``alpha_sq`` energy units."""
    amp = np.asarray(g, dtype=float) * np.sqrt(np.asarray(alpha_sq, dtype=float) * unit_energy)
    pf, pd = op.pf, op.pd
    return MomentPair(
        mean0=amp * pf,
        var0=amp * amp * pf * (1.0 - pf) + ch_noise_var,
        mean1=amp * pd,
        var1=amp * amp * pd * (1.0 - pd) + ch_noise_var,
    )


def jdiv_gaussian(pair: MomentPair):
    dm2 = (pair.mean1 - pair.mean0) ** 2
    return (pair.var1 + dm2) / pair.var0 + (pair.var0 + dm2) / pair.var1


def jn_coefficients(pf, pd) -> JnCoefficients:
    return JnCoefficients(
        a=pf * (1.0 - pd) + pd * (pd - pf),
        b=pd * (1.0 - pd),
        c=pd * (1.0 - pf) - pf * (pd - pf),
        d=pf * (1.0 - pf),
    )


def j_n(g_sq_alpha_sq, op: OperatingPoint, ch_noise_var):
    """Divergence of one sensor as a function of the received energy ``g**2 alpha**2``."""
    x = np.asarray(g_sq_alpha_sq, dtype=float)
    a, b, c, d = jn_coefficients(op.pf, op.pd)
    s2 = ch_noise_var
    return (s2 + a * x) / (s2 + b * x) + (s2 + c * x) / (s2 + d * x)


# -- exponential integrals ---------------------------------------------------

def _cf_tail(z):
    # Backward evaluation of the tail of e^z E1(z) = 1/(z + 1 - 1/(z + 3 - 4/(z + 5 - ...)))
    t = np.zeros_like(z)
    for k in range(_CF_TERMS, 0, -1):
        t = 1.0 / (z + (2 * k + 1) - (k + 1) ** 2 * t)
    return t


def _scaled_e1_and_rest(z):
    """Return ``S = e^z E1(z)`` and ``R = 1 - z S`` for z > 0, both without cancellation."""
    z = np.asarray(z, dtype=float)
    s = np.empty_like(z)
    r = np.empty_like(z)
    small = z < _CF_SWITCH
    if np.any(small):
        zs = z[small]
        s[small] = np.exp(zs) * special.exp1(zs)
        r[small] = 1.0 - zs * s[small]
    big = ~small
    if np.any(big):
        zb = z[big]
        t = _cf_tail(zb)
        den = zb + 1.0 - t
        s[big] = 1.0 / den
        r[big] = (1.0 - t) / den
    return s, r


def scaled_exp1(z):
    """``exp(z) * E1(z)`` for z > 0, finite for arbitrarily large z."""
    s, _ = _scaled_e1_and_rest(z)
    return s if np.ndim(z) else float(s)


def exp_integral(z):
    """Exponential integral Ei(z) for negative z (equals -E1(-z))."""
    z = np.asarray(z, dtype=float)
    if np.any(z >= 0):
        raise ValueError("exp_integral is only defined here for negative arguments")
    out = special.expi(z)
    return out if out.ndim else float(out)


def scaled_ei_product(x, y):
    """``exp(x) * Ei(-x - y)`` for x >= 0, y >= 0, x + y > 0, without overflow."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = -np.exp(-y) * scaled_exp1(x + y)
    return out if np.ndim(out) else float(out)


# -- closed-form channel averages ---------------------------------------------

def _term_antiderivative(units, y, num, den, ch_noise_var, rate, unit_energy):
    """Antiderivative in y of ``(s2 + num*u*x)/(s2 + den*u*x) * rate*exp(-rate*x)``.

    Written as ``-e^{-s} - (num - den) u e^{-s} W`` with ``s = rate*y`` and
    ``W = (R(z) + s S(z)) * w / (rate s2)``, ``w = rate s2 / (den u)``,
    ``z = s + w``. ``W`` tends to ``(1 + s) / (rate s2)`` as ``den u -> 0``.
    """
    u = np.asarray(units, dtype=float) * unit_energy
    y = np.asarray(y, dtype=float)
    u, y, num, den = np.broadcast_arrays(u, y, np.asarray(num, float), np.asarray(den, float))
    out = np.zeros(u.shape)
    finite = np.isfinite(y)
    s = rate * np.where(finite, y, 0.0)
    es = np.exp(-s)
    du = den * u
    lin = finite & (du <= 0.0)
    sca = finite & (du > 0.0)
    w_fac = np.zeros(u.shape)
    w_fac[lin] = (1.0 + s[lin]) / (rate * ch_noise_var)
    if np.any(sca):
        w = rate * ch_noise_var / du[sca]
        sv = s[sca]
        S, R = _scaled_e1_and_rest(sv + w)
        w_fac[sca] = (R + sv * S) / du[sca]
    out[finite] = -es[finite] - (num[finite] - den[finite]) * u[finite] * es[finite] * w_fac[finite]
    return out


def omega(units, y, op: OperatingPoint, ch_noise_var: float, mean_sq_gain: float, unit_energy: float = 1.0):
    """Antiderivative in ``y = g**2`` of ``J_n(y * units) * f(y)``, f the density of g**2.

    ``omega(u, hi) - omega(u, lo)`` is the contribution of ``lo <= g**2 < hi``
    to E[J_n] at a fixed battery level spending ``u`` units; ``omega(u, inf) = 0``.
    Zero units give the silent-sensor value ``-2 exp(-y / mean_sq_gain)``.
    """
    a, b, c, d = jn_coefficients(op.pf, op.pd)
    rate = 1.0 / mean_sq_gain
    out = (_term_antiderivative(units, y, a, b, ch_noise_var, rate, unit_energy)
           + _term_antiderivative(units, y, c, d, ch_noise_var, rate, unit_energy))
    return out if out.ndim else float(out)


def interval_j_table(units, phi, thresholds, op: OperatingPoint, model: SensorModel,
                     unit_energy: float = 1.0) -> np.ndarray:
    """Per-interval averaged divergence for a battery distribution ``phi``.

    ``units[l, k]`` is the spend in interval l at level k; returns one value
    per interval, summing to E[J_n] over channel and battery.
    """
    mu_sq = np.asarray(thresholds, dtype=float) ** 2
    lo = mu_sq[:-1, None]
    hi = mu_sq[1:, None]
    om_hi = omega(units, hi, op, model.ch_noise_var, model.mean_sq_gain, unit_energy)
    om_lo = omega(units, lo, op, model.ch_noise_var, model.mean_sq_gain, unit_energy)
    return (om_hi - om_lo) @ np.asarray(phi, dtype=float)


def conditional_j(interval: int, chain: BatteryChain, policy: PowerPolicy, quantizer: Quantizer,
                  op: OperatingPoint, model: SensorModel) -> float:
    """Contribution of gain interval ``interval`` (1-based) to the averaged divergence."""
    table = interval_j_table(units_table(policy), chain.steady, quantizer.thresholds, op, model,
                             policy.unit_energy)
    return float(table[interval - 1])


def conditional_alpha(interval: int, chain: BatteryChain, policy: PowerPolicy, quantizer: Quantizer,
                      op: OperatingPoint, priors: Priors) -> float:
    """Average energy units spent in gain interval ``interval`` (1-based)."""
    u = units_table(policy)[interval - 1]
    return float(transmit_probability(op, priors) * quantizer.probs[interval - 1] * (u @ chain.steady))


def quadrature_conditional_j(interval: int, chain: BatteryChain, policy: PowerPolicy, quantizer: Quantizer,
                             op: OperatingPoint, model: SensorModel, tol: float = 1e-9) -> float:
    """Same quantity as :func:`conditional_j`, by adaptive quadrature over g**2."""
    lo = quantizer.thresholds[interval - 1] ** 2
    hi = quantizer.thresholds[interval] ** 2
    rate = 1.0 / model.mean_sq_gain
    units = units_table(policy)[interval - 1]
    total = 0.0
    for k, phi_k in enumerate(chain.steady):
        if phi_k == 0.0:
            continue
        energy = units[k] * policy.unit_energy

        def f(x):
            return float(j_n(x * energy, op, model.ch_noise_var)) * rate * math.exp(-rate * x)

        if hi <= lo:
            continue
        val, err, *rest = integrate.quad(f, lo, hi, epsabs=tol * 1e-3, epsrel=tol * 1e-3,
                                         limit=500, full_output=1)
        if len(rest) > 1 and err > tol:
            raise RuntimeError(f"quadrature did not converge (estimated error {err:.3g})")
        total += phi_k * val
    return total
