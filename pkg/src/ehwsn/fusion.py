"""Fusion-center statistics: exact LLR, decision rule and two P_e approximations.

Array arguments broadcast with sensors on the last axis, so a batch of channel
realizations can be evaluated at once; per-sensor sums reduce that axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detection import q_function
from .divergence import MomentPair
from .model import OperatingPoint, Priors


def _op_arrays(ops):
    if isinstance(ops, OperatingPoint):
        ops = [ops]
    pf = np.array([o.pf for o in ops], dtype=float)
    pd = np.array([o.pd for o in ops], dtype=float)
    return pf, pd


def _mix_log(p, log_e):
    # log(p + (1 - p) * exp(log_e)), exact at p in {0, 1}
    with np.errstate(divide="ignore"):
        return np.logaddexp(np.log(p), np.log1p(-p) + log_e)


def llr_fc_arrays(y, g, alpha, pf, pd, ch_noise_var):
    """Exact log-likelihood ratio at the FC, summed over the last axis."""
    y = np.asarray(y, dtype=float)
    ga = np.asarray(g, dtype=float) * np.asarray(alpha, dtype=float)
    log_e = -(2.0 * y * ga - ga * ga) / (2.0 * np.asarray(ch_noise_var, dtype=float))
    per = _mix_log(pd, log_e) - _mix_log(pf, log_e)
    per = np.where(ga == 0.0, 0.0, per)
    return per.sum(axis=-1)


def llr_fc(y, g, alpha, ops, ch_noise_vars):
    pf, pd = _op_arrays(ops)
    out = llr_fc_arrays(y, g, alpha, pf, pd, ch_noise_vars)
    return out if np.ndim(out) else float(out)


def decide(delta, tau):
    """Global decision: 1 when the statistic reaches the threshold (ties decide 1)."""
    out = (np.asarray(delta) >= tau).astype(int)
    return out if out.ndim else int(out)


def _pe_gaussian(tau, mu0, sd0, mu1, sd1, priors: Priors):
    """P_e for Gaussian statistics; zero spread falls back to the deterministic limit."""
    mu0, sd0, mu1, sd1 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mu0, sd0, mu1, sd1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        fa = np.where(sd0 > 0, q_function((tau - mu0) / np.where(sd0 > 0, sd0, 1.0)),
                      (mu0 >= tau).astype(float))
        miss = np.where(sd1 > 0, 1.0 - q_function((tau - mu1) / np.where(sd1 > 0, sd1, 1.0)),
                        (mu1 < tau).astype(float))
    out = priors.pi0 * fa + priors.pi1 * miss
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class FusionStats:
    """Moment-matched quantities behind both P_e approximations."""

    pairs: MomentPair
    xi: np.ndarray
    nu: np.ndarray
    mu_delta0: np.ndarray
    mu_delta1: np.ndarray
    sigma_delta0: np.ndarray
    sigma_delta1: np.ndarray
    r_const: np.ndarray
    tau_prime: np.ndarray
    z_coeffs: tuple
    z_moments: tuple


def low_snr_moments(gains, alphas, pf, pd, ch_noise_vars, pairs: MomentPair):
    ga = np.asarray(gains, dtype=float) * np.asarray(alphas, dtype=float)
    s2 = np.asarray(ch_noise_vars, dtype=float)
    diff = pd - pf
    xi = np.sum(ga * ga * diff / (2.0 * s2), axis=-1)
    nu = ga * diff / s2
    mu0 = -xi + np.sum(nu * pairs.mean0, axis=-1)
    mu1 = -xi + np.sum(nu * pairs.mean1, axis=-1)
    sd0 = np.sqrt(np.sum(nu * nu * pairs.var0, axis=-1))
    sd1 = np.sqrt(np.sum(nu * nu * pairs.var1, axis=-1))
    return xi, nu, mu0, sd0, mu1, sd1


def _pairs(gains, alphas, pf, pd, ch_noise_vars):
    ga = np.asarray(gains, dtype=float) * np.asarray(alphas, dtype=float)
    s2 = np.asarray(ch_noise_vars, dtype=float)
    return MomentPair(ga * pf, ga * ga * pf * (1 - pf) + s2, ga * pd, ga * ga * pd * (1 - pd) + s2)


def pe_low_snr_arrays(gains, alphas, pf, pd, priors: Priors, ch_noise_vars):
    pairs = _pairs(gains, alphas, pf, pd, ch_noise_vars)
    _, _, mu0, sd0, mu1, sd1 = low_snr_moments(gains, alphas, pf, pd, ch_noise_vars, pairs)
    return _pe_gaussian(priors.tau, mu0, sd0, mu1, sd1, priors)


def pe_low_snr(gains, alphas, ops, priors: Priors, ch_noise_vars):
    """P_e with the FC statistic linearized for large channel noise."""
    pf, pd = _op_arrays(ops)
    return pe_low_snr_arrays(gains, alphas, pf, pd, priors, ch_noise_vars)


def z_coefficients(pair: MomentPair):
    """(a, b, c) of the per-sensor quadratic ``z = a y**2 + b y + c``."""
    a = 1.0 / pair.var0 - 1.0 / pair.var1
    b = 2.0 * pair.mean1 / pair.var1 - 2.0 * pair.mean0 / pair.var0
    c = pair.mean0**2 / pair.var0 - pair.mean1**2 / pair.var1
    return a, b, c


def _quad_form_moments(a, b, c, m, v, printed):
    mean = a * (m * m + v) + b * m + c
    if printed:
        var = 2.0 * a * a * (2.0 * m * m + v * v) + b * v * (b + 4.0 * a * m)
    else:
        var = 2.0 * a * a * v * v + 4.0 * a * a * m * m * v + b * b * v + 4.0 * a * b * m * v
    return mean, var


def z_moments(pair: MomentPair, printed: bool = False):
    """Mean and variance of z under each hypothesis, with y ~ N(m_h, var_h).

    ``printed=True`` returns the variance without the variance factor on the
    ``a**2 m**2`` term; it is kept only for comparison and is not a moment.
    """
    a, b, c = z_coefficients(pair)
    mu0, var0 = _quad_form_moments(a, b, c, pair.mean0, pair.var0, printed)
    mu1, var1 = _quad_form_moments(a, b, c, pair.mean1, pair.var1, printed)
    return mu0, var0, mu1, var1


def _stack_pairs(pairs) -> MomentPair:
    if isinstance(pairs, MomentPair):
        return pairs
    pairs = list(pairs)
    return MomentPair(*(np.array([getattr(p, f) for p in pairs], dtype=float)
                        for f in ("mean0", "var0", "mean1", "var1")))


def clt_moments(pairs):
    p = _stack_pairs(pairs)
    r = 0.5 * np.sum(np.log(p.var0) - np.log(p.var1), axis=-1)
    mu0, var0, mu1, var1 = z_moments(p)
    return r, np.sum(mu0, axis=-1), np.sum(var0, axis=-1), np.sum(mu1, axis=-1), np.sum(var1, axis=-1)


def pe_clt(pairs, priors: Priors):
    """P_e from a Gaussian (CLT) fit to the sum of per-sensor quadratic forms."""
    r, mu0, var0, mu1, var1 = clt_moments(pairs)
    tau_p = 2.0 * (priors.tau - r)
    return _pe_gaussian(tau_p, mu0, np.sqrt(np.maximum(var0, 0.0)), mu1, np.sqrt(np.maximum(var1, 0.0)), priors)


def pe_clt_arrays(gains, alphas, pf, pd, priors: Priors, ch_noise_vars):
    return pe_clt(_pairs(gains, alphas, pf, pd, ch_noise_vars), priors)


def fusion_stats(gains, alphas, ops, priors: Priors, ch_noise_vars) -> FusionStats:
    pf, pd = _op_arrays(ops)
    pairs = _pairs(gains, alphas, pf, pd, ch_noise_vars)
    xi, nu, mu0, sd0, mu1, sd1 = low_snr_moments(gains, alphas, pf, pd, ch_noise_vars, pairs)
    r = 0.5 * np.sum(np.log(pairs.var0) - np.log(pairs.var1), axis=-1)
    return FusionStats(pairs, xi, nu, mu0, mu1, sd0, sd1, r, 2.0 * (priors.tau - r),
                       z_coefficients(pairs), z_moments(pairs))


def _z_support(pair: MomentPair):
    # z is defined where (m0 - m1)^2 + z (v1 - v0) >= 0
    dv = pair.var1 - pair.var0
    edge = -((pair.mean0 - pair.mean1) ** 2) / dv
    return (edge, math.inf) if dv > 0 else (-math.inf, edge)


def z_density(z, pair: MomentPair, h: int):
    """Density of z under hypothesis h when y is Gaussian; requires var0 != var1."""
    m0, v0, m1, v1 = pair.mean0, pair.var0, pair.mean1, pair.var1
    if v0 == v1:
        raise ValueError("z_density needs unequal variances (z is linear in y otherwise)")
    z = np.asarray(z, dtype=float)
    radicand = (m0 - m1) ** 2 + z * (v1 - v0)
    ok = radicand > 0
    root = np.sqrt(np.where(ok, radicand, 1.0))
    gz = 2.0 / math.sqrt(v0 * v1) * root
    centre = (m0 * v1 - m1 * v0) / (v1 - v0)
    half = 0.5 * v0 * v1 * gz / (v1 - v0)
    m, v = (m0, v0) if h == 0 else (m1, v1)

    def f(y):
        return np.exp(-((y - m) ** 2) / (2.0 * v)) / math.sqrt(2.0 * math.pi * v)

    dens = (f(centre + half) + f(centre - half)) / gz
    out = np.where(ok, dens, 0.0)
    return out if out.ndim else float(out)
