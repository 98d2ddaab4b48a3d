"""Rayleigh channel gains and their threshold quantizer.

Thresholds are always given in full, ``0 = mu_0 < mu_1 < ... < mu_M = inf``,
so a quantizer with M intervals has M + 1 thresholds. Intervals are numbered
1..M and interval l is ``[mu_{l-1}, mu_l)``.
"""

from __future__ import annotations

import numpy as np

from .model import Quantizer


def _check_thresholds(thresholds) -> np.ndarray:
    mu = np.asarray(thresholds, dtype=float)
    if mu.ndim != 1 or mu.size < 2 or mu[0] != 0.0 or not np.isposinf(mu[-1]):
        raise ValueError("thresholds must start at 0 and end at +inf")
    if np.any(np.diff(mu) < 0):
        raise ValueError("thresholds must be increasing")
    return mu


def interval_probs(thresholds, mean_sq_gain: float) -> np.ndarray:
    """P(g in interval l) when g**2 is exponential with mean ``mean_sq_gain``."""
    mu = _check_thresholds(thresholds)
    survival = np.exp(-(mu**2) / mean_sq_gain)
    return survival[:-1] - survival[1:]


def thresholds_from_probs(probs, mean_sq_gain: float) -> np.ndarray:
    """Inverse of :func:`interval_probs`."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size < 1 or np.any(p <= 0.0):
        raise ValueError("interval probabilities must be positive")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("interval probabilities must sum to 1")
    # Tail sums are taken from the top so small upper probabilities keep precision.
    tails = np.cumsum(p[::-1])[::-1][1:]
    inner = np.sqrt(-mean_sq_gain * np.log(tails))
    return np.concatenate(([0.0], inner, [np.inf]))


def quantizer_from_thresholds(thresholds, mean_sq_gain: float) -> Quantizer:
    mu = _check_thresholds(thresholds)
    return Quantizer(tuple(float(m) for m in mu), tuple(float(p) for p in interval_probs(mu, mean_sq_gain)))


def quantizer_from_probs(probs, mean_sq_gain: float) -> Quantizer:
    mu = thresholds_from_probs(probs, mean_sq_gain)
    return Quantizer(tuple(float(m) for m in mu), tuple(float(p) for p in probs))


def sample_gain(mean_sq_gain: float, rng: np.random.Generator, size=None):
    """Rayleigh gain: square root of an exponential draw with mean ``mean_sq_gain``."""
    return np.sqrt(rng.exponential(mean_sq_gain, size=size))


def quantize_gain(g, thresholds):
    """Interval index (1-based) of ``g``; a gain equal to a threshold goes up."""
    mu = _check_thresholds(thresholds)
    idx = np.searchsorted(mu, g, side="right")
    if np.ndim(idx) == 0:
        return int(idx)
    return idx
