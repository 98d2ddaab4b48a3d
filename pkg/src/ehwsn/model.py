"""Configuration and domain types shared by every part of the toolkit.

All types are frozen dataclasses. Construction does not enforce invariants;
call :func:`validate` to get the list of violations for a full experiment
configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

# Parameters a sweep may vary, with the section they live in.
SWEEPABLE = {
    "harvest.rate": "rate of energy arrivals per slot",
    "policy.capacity": "battery capacity K",
    "policy.c1": "first transmit coefficient",
    "priors.pi0": "prior probability of H0",
    "sensors.count": "number of (identical) sensors",
    "sensors.mean_sq_gain": "mean squared channel gain",
    "sensors.ch_noise_var": "channel noise variance",
    "sensors.snr_db": "channel SNR, -20 log10(sigma_w)",
    "sensors.obs_snr_db": "observation SNR, 20 log10(A / sigma_v)",
    "sensors.source_power": "source power P0 (random deployment)",
}


@dataclass(frozen=True)
class Deployment:
    """Random placement of a sensor in an annulus around the source."""

    source_power: float
    inner_radius: float
    outer_radius: float


@dataclass(frozen=True)
class SensorModel:
    """Observation and channel statistics of one sensor.

    Exactly one of ``signal_amplitude`` (fixed deployment) and ``deployment``
    (random deployment, path-loss exponent 2) must be given.
    """

    obs_noise_var: float
    ch_noise_var: float
    mean_sq_gain: float
    signal_amplitude: Optional[float] = None
    deployment: Optional[Deployment] = None

    @property
    def is_random(self) -> bool:
        return self.deployment is not None


@dataclass(frozen=True)
class PowerPolicy:
    """Transmit power map: ``floor(coeffs[l] * b)`` units in gain interval l.

    One coefficient per channel-gain interval, so ``len(coeffs)`` is also the
    number of quantizer intervals.
    """

    capacity: int
    coeffs: tuple[float, ...]
    unit_energy: float = 1.0

    @property
    def intervals(self) -> int:
        return len(self.coeffs)


@dataclass(frozen=True)
class HarvestModel:
    rate: float


@dataclass(frozen=True)
class Priors:
    pi0: float
    tau: Optional[float] = None

    def __post_init__(self):
        if self.tau is None and 0.0 < self.pi0 < 1.0:
            object.__setattr__(self, "tau", math.log(self.pi0 / (1.0 - self.pi0)))

    @property
    def pi1(self) -> float:
        return 1.0 - self.pi0


@dataclass(frozen=True)
class OperatingPoint:
    theta: float
    pf: float
    pd: float


@dataclass(frozen=True)
class Quantizer:
    """Channel-gain quantizer: ``thresholds`` include 0 and +inf."""

    thresholds: tuple[float, ...]
    probs: tuple[float, ...]

    @property
    def intervals(self) -> int:
        return len(self.probs)


FC_AMPLITUDE_MODES = ("genie", "expected")


@dataclass(frozen=True)
class ExperimentConfig:
    sensors: tuple[SensorModel, ...]
    policy: PowerPolicy
    harvest: HarvestModel
    priors: Priors
    trials: int = 10000
    seed: int = 0
    sweep: tuple[tuple[str, tuple[float, ...]], ...] = field(default_factory=tuple)
    fc_amplitude: str = "genie"   # or "expected": FC uses E[alpha | interval] under the steady state


def _positive(value, name, out):
    if value is None or not value > 0 or not math.isfinite(value):
        out.append(f"{name} must be positive")


def _validate_sensor(s: SensorModel, prefix: str, out: list[str]) -> None:
    if (s.signal_amplitude is None) == (s.deployment is None):
        out.append(f"{prefix}: exactly one of signal_amplitude and deployment is required")
    if s.signal_amplitude is not None:
        _positive(s.signal_amplitude, f"{prefix}.signal_amplitude", out)
    if s.deployment is not None:
        d = s.deployment
        _positive(d.source_power, f"{prefix}.source_power", out)
        _positive(d.inner_radius, f"{prefix}.inner_radius", out)
        _positive(d.outer_radius, f"{prefix}.outer_radius", out)
        if not d.outer_radius > d.inner_radius:
            out.append("outer_radius must exceed inner_radius")
    _positive(s.obs_noise_var, f"{prefix}.obs_noise_var", out)
    _positive(s.ch_noise_var, f"{prefix}.ch_noise_var", out)
    _positive(s.mean_sq_gain, f"{prefix}.mean_sq_gain", out)


def validate(config: ExperimentConfig) -> list[str]:
    """Return every invariant violation in ``config`` (empty when valid)."""
    out: list[str] = []
    if not config.sensors:
        out.append("at least one sensor is required")
    for n, s in enumerate(config.sensors):
        _validate_sensor(s, f"sensors[{n}]", out)

    p = config.policy
    if not isinstance(p.capacity, int) or p.capacity < 1:
        out.append("capacity must be an integer >= 1")
    if len(p.coeffs) < 1:
        out.append("at least one transmit coefficient is required")
    if any(not 0.0 <= c <= 1.0 for c in p.coeffs):
        out.append("coeffs must lie in [0, 1]")
    if any(b <= a for a, b in zip(p.coeffs, p.coeffs[1:])):
        out.append("coeffs not strictly increasing")
    _positive(p.unit_energy, "unit_energy", out)

    _positive(config.harvest.rate, "harvest.rate", out)

    pr = config.priors
    if not 0.0 < pr.pi0 < 1.0:
        out.append("pi0 must lie in (0, 1)")
    elif pr.tau is None or abs(pr.tau - math.log(pr.pi0 / pr.pi1)) > 1e-12:
        out.append("tau inconsistent with pi0")

    if not isinstance(config.trials, int) or config.trials < 1:
        out.append("trials must be an integer >= 1")
    if not isinstance(config.seed, int) or not 0 <= config.seed < 2**64:
        out.append("seed must be a 64-bit unsigned integer")
    if config.fc_amplitude not in FC_AMPLITUDE_MODES:
        out.append(f"fc_amplitude must be one of {', '.join(FC_AMPLITUDE_MODES)}")
    for name, grid in config.sweep:
        if name not in SWEEPABLE:
            out.append(f"unknown sweep parameter {name!r}")
        if len(grid) == 0:
            out.append(f"empty grid for sweep parameter {name!r}")
    return out


def _with_sensors(config: ExperimentConfig, fn) -> ExperimentConfig:
    return replace(config, sensors=tuple(fn(s) for s in config.sensors))


def apply_parameter(config: ExperimentConfig, name: str, value: float) -> ExperimentConfig:
    """Copy of ``config`` with one sweepable parameter set to ``value``.

    Sensor parameters are set on every sensor. ``sensors.snr_db`` sets the
    channel noise to ``10**(-snr/10)``; ``sensors.obs_snr_db`` sets the
    amplitude to ``sigma_v * 10**(snr/20)``.
    """
    if name not in SWEEPABLE:
        raise KeyError(f"unknown sweep parameter {name!r}")
    value = float(value)
    if name == "harvest.rate":
        return replace(config, harvest=HarvestModel(value))
    if name == "policy.capacity":
        if value != int(value):
            raise ValueError("capacity must be an integer")
        return replace(config, policy=replace(config.policy, capacity=int(value)))
    if name == "policy.c1":
        return replace(config, policy=replace(config.policy, coeffs=(value, *config.policy.coeffs[1:])))
    if name == "priors.pi0":
        return replace(config, priors=Priors(value))
    if name == "sensors.count":
        if value != int(value) or value < 1:
            raise ValueError("sensor count must be a positive integer")
        return replace(config, sensors=(config.sensors[0],) * int(value))
    if name == "sensors.mean_sq_gain":
        return _with_sensors(config, lambda s: replace(s, mean_sq_gain=value))
    if name == "sensors.ch_noise_var":
        return _with_sensors(config, lambda s: replace(s, ch_noise_var=value))
    if name == "sensors.snr_db":
        return _with_sensors(config, lambda s: replace(s, ch_noise_var=10.0 ** (-value / 10.0)))
    if name == "sensors.obs_snr_db":
        def amp(s):
            if s.deployment is not None:
                raise ValueError("obs_snr_db applies to fixed-amplitude sensors only")
            return replace(s, signal_amplitude=math.sqrt(s.obs_noise_var) * 10.0 ** (value / 20.0))
        return _with_sensors(config, amp)

    def power(s):
        if s.deployment is None:
            raise ValueError("source_power applies to randomly deployed sensors only")
        return replace(s, deployment=replace(s.deployment, source_power=value))
    return _with_sensors(config, power)
