"""YAML configuration files.

Schema (every key optional unless marked)::

    seed: 0                      # 64-bit unsigned
    trials: 10000
    fc_amplitude: genie          # or expected (FC uses the mean amplitude per interval)
    priors:                      # equal priors when omitted
      pi0: 0.5
      tau: 0.0                   # must equal log(pi0 / (1 - pi0)) if given
    policy:                      # required
      capacity: 3                # required
      coeffs: [0.5, 1.0]         # required, one per gain interval
      unit_energy: 1.0
    harvest:
      rate: 2.0                  # required
    sensors:                     # required, non-empty list
      - count: 10                # replicate this entry
        signal_amplitude: 1.0    # either this ...
        deployment:              # ... or this
          source_power: 10.0
          inner_radius: 1.0
          outer_radius: 100.0
        obs_noise_var: 1.0       # required
        ch_noise_var: 1.0        # required
        mean_sq_gain: 2.0        # required
    sweep:
      - name: harvest.rate
        values: [1.0, 2.0, 3.0]

Unknown keys are errors. :func:`dump_config` writes the canonical form, which
:func:`load_config` reads back to an equal object.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any

import yaml

from .model import (
    Deployment,
    ExperimentConfig,
    HarvestModel,
    PowerPolicy,
    Priors,
    SensorModel,
    validate,
)


class ConfigError(ValueError):
    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


_TOP = {"seed", "trials", "fc_amplitude", "priors", "policy", "harvest", "sensors", "sweep"}
_SENSOR = {"count", "signal_amplitude", "deployment", "obs_noise_var", "ch_noise_var", "mean_sq_gain"}
_DEPLOY = {"source_power", "inner_radius", "outer_radius"}


def _check_keys(d, allowed, where, errors):
    if not isinstance(d, dict):
        errors.append(f"{where}: expected a mapping")
        return False
    for k in d:
        if k not in allowed:
            errors.append(f"{where}: unknown key {k!r}")
    return True


def _real(d, key, where, errors, default=None, required=True):
    if key not in d:
        if required and default is None:
            errors.append(f"{where}.{key}: missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"{where}.{key}: expected a number")
        return default
    return float(v)


def _int(d, key, where, errors, default=None):
    if key not in d:
        if default is None:
            errors.append(f"{where}.{key}: missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        errors.append(f"{where}.{key}: expected an integer")
        return default
    return v


def config_from_dict(raw: Any) -> ExperimentConfig:
    """Build and validate a config from parsed YAML; raises ConfigError."""
    errors: list[str] = []
    if not _check_keys(raw, _TOP, "config", errors):
        raise ConfigError(errors)

    pr = raw.get("priors", {})
    priors = None
    if _check_keys(pr, {"pi0", "tau"}, "priors", errors):
        pi0 = _real(pr, "pi0", "priors", errors, default=0.5)
        tau = _real(pr, "tau", "priors", errors, required=False)
        if pi0 is not None and 0.0 < pi0 < 1.0:
            derived = math.log(pi0 / (1.0 - pi0))
            if tau is not None and abs(tau - derived) > 1e-12:
                errors.append("priors: tau inconsistent with pi0")
            priors = Priors(pi0)
        elif pi0 is not None:
            errors.append("priors.pi0: must lie in (0, 1)")

    policy = None
    po = raw.get("policy")
    if po is None:
        errors.append("policy: missing")
    elif _check_keys(po, {"capacity", "coeffs", "unit_energy"}, "policy", errors):
        cap = _int(po, "capacity", "policy", errors)
        coeffs = po.get("coeffs")
        if not isinstance(coeffs, list) or not all(
            isinstance(c, (int, float)) and not isinstance(c, bool) for c in coeffs
        ):
            errors.append("policy.coeffs: expected a list of numbers")
            coeffs = None
        ue = _real(po, "unit_energy", "policy", errors, default=1.0)
        if cap is not None and coeffs is not None:
            policy = PowerPolicy(cap, tuple(float(c) for c in coeffs), ue)

    harvest = None
    hv = raw.get("harvest")
    if hv is None:
        errors.append("harvest: missing")
    elif _check_keys(hv, {"rate"}, "harvest", errors):
        rate = _real(hv, "rate", "harvest", errors)
        if rate is not None:
            harvest = HarvestModel(rate)

    sensors: list[SensorModel] = []
    raw_sensors = raw.get("sensors")
    if not isinstance(raw_sensors, list) or not raw_sensors:
        errors.append("sensors: expected a non-empty list")
        raw_sensors = []
    for n, s in enumerate(raw_sensors):
        where = f"sensors[{n}]"
        if not _check_keys(s, _SENSOR, where, errors):
            continue
        count = _int(s, "count", where, errors, default=1)
        dep = None
        if "deployment" in s:
            d = s["deployment"]
            if _check_keys(d, _DEPLOY, where + ".deployment", errors):
                vals = [_real(d, k, where + ".deployment", errors) for k in
                        ("source_power", "inner_radius", "outer_radius")]
                if None not in vals:
                    dep = Deployment(*vals)
        model = SensorModel(
            obs_noise_var=_real(s, "obs_noise_var", where, errors),
            ch_noise_var=_real(s, "ch_noise_var", where, errors),
            mean_sq_gain=_real(s, "mean_sq_gain", where, errors),
            signal_amplitude=_real(s, "signal_amplitude", where, errors, required=False),
            deployment=dep,
        )
        if count is not None and count < 1:
            errors.append(f"{where}.count: must be >= 1")
        sensors.extend([model] * max(count or 1, 1))

    sweep = []
    for n, item in enumerate(raw.get("sweep", []) or []):
        where = f"sweep[{n}]"
        if not _check_keys(item, {"name", "values"}, where, errors):
            continue
        values = item.get("values")
        if not isinstance(values, list):
            errors.append(f"{where}.values: expected a list")
            continue
        sweep.append((str(item.get("name")), tuple(float(v) for v in values)))

    trials = _int(raw, "trials", "config", errors, default=10000)
    seed = _int(raw, "seed", "config", errors, default=0)
    fc_amplitude = raw.get("fc_amplitude", "genie")

    if errors:
        raise ConfigError(errors)
    config = ExperimentConfig(tuple(sensors), policy, harvest, priors, trials, seed, tuple(sweep),
                              str(fc_amplitude))
    problems = validate(config)
    if problems:
        raise ConfigError(problems)
    return config


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}")
    return parse_config(path.read_text())


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return config_from_dict(raw)


def _sensor_dict(s: SensorModel, count: int) -> dict:
    d: dict[str, Any] = {"count": count}
    if s.signal_amplitude is not None:
        d["signal_amplitude"] = s.signal_amplitude
    if s.deployment is not None:
        d["deployment"] = {
            "source_power": s.deployment.source_power,
            "inner_radius": s.deployment.inner_radius,
            "outer_radius": s.deployment.outer_radius,
        }
    d["obs_noise_var"] = s.obs_noise_var
    d["ch_noise_var"] = s.ch_noise_var
    d["mean_sq_gain"] = s.mean_sq_gain
    return d


def config_to_dict(config: ExperimentConfig) -> dict:
    groups: list[list] = []
    for s in config.sensors:
        if groups and groups[-1][0] == s:
            groups[-1][1] += 1
        else:
            groups.append([s, 1])
    out: dict[str, Any] = {
        "seed": config.seed,
        "trials": config.trials,
        "fc_amplitude": config.fc_amplitude,
        "priors": {"pi0": config.priors.pi0, "tau": config.priors.tau},
        "policy": {
            "capacity": config.policy.capacity,
            "coeffs": list(config.policy.coeffs),
            "unit_energy": config.policy.unit_energy,
        },
        "harvest": {"rate": config.harvest.rate},
        "sensors": [_sensor_dict(s, c) for s, c in groups],
    }
    if config.sweep:
        out["sweep"] = [{"name": n, "values": list(v)} for n, v in config.sweep]
    return out


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False, default_flow_style=None)
