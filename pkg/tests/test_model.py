import math
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ehwsn.config import ConfigError, config_from_dict, dump_config, load_config, parse_config
from ehwsn.model import Deployment, PowerPolicy, Priors, SensorModel, apply_parameter, validate

from conftest import make_config


def test_validate_rejects_non_increasing_coeffs():
    cfg = make_config(coeffs=(0.5, 0.5))
    assert validate(cfg) == ["coeffs not strictly increasing"]


def test_validate_accepts_consistent_priors():
    cfg = replace(make_config(), priors=Priors(0.5, 0.0))
    assert validate(cfg) == []


def test_validate_rejects_degenerate_annulus():
    s = SensorModel(1.0, 1.0, 2.0, deployment=Deployment(10.0, 5.0, 5.0))
    cfg = replace(make_config(), sensors=(s,))
    assert validate(cfg) == ["outer_radius must exceed inner_radius"]


def test_validate_flags_inconsistent_tau():
    cfg = replace(make_config(), priors=Priors(0.5, 0.3))
    assert "tau inconsistent with pi0" in validate(cfg)


def test_validate_collects_several_messages():
    cfg = replace(make_config(coeffs=(1.5, 0.2)), sensors=())
    msgs = validate(cfg)
    assert "at least one sensor is required" in msgs
    assert "coeffs must lie in [0, 1]" in msgs
    assert "coeffs not strictly increasing" in msgs


def test_validate_flags_bad_sweep():
    cfg = make_config(sweep=(("policy.c9", (1.0,)), ("harvest.rate", ())))
    msgs = validate(cfg)
    assert any("unknown sweep parameter" in m for m in msgs)
    assert any("empty grid" in m for m in msgs)


def test_priors_derive_tau():
    assert Priors(0.5).tau == 0.0
    assert Priors(0.8).tau == pytest.approx(math.log(4.0))
    assert Priors(0.8).pi1 == pytest.approx(0.2)


BASIC = """
seed: 7
trials: 100
policy: {capacity: 3, coeffs: [0.4, 1.0]}
harvest: {rate: 2.0}
sensors:
  - {count: 2, signal_amplitude: 1.0, obs_noise_var: 1.0, ch_noise_var: 1.0, mean_sq_gain: 2.0}
  - deployment: {source_power: 10.0, inner_radius: 1.0, outer_radius: 100.0}
    obs_noise_var: 1.0
    ch_noise_var: 2.0
    mean_sq_gain: 3.0
"""


def test_parse_config_expands_counts_and_defaults_priors():
    cfg = parse_config(BASIC)
    assert len(cfg.sensors) == 3
    assert cfg.sensors[0] == cfg.sensors[1]
    assert cfg.sensors[2].is_random
    assert cfg.priors.pi0 == 0.5 and cfg.priors.tau == 0.0
    assert cfg.seed == 7 and cfg.trials == 100


def test_parse_config_rejects_unknown_keys():
    with pytest.raises(ConfigError) as err:
        parse_config(BASIC + "colour: blue\n")
    assert any("unknown key 'colour'" in m for m in err.value.messages)


def test_parse_config_runs_validation():
    with pytest.raises(ConfigError) as err:
        parse_config(BASIC.replace("[0.4, 1.0]", "[0.5, 0.5]"))
    assert err.value.messages == ["coeffs not strictly increasing"]


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="config not found"):
        load_config(tmp_path / "absent.yaml")


def test_config_rejects_tau_mismatch():
    raw = {"priors": {"pi0": 0.5, "tau": 1.0}, "policy": {"capacity": 3, "coeffs": [0.5, 1.0]},
           "harvest": {"rate": 1.0},
           "sensors": [{"signal_amplitude": 1.0, "obs_noise_var": 1.0, "ch_noise_var": 1.0, "mean_sq_gain": 1.0}]}
    with pytest.raises(ConfigError, match="tau inconsistent"):
        config_from_dict(raw)


positive = st.floats(0.01, 100.0, allow_nan=False)


@st.composite
def configs(draw):
    n_groups = draw(st.integers(1, 3))
    sensors = []
    for _ in range(n_groups):
        if draw(st.booleans()):
            s = SensorModel(draw(positive), draw(positive), draw(positive), signal_amplitude=draw(positive))
        else:
            r0 = draw(st.floats(0.1, 10.0))
            s = SensorModel(draw(positive), draw(positive), draw(positive),
                            deployment=Deployment(draw(positive), r0, r0 + draw(positive)))
        sensors += [s] * draw(st.integers(1, 4))
    m = draw(st.integers(1, 4))
    coeffs = sorted(set(draw(st.lists(st.floats(0.0, 1.0), min_size=m, max_size=m, unique=True))))
    cfg = make_config(capacity=draw(st.integers(1, 60)), coeffs=tuple(coeffs), rate=draw(positive),
                      pi0=draw(st.floats(0.01, 0.99)), seed=draw(st.integers(0, 2**64 - 1)),
                      trials=draw(st.integers(1, 10**6)))
    return replace(cfg, sensors=tuple(sensors))


@given(configs())
def test_serialize_parse_serialize_is_byte_identical(cfg):
    text = dump_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert dump_config(again) == text


@given(configs())
def test_validate_is_pure(cfg):
    assert validate(cfg) == validate(cfg) == []


def test_apply_parameter_variants():
    cfg = make_config(n=2)
    assert apply_parameter(cfg, "harvest.rate", 3.0).harvest.rate == 3.0
    assert apply_parameter(cfg, "policy.c1", 0.2).policy.coeffs == (0.2, 1.0)
    assert apply_parameter(cfg, "policy.capacity", 10).policy.capacity == 10
    assert len(apply_parameter(cfg, "sensors.count", 5).sensors) == 5
    assert apply_parameter(cfg, "sensors.snr_db", -10).sensors[1].ch_noise_var == pytest.approx(10.0)
    assert apply_parameter(cfg, "sensors.obs_snr_db", 20).sensors[0].signal_amplitude == pytest.approx(10.0)
    assert apply_parameter(cfg, "priors.pi0", 0.8).priors.tau == pytest.approx(math.log(4))
    with pytest.raises(KeyError):
        apply_parameter(cfg, "sensors.colour", 1)
    with pytest.raises(ValueError):
        apply_parameter(cfg, "sensors.source_power", 1)


def test_power_policy_interval_count():
    assert PowerPolicy(3, (0.2, 0.5, 1.0)).intervals == 3
