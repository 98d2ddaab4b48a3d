import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from conftest import make_config

from ehwsn.battery import build_chain
from ehwsn.detection import operating_point
from ehwsn.model import HarvestModel, OperatingPoint, PowerPolicy, Priors
from ehwsn.optimize import fixed_design
from ehwsn.quantizer import interval_probs, quantizer_from_thresholds
from ehwsn.simulate import PeEstimate, approx_pe, run_trials, simulate_battery, trial_batch, write_trace


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _quant(mu=1.0, gamma=1.0):
    return quantizer_from_thresholds((0.0, mu, math.inf), gamma)


def test_battery_saturates_under_heavy_harvest():
    freq = simulate_battery(PowerPolicy(5, (0.05, 0.1)), HarvestModel(50.0), _quant(),
                            OperatingPoint(0.0, 0.3, 0.9), Priors(0.5), 20000, seed=1)
    assert freq[-1] > 0.99


def test_battery_without_transmissions_fills_up():
    freq = simulate_battery(PowerPolicy(4, (0.5, 1.0)), HarvestModel(0.3), _quant(),
                            OperatingPoint(0.0, 0.0, 0.0), Priors(0.5), 5000, seed=2, burn_in=500)
    assert freq[-1] == 1.0


def test_battery_simulation_matches_steady_state():
    policy, harvest, priors = PowerPolicy(3, (0.4, 1.0)), HarvestModel(4.0), Priors(0.5)
    model = make_config().sensors[0]
    op = operating_point(3.0, model)
    quant = quantizer_from_thresholds((0.0, 1.5, math.inf), model.mean_sq_gain)
    chain = build_chain(policy, harvest, quant, op, priors)
    freq = simulate_battery(policy, harvest, quant, op, priors, 10**6, seed=3)
    assert tv(freq, chain.steady) < 0.01


def test_battery_simulation_is_deterministic():
    args = (PowerPolicy(3, (0.5, 1.0)), HarvestModel(1.0), _quant(), OperatingPoint(0.0, 0.2, 0.7), Priors(0.4), 5000)
    assert np.array_equal(simulate_battery(*args, seed=5), simulate_battery(*args, seed=5))
    with pytest.raises(ValueError):
        simulate_battery(*args[:-1], 0, seed=5)


def test_noiseless_sensor_makes_no_errors():
    cfg = make_config(n=1, capacity=3, rate=50.0, amplitude=100.0, ch_noise_var=1e-12)
    est = run_trials(cfg, fixed_design(cfg, 0.0, [1.0]), 20000, seed=4)
    assert est.pe < 1e-3


@pytest.mark.parametrize("pi0", [0.3, 0.5, 0.7])
def test_silent_network_guesses_from_priors(pi0):
    cfg = make_config(n=4, pi0=pi0)
    est = run_trials(cfg, fixed_design(cfg, math.inf, [1.0]), 20000, seed=6)
    assert abs(est.pe - min(pi0, 1 - pi0)) <= max(est.ci95, 1.96 * math.sqrt(pi0 * (1 - pi0) / 20000))


def test_energy_too_small_to_spend_is_silent():
    cfg = make_config(n=3, capacity=3, coeffs=(0.1, 0.2))
    batch = trial_batch(cfg, fixed_design(cfg, 0.0, [1.0]), 5000, seed=7)
    assert not batch.units.any()
    assert np.all(batch.delta == 0.0)


def test_low_snr_network_matches_linearized_approximation():
    cfg = make_config(n=10, amplitude=1.0, ch_noise_var=100.0)
    design = fixed_design(cfg, 0.0, [1.0])
    est = run_trials(cfg, design, 100_000, seed=8)
    low, _ = approx_pe(cfg, design, 20000, seed=8)
    assert abs(est.pe - low) < 0.05


def test_results_do_not_depend_on_worker_count():
    cfg = make_config(n=3)
    design = fixed_design(cfg, 0.5, [1.0])
    one = trial_batch(cfg, design, 20000, seed=9, workers=1)
    many = trial_batch(cfg, design, 20000, seed=9, workers=3)
    for f in one.__dataclass_fields__:
        assert np.array_equal(getattr(one, f), getattr(many, f))


def test_prefix_is_stable_across_trial_counts():
    cfg = make_config(n=2)
    design = fixed_design(cfg, 0.5, [1.0])
    short = trial_batch(cfg, design, 1000, seed=10)
    long = trial_batch(cfg, design, 20000, seed=10)
    assert np.array_equal(short.delta, long.delta[:1000])


@pytest.mark.parametrize("evolve", [False, True])
def test_spending_never_exceeds_stored_energy(evolve):
    cfg = make_config(n=3, capacity=5, coeffs=(0.6, 1.0), rate=1.0)
    batch = trial_batch(cfg, fixed_design(cfg, -1.0, [1.0]), 20000, seed=11, evolve=evolve)
    assert np.all(batch.units <= batch.level)
    assert np.all(batch.decision == (batch.delta >= cfg.priors.tau))


def test_evolved_trajectories_follow_battery_recursion():
    cfg = make_config(n=2, capacity=4, coeffs=(0.5, 1.0), rate=1.5)
    b = trial_batch(cfg, fixed_design(cfg, 0.0, [1.0]), 10000, seed=12, evolve=True)
    nxt = np.minimum(b.level[:-1] - b.units[:-1] + b.arrival[:-1], cfg.policy.capacity)
    assert np.array_equal(nxt, b.level[1:])


def test_evolved_levels_reach_steady_state():
    cfg = make_config(n=1, capacity=4, coeffs=(0.5, 1.0), rate=1.5)
    design = fixed_design(cfg, 0.0, [1.0])
    b = trial_batch(cfg, design, 200_000, seed=13, evolve=True)
    sd = design.sensors[0]
    chain = build_chain(cfg.policy, cfg.harvest, quantizer_from_thresholds(sd.thresholds, 2.0),
                        operating_point(sd.theta, cfg.sensors[0]), cfg.priors)
    freq = np.bincount(b.level[:, 0], minlength=5) / b.level.shape[0]
    assert tv(freq, chain.steady) < 0.01


def test_local_decisions_and_intervals_match_analytic_rates():
    cfg = make_config(n=2, amplitude=1.5, mean_sq_gain=1.5)
    design = fixed_design(cfg, 0.3, [0.8])
    b = trial_batch(cfg, design, 100_000, seed=14)
    sd = design.sensors[0]
    for h, p in ((0, sd.pf), (1, sd.pd)):
        sel = b.transmitted[b.hypothesis == h]
        se = math.sqrt(p * (1 - p) / sel.size)
        assert np.all(np.abs(sel.mean(axis=0) - p) < 3 * se)
    probs = interval_probs(sd.thresholds, 1.5)
    for l, p in enumerate(probs, start=1):
        se = math.sqrt(p * (1 - p) / b.interval.shape[0])
        assert np.all(np.abs((b.interval == l).mean(axis=0) - p) < 3 * se)


def test_expected_amplitude_at_fusion_center_costs_accuracy():
    cfg = make_config(n=5, amplitude=2.0, ch_noise_var=0.5)
    design = fixed_design(cfg, 0.0, [1.0])
    genie = run_trials(cfg, design, 100_000, seed=15)
    mean = run_trials(replace(cfg, fc_amplitude="expected"), design, 100_000, seed=15)
    assert mean.pe > genie.pe


def test_confidence_interval_formula():
    est = PeEstimate.from_counts(250, 1000, seed=3)
    assert est.pe == 0.25
    assert est.ci95 == pytest.approx(1.96 * math.sqrt(0.25 * 0.75 / 1000), rel=1e-15)


def test_trace_has_one_row_per_trial(tmp_path):
    cfg = make_config(n=2)
    b = trial_batch(cfg, fixed_design(cfg, 0.0, [1.0]), 50, seed=16)
    path = tmp_path / "trace.csv"
    write_trace(path, b)
    lines = path.read_text().splitlines()
    assert lines[0] == "# trace schema v1"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["trial", "hypothesis", "decision", "delta", "level_0", "level_1", "arrival_0", "arrival_1",
                       "interval_0", "interval_1", "units_0", "units_1"]
    assert len(rows) == 51
    assert [float(r[3]) for r in rows[1:]] == b.delta.tolist()
    first = next(b.outcomes())
    assert int(rows[1][1]) == first.hypothesis and tuple(int(v) for v in rows[1][4:6]) == first.level


def test_random_deployment_runs():
    from ehwsn.model import Deployment, SensorModel
    cfg = make_config(n=1)
    sensor = SensorModel(1.0, 1.0, 2.0, deployment=Deployment(10.0, 1.0, 5.0))
    cfg = replace(cfg, sensors=(sensor,) * 3)
    est = run_trials(cfg, fixed_design(cfg, 0.0, [1.0]), 20000, seed=17)
    assert 0.0 <= est.pe < 0.5
