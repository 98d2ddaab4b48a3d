"""Monte Carlo ground truth: battery dynamics, local tests, fading, fusion.

Random numbers come from counter-based Philox streams keyed by
``(seed, purpose, block)`` where trials are grouped in fixed blocks of
``BLOCK`` trials. Every block can therefore be generated independently, and
results do not depend on how blocks are spread over workers.

One trial is one slot. By default each trial draws the battery levels from the
analytic steady state; ``evolve=True`` starts empty batteries, runs an explicit
burn-in and carries the levels from trial to trial instead.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .battery import build_chain, truncated_arrival_pmf, units_table
from .detection import operating_point
from .fusion import decide, llr_fc_arrays, pe_clt_arrays, pe_low_snr_arrays
from .model import ExperimentConfig, HarvestModel, OperatingPoint, PowerPolicy, Priors, Quantizer
from .quantizer import quantize_gain, quantizer_from_thresholds

BLOCK = 8192
BURN_IN_CAP = 100_000
TRACE_VERSION = 1

# purpose tags of the random streams
_HYP, _BATTERY, _OBS, _INTENSITY, _GAIN, _NOISE, _ARRIVAL, _TX, _INTERVAL = range(9)


def stream(seed: int, purpose: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(purpose, block))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PeEstimate:
    pe: float
    trials: int
    ci95: float
    seed: int
    errors: int = 0

    @classmethod
    def from_counts(cls, errors: int, trials: int, seed: int) -> "PeEstimate":
        pe = errors / trials
        return cls(pe, trials, 1.96 * math.sqrt(pe * (1.0 - pe) / trials), seed, errors)


@dataclass(frozen=True)
class TrialOutcome:
    hypothesis: int
    decision: int
    delta: float
    level: tuple[int, ...]
    arrival: tuple[int, ...]
    interval: tuple[int, ...]
    units: tuple[int, ...]


@dataclass
class TrialBatch:
    """Per-trial arrays; sensor quantities have shape (trials, sensors)."""

    hypothesis: np.ndarray
    decision: np.ndarray
    delta: np.ndarray
    level: np.ndarray
    arrival: np.ndarray
    interval: np.ndarray
    units: np.ndarray
    transmitted: np.ndarray

    def outcomes(self):
        for t in range(self.hypothesis.size):
            yield TrialOutcome(int(self.hypothesis[t]), int(self.decision[t]), float(self.delta[t]),
                               tuple(self.level[t].tolist()), tuple(self.arrival[t].tolist()),
                               tuple(self.interval[t].tolist()), tuple(self.units[t].tolist()))

    @property
    def errors(self) -> int:
        return int(np.count_nonzero(self.decision != self.hypothesis))


# -- single-sensor battery oracle ---------------------------------------------

def burn_in_slots(psi: np.ndarray, capacity: int) -> int:
    """``10 K max(1, 1/p_min)`` slots, p_min the smallest nonzero transition probability."""
    p = psi[psi > 0]
    p_min = float(p.min()) if p.size else 1.0
    return int(min(BURN_IN_CAP, math.ceil(10 * capacity * max(1.0, 1.0 / p_min))))


def simulate_battery(policy: PowerPolicy, harvest: HarvestModel, quantizer: Quantizer,
                     op: OperatingPoint, priors: Priors, slots: int, seed: int,
                     burn_in: int | None = None) -> np.ndarray:
    """Empirical distribution of the battery level at the start of a slot.

    Each slot draws the hypothesis, the local decision, the gain interval and
    a Poisson arrival, then applies the battery recursion directly.
    """
    if slots < 1:
        raise ValueError("slots must be >= 1")
    k = policy.capacity
    if burn_in is None:
        from .battery import transition_matrix

        burn_in = burn_in_slots(transition_matrix(policy, harvest, quantizer, op, priors), k)
    total = burn_in + slots
    h = stream(seed, _HYP, 0).random(total) < priors.pi1
    u = stream(seed, _TX, 0).random(total)
    tx = np.where(h, u < op.pd, u < op.pf)
    interval = stream(seed, _INTERVAL, 0).choice(len(quantizer.probs), size=total, p=np.asarray(quantizer.probs))
    arrivals = stream(seed, _ARRIVAL, 0).poisson(harvest.rate, size=total)
    # event code 0 = silent, l = transmit in interval l
    code = np.where(tx, interval + 1, 0).tolist()
    spend = [[0] * (k + 1)] + units_table(policy).tolist()
    arrivals = np.minimum(arrivals, k).tolist()
    counts = [0] * (k + 1)
    level = 0
    for t in range(total):
        if t >= burn_in:
            counts[level] += 1
        level = min(level - spend[code[t]][level] + arrivals[t], k)
    return np.asarray(counts, dtype=float) / slots


# -- network trials ------------------------------------------------------------

@dataclass(frozen=True)
class _Setup:
    """Everything a trial needs about the network under a given design."""

    priors: Priors
    policy: PowerPolicy
    arrival_pmf: np.ndarray
    theta: np.ndarray
    pf: np.ndarray
    pd: np.ndarray
    thresholds: tuple
    steady: np.ndarray          # (N, K+1)
    amplitude: np.ndarray       # nan for random deployment
    obs_sd: np.ndarray
    ch_var: np.ndarray
    mean_sq_gain: np.ndarray
    deployments: tuple
    units: np.ndarray           # (M, K+1)
    fc_alpha: np.ndarray | None = None   # (N, M) amplitude assumed at the FC; None = genie


def _setup(config: ExperimentConfig, design) -> _Setup:
    if len(design.sensors) != len(config.sensors):
        raise ValueError("design and configuration disagree on the number of sensors")
    theta, pf, pd, thr, steady = [], [], [], [], []
    cache = {}
    for model, sd in zip(config.sensors, design.sensors):
        key = (model, sd.theta, sd.thresholds)
        if key not in cache:
            op = operating_point(sd.theta, model)
            quant = quantizer_from_thresholds(sd.thresholds, model.mean_sq_gain)
            chain = build_chain(config.policy, config.harvest, quant, op, config.priors)
            cache[key] = (op, chain.steady)
        op, phi = cache[key]
        theta.append(op.theta)
        pf.append(op.pf)
        pd.append(op.pd)
        thr.append(tuple(sd.thresholds))
        steady.append(phi)
    s = config.sensors
    return _Setup(
        priors=config.priors,
        policy=config.policy,
        arrival_pmf=truncated_arrival_pmf(config.harvest.rate, config.policy.capacity),
        theta=np.array(theta), pf=np.array(pf), pd=np.array(pd), thresholds=tuple(thr),
        steady=np.array(steady),
        amplitude=np.array([m.signal_amplitude if m.signal_amplitude is not None else np.nan for m in s]),
        obs_sd=np.sqrt([m.obs_noise_var for m in s]),
        ch_var=np.array([m.ch_noise_var for m in s]),
        mean_sq_gain=np.array([m.mean_sq_gain for m in s]),
        deployments=tuple(m.deployment for m in s),
        units=units_table(config.policy),
        fc_alpha=_expected_alpha(config, np.array(steady)) if config.fc_amplitude == "expected" else None,
    )


def _expected_alpha(config: ExperimentConfig, steady: np.ndarray) -> np.ndarray:
    # E[alpha | interval] over the steady-state battery, per sensor
    amp = np.sqrt(units_table(config.policy) * config.policy.unit_energy)
    return steady @ amp.T


def _sample_levels(steady: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(steady, axis=1)
    cdf[:, -1] = 1.0
    return np.array([np.searchsorted(cdf[n], u[:, n], side="right") for n in range(steady.shape[0])]).T


def _amplitudes(setup: _Setup, seed: int, block: int, size: int) -> np.ndarray:
    n = setup.amplitude.size
    amp = np.broadcast_to(setup.amplitude, (size, n)).copy()
    rng = stream(seed, _INTENSITY, block)
    for i, dep in enumerate(setup.deployments):
        if dep is None:
            continue
        # radius uniform on [r0, r1]; received amplitude s = P0 / r**2
        r = rng.uniform(dep.inner_radius, dep.outer_radius, size)
        amp[:, i] = dep.source_power / r**2
    return amp


def _local_and_channel(setup: _Setup, seed: int, block: int, size: int):
    n = setup.pf.size
    h = (stream(seed, _HYP, block).random(size) < setup.priors.pi1).astype(np.int8)
    amp = _amplitudes(setup, seed, block, size)
    x = h[:, None] * amp + setup.obs_sd * stream(seed, _OBS, block).standard_normal((size, n))
    var = setup.obs_sd**2
    stat = (amp * x - 0.5 * amp * amp) / var
    tx = stat >= setup.theta
    g = np.sqrt(stream(seed, _GAIN, block).exponential(1.0, (size, n)) * setup.mean_sq_gain)
    interval = np.column_stack([quantize_gain(g[:, i], setup.thresholds[i]) for i in range(n)])
    arrivals = stream(seed, _ARRIVAL, block).choice(setup.arrival_pmf.size, size=(size, n), p=setup.arrival_pmf)
    noise = np.sqrt(setup.ch_var) * stream(seed, _NOISE, block).standard_normal((size, n))
    return h, tx, g, interval, arrivals, noise


def _fuse(setup: _Setup, h, tx, g, interval, level, noise, arrivals) -> TrialBatch:
    cand = setup.units[interval - 1, level]
    units = np.where(tx, cand, 0)
    alpha = np.sqrt(cand * setup.policy.unit_energy)
    y = g * alpha * tx + noise
    if setup.fc_alpha is not None:
        alpha = np.take_along_axis(np.broadcast_to(setup.fc_alpha, interval.shape + setup.fc_alpha.shape[-1:]),
                                   (interval - 1)[..., None], axis=-1)[..., 0]
    delta = llr_fc_arrays(y, g, alpha, setup.pf, setup.pd, setup.ch_var)
    dec = decide(delta, setup.priors.tau).astype(np.int8)
    return TrialBatch(h, dec, delta, level, arrivals, interval, units, tx)


def _steady_block(setup: _Setup, seed: int, block: int, size: int) -> TrialBatch:
    h, tx, g, interval, arrivals, noise = _local_and_channel(setup, seed, block, size)
    level = _sample_levels(setup.steady, stream(seed, _BATTERY, block).random((size, setup.pf.size)))
    return _fuse(setup, h, tx, g, interval, level, noise, arrivals)


def _evolved(setup: _Setup, trials: int, seed: int, burn_in: int) -> TrialBatch:
    n = setup.pf.size
    k = setup.policy.capacity
    # burn-in from empty batteries with the same per-slot dynamics
    level = np.zeros(n, dtype=np.int64)
    done = 0
    block = 0
    parts = []
    while done < burn_in + trials:
        size = BLOCK
        h, tx, g, interval, arrivals, noise = _local_and_channel(setup, seed, block, size)
        levels = np.empty((size, n), dtype=np.int64)
        for t in range(size):
            levels[t] = level
            used = np.where(tx[t], setup.units[interval[t] - 1, level], 0)
            level = np.minimum(level - used + arrivals[t], k)
        batch = _fuse(setup, h, tx, g, interval, levels, noise, arrivals)
        lo = max(0, burn_in - done)
        hi = min(size, burn_in + trials - done)
        if hi > lo:
            parts.append(_slice(batch, lo, hi))
        done += size
        block += 1
    return _concat(parts)


def _slice(b: TrialBatch, lo: int, hi: int) -> TrialBatch:
    return TrialBatch(*(getattr(b, f)[lo:hi] for f in TrialBatch.__dataclass_fields__))


def _concat(parts) -> TrialBatch:
    return TrialBatch(*(np.concatenate([getattr(p, f) for p in parts]) for f in TrialBatch.__dataclass_fields__))


def _block_job(args):
    setup, seed, block, size = args
    return _steady_block(setup, seed, block, size)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("EHWSN_WORKERS", "1")))
    except ValueError:
        return 1


def trial_batch(config: ExperimentConfig, design, trials: int, seed: int, *,
                evolve: bool = False, burn_in: int | None = None, workers: int | None = None) -> TrialBatch:
    """Run ``trials`` independent slots and keep every per-trial quantity."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    setup = _setup(config, design)
    if evolve:
        if burn_in is None:
            from .battery import transition_components

            comps = transition_components(config.policy, setup.arrival_pmf)
            burn_in = burn_in_slots(comps.max(axis=0), config.policy.capacity)
        return _evolved(setup, trials, seed, burn_in)
    jobs = [(setup, seed, b, min(BLOCK, trials - b * BLOCK)) for b in range(math.ceil(trials / BLOCK))]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block_job, jobs))
    else:
        parts = [_block_job(j) for j in jobs]
    return _concat(parts)


def run_trials(config: ExperimentConfig, design, trials: int, seed: int, **kw) -> PeEstimate:
    """Monte Carlo error probability of the fused decision."""
    batch = trial_batch(config, design, trials, seed, **kw)
    return PeEstimate.from_counts(batch.errors, trials, seed)


def write_trace(path, batch: TrialBatch) -> None:
    """One row per trial: trial, hypothesis, decision, delta, then per-sensor
    level, arrival, interval and units in sensor order."""
    n = batch.level.shape[1]
    header = ["trial", "hypothesis", "decision", "delta"]
    for f in ("level", "arrival", "interval", "units"):
        header += [f"{f}_{i}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        fh.write(f"# trace schema v{TRACE_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(batch.hypothesis.size):
            w.writerow([t, int(batch.hypothesis[t]), int(batch.decision[t]), f"{batch.delta[t]:.17g}",
                        *batch.level[t].tolist(), *batch.arrival[t].tolist(),
                        *batch.interval[t].tolist(), *batch.units[t].tolist()])


def approx_pe(config: ExperimentConfig, design, draws: int, seed: int) -> tuple[float, float]:
    """Low-SNR and CLT approximations averaged over gains and steady-state batteries."""
    setup = _setup(config, design)
    n = setup.pf.size
    rng_g = stream(seed, _GAIN, 0)
    g = np.sqrt(rng_g.exponential(1.0, (draws, n)) * setup.mean_sq_gain)
    interval = np.column_stack([quantize_gain(g[:, i], setup.thresholds[i]) for i in range(n)])
    level = _sample_levels(setup.steady, stream(seed, _BATTERY, 0).random((draws, n)))
    alpha = np.sqrt(setup.units[interval - 1, level] * setup.policy.unit_energy)
    low = float(np.mean(pe_low_snr_arrays(g, alpha, setup.pf, setup.pd, setup.priors, setup.ch_var)))
    clt = float(np.mean(pe_clt_arrays(g, alpha, setup.pf, setup.pd, setup.priors, setup.ch_var)))
    return low, clt
