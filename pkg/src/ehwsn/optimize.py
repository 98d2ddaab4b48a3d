"""Threshold design for the two constrained problems.

Both problems decouple across sensors, so each distinct sensor is solved once.
The search runs over ``(P_d, pi_1, ..., pi_{M-1})`` in the open unit box (the
last interval probability is ``1 - sum``), first on a uniform grid and then by
a shrinking local lattice around the incumbent, with a final derivative-free
constrained polish (COBYLA) that is kept only when it ranks better. The local
threshold and quantizer thresholds are recovered through the one-to-one maps.

P1: maximize sum_i Jbar_i  s.t.  sum_i alphabar_i <= alpha0
P2: minimize sum_i alphabar_i  s.t.  sum_i Jbar_i >= j0
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from .battery import (
    build_chain,
    check_structure,
    transition_components,
    transmit_probability,
    truncated_arrival_pmf,
    units_table,
)
from .detection import operating_point, threshold_for_pd
from .divergence import conditional_alpha, conditional_j, omega
from .model import ExperimentConfig, OperatingPoint, SensorModel
from .quantizer import interval_probs, quantizer_from_thresholds, thresholds_from_probs

GRID_POINTS = 64
RESOLUTION = 1e-4
MAX_EVALUATIONS = 200_000


@dataclass(frozen=True)
class SensorDesign:
    pd: float
    probs: tuple[float, ...]
    theta: float
    pf: float
    thresholds: tuple[float, ...]


@dataclass(frozen=True)
class DesignPoint:
    sensors: tuple[SensorDesign, ...]


@dataclass(frozen=True)
class SolveReport:
    problem: str
    design: DesignPoint
    objective: float
    constraint_values: tuple[float, ...]
    evaluations: int
    status: str
    trace: tuple = field(default=(), repr=False)


def sensor_design(model: SensorModel, theta: float, thresholds) -> SensorDesign:
    op = operating_point(theta, model)
    mu = tuple(float(m) for m in thresholds)
    probs = tuple(float(p) for p in interval_probs(mu, model.mean_sq_gain))
    return SensorDesign(op.pd, probs, float(theta), op.pf, mu)


def sensor_design_from_probs(model: SensorModel, pd: float, probs) -> SensorDesign:
    theta = threshold_for_pd(pd, model)
    op = operating_point(theta, model)
    mu = thresholds_from_probs(probs, model.mean_sq_gain)
    return SensorDesign(float(pd), tuple(float(p) for p in probs), theta, op.pf, tuple(float(m) for m in mu))


def fixed_design(config: ExperimentConfig, theta: float, inner_thresholds) -> DesignPoint:
    """Same local threshold and quantizer at every sensor (the non-optimized baseline)."""
    mu = [0.0, *inner_thresholds, math.inf]
    if len(mu) - 1 != config.policy.intervals:
        raise ValueError("number of thresholds does not match the power policy")
    return DesignPoint(tuple(sensor_design(s, theta, mu) for s in config.sensors))


def evaluate_design(config: ExperimentConfig, index: int, sd: SensorDesign):
    """Recompute (sum Jbar, sum alphabar, chain) for one sensor from its (theta, mu)."""
    model = config.sensors[index]
    op = operating_point(sd.theta, model)
    quant = quantizer_from_thresholds(sd.thresholds, model.mean_sq_gain)
    chain = build_chain(config.policy, config.harvest, quant, op, config.priors)
    m = config.policy.intervals
    j = sum(conditional_j(i, chain, config.policy, quant, op, model) for i in range(1, m + 1))
    p = sum(conditional_alpha(i, chain, config.policy, quant, op, config.priors) for i in range(1, m + 1))
    return j, p, chain


class _SensorProblem:
    """Vectorized evaluation of (sum Jbar, sum alphabar) for one sensor."""

    def __init__(self, config: ExperimentConfig, model: SensorModel):
        self.model = model
        self.policy = config.policy
        self.priors = config.priors
        q = truncated_arrival_pmf(config.harvest.rate, config.policy.capacity)
        self.comps = transition_components(config.policy, q)
        self.units = units_table(config.policy)
        m = config.policy.intervals
        probe = 0.5 * self.comps[0] + 0.5 * self.comps[1:].mean(axis=0)
        check_structure(probe)
        self.m = m
        self.evaluations = 0
        self._ops: dict[float, tuple[float, float]] = {}
        self._memo: dict[tuple, tuple[float, float]] = {}

    def _op(self, pd: float):
        if pd not in self._ops:
            theta = threshold_for_pd(pd, self.model)
            self._ops[pd] = (theta, operating_point(theta, self.model).pf)
        return self._ops[pd]

    def evaluate(self, points: np.ndarray):
        """``points[:, 0]`` is P_d, the rest are the free interval probabilities."""
        points = np.atleast_2d(points)
        keys = [tuple(p) for p in points.tolist()]
        todo = [i for i, k in enumerate(keys) if k not in self._memo]
        if todo:
            j, p = self._evaluate_batch(points[todo])
            for i, jj, pp in zip(todo, j, p):
                self._memo[keys[i]] = (float(jj), float(pp))
            self.evaluations += len(todo)
        out = np.array([self._memo[k] for k in keys])
        return out[:, 0], out[:, 1]

    def _evaluate_batch(self, pts: np.ndarray):
        pd = pts[:, 0]
        probs = np.column_stack([pts[:, 1:], 1.0 - pts[:, 1:].sum(axis=1)])
        pf = np.array([self._op(v)[1] for v in pd.tolist()])
        op = OperatingPoint(np.nan, pf[:, None, None], pd[:, None, None])
        p_tx = transmit_probability(OperatingPoint(np.nan, pf, pd), self.priors)

        mix = np.einsum("pm,mij->pij", probs, self.comps[1:])
        psi = (1.0 - p_tx)[:, None, None] * self.comps[0] + p_tx[:, None, None] * mix
        n = psi.shape[1]
        a = np.swapaxes(psi, 1, 2) - np.eye(n)
        a[:, -1, :] = 1.0
        rhs = np.zeros((len(pd), n, 1))
        rhs[:, -1, 0] = 1.0
        phi = np.clip(np.linalg.solve(a, rhs)[..., 0], 0.0, None)
        phi /= phi.sum(axis=1, keepdims=True)

        tails = np.cumsum(probs[:, ::-1], axis=1)[:, ::-1][:, 1:]
        gamma = self.model.mean_sq_gain
        mu_sq = np.column_stack([np.zeros(len(pd)), -gamma * np.log(tails), np.full(len(pd), np.inf)])
        s2 = self.model.ch_noise_var
        ue = self.policy.unit_energy
        om_hi = omega(self.units[None], mu_sq[:, 1:, None], op, s2, gamma, ue)
        om_lo = omega(self.units[None], mu_sq[:, :-1, None], op, s2, gamma, ue)
        j = np.einsum("pmk,pk->p", om_hi - om_lo, phi)
        power = p_tx * np.einsum("pm,mk,pk->p", probs, self.units.astype(float), phi)
        return j, power


def _rank(points, j, p, problem, bound):
    """Index of the best point: feasible first, then objective, then smaller coordinates."""
    if problem == "p1":
        feasible = p <= bound
        score = j
    else:
        feasible = j >= bound
        score = -p
    keys = [points[:, c] for c in range(points.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys + [-score, ~feasible])
    return int(order[0]), feasible


def _valid(points, eps=1e-12):
    ok = np.all((points > eps) & (points < 1.0 - eps), axis=1)
    if points.shape[1] > 1:
        ok &= points[:, 1:].sum(axis=1) < 1.0 - eps
    return ok


def _solve_sensor(prob: _SensorProblem, problem: str, bound: float, grid: int,
                  resolution: float, max_evals: int, trace: list | None):
    dim = prob.m
    axis = np.arange(1, grid + 1) / (grid + 1)
    pts = np.array(list(itertools.product(axis, repeat=dim)))
    pts = pts[_valid(pts)]
    j, p = prob.evaluate(pts)
    if trace is not None:
        trace.extend(zip(pts.tolist(), j.tolist(), p.tolist()))
    best, feasible = _rank(pts, j, p, problem, bound)
    x, xj, xp, xf = pts[best], j[best], p[best], bool(feasible[best])

    n_local = 17 if dim <= 2 else 5
    offsets = np.array(list(itertools.product(np.linspace(-2.0, 2.0, n_local), repeat=dim)))
    offsets = offsets[np.any(offsets != 0.0, axis=1)]
    spacing_factor = 4.0 / (n_local - 1)
    h = 1.0 / (grid + 1)
    status = "converged"
    while h * spacing_factor >= resolution:
        if prob.evaluations >= max_evals:
            status = "grid-exhausted"
            break
        cand = x + h * offsets
        cand = cand[_valid(cand)]
        cj, cp = prob.evaluate(cand)
        if trace is not None:
            trace.extend(zip(cand.tolist(), cj.tolist(), cp.tolist()))
        allp = np.vstack([x[None], cand])
        allj = np.concatenate([[xj], cj])
        allpw = np.concatenate([[xp], cp])
        best, feasible = _rank(allp, allj, allpw, problem, bound)
        if best == 0:
            h *= 0.5
        else:
            x, xj, xp, xf = allp[best], allj[best], allpw[best], bool(feasible[best])
    if xf:
        x = _polish(prob, problem, bound, x, xj, xp)
    else:
        status = "infeasible"
    return x, status


def _polish(prob: _SensorProblem, problem: str, bound: float, x, xj, xp, eps=1e-6):
    # Lattice steps miss the thin feasible cone along a curved active constraint.
    sign = 1.0 if problem == "p1" else -1.0

    def value(v):
        j, p = prob.evaluate(np.clip(v, eps, 1.0 - eps)[None])
        return float(j[0]), float(p[0])

    def slack(v):
        j, p = value(v)
        return bound - p if problem == "p1" else j - bound

    cons = [{"type": "ineq", "fun": slack}]
    if len(x) > 1:
        cons.append({"type": "ineq", "fun": lambda v: 1.0 - eps - v[1:].sum()})
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = sopt.minimize(lambda v: -sign * value(v)[0 if problem == "p1" else 1], x, method="COBYLA",
                                bounds=[(eps, 1.0 - eps)] * len(x), constraints=cons,
                                options={"rhobeg": 0.02, "tol": 1e-10, "maxiter": 3000})
    except (ValueError, np.linalg.LinAlgError):
        return x
    cand = np.clip(res.x, eps, 1.0 - eps)
    if not _valid(cand[None])[0]:
        return x
    if slack(cand) < 0:
        # the local solver may stop a hair outside the constraint; back off toward x
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if slack(x + mid * (cand - x)) >= 0:
                lo = mid
            else:
                hi = mid
        cand = x + lo * (cand - x)
    pts = np.vstack([x[None], cand[None]])
    cj, cp = value(cand)
    best, _ = _rank(pts, np.array([xj, cj]), np.array([xp, cp]), problem, bound)
    return pts[best]


def _solve(config: ExperimentConfig, problem: str, bound: float, *, grid=GRID_POINTS,
           resolution=RESOLUTION, max_evals=MAX_EVALUATIONS, trace=False) -> SolveReport:
    solved: dict[SensorModel, tuple] = {}
    designs, constraints, objectives = [], [], []
    statuses = []
    evaluations = 0
    rows = [] if trace else None
    for n, model in enumerate(config.sensors):
        if model not in solved:
            prob = _SensorProblem(config, model)
            local = [] if trace else None
            x, status = _solve_sensor(prob, problem, bound, grid, resolution, max_evals, local)
            probs = np.append(x[1:], 1.0 - x[1:].sum())
            sd = sensor_design_from_probs(model, float(x[0]), probs)
            j, pw, _ = evaluate_design(config, n, sd)
            solved[model] = (sd, j, pw, status, local)
            evaluations += prob.evaluations
        sd, j, pw, status, local = solved[model]
        if trace:
            rows.extend((n, *pt, jj, pp) for pt, jj, pp in local)
        designs.append(sd)
        statuses.append(status)
        if problem == "p1":
            constraints.append(pw)
            objectives.append(j)
        else:
            constraints.append(j)
            objectives.append(pw)
    if "infeasible" in statuses:
        status = "infeasible"
    elif "grid-exhausted" in statuses:
        status = "grid-exhausted"
    else:
        status = "converged"
    return SolveReport(problem, DesignPoint(tuple(designs)), float(sum(objectives)), tuple(constraints),
                       evaluations, status, tuple(rows or ()))


def solve_p1(config: ExperimentConfig, alpha0: float, **kw) -> SolveReport:
    """Maximize the averaged total divergence under a per-sensor power budget."""
    if not alpha0 > 0:
        raise ValueError("power budget must be positive")
    return _solve(config, "p1", alpha0, **kw)


def solve_p2(config: ExperimentConfig, j0: float, **kw) -> SolveReport:
    """Minimize the averaged total power under a per-sensor divergence floor."""
    return _solve(config, "p2", j0, **kw)


def design_to_dict(design: DesignPoint) -> dict:
    """Design-file form: per sensor, the local threshold and inner quantizer thresholds.

    ``pd`` and ``probs`` are written alongside for reference.
    """
    return {"sensors": [{"theta": sd.theta, "thresholds": list(sd.thresholds[1:-1]),
                         "pd": sd.pd, "probs": list(sd.probs)} for sd in design.sensors]}


def design_from_dict(config: ExperimentConfig, raw) -> DesignPoint:
    """Inverse of :func:`design_to_dict`; a single entry applies to every sensor.

    An entry needs either ``theta`` and ``thresholds`` or ``pd`` and ``probs``;
    the first pair wins when both are present.
    """
    if not isinstance(raw, dict) or not isinstance(raw.get("sensors"), list) or not raw["sensors"]:
        raise ValueError("design: expected a non-empty 'sensors' list")
    entries = raw["sensors"]
    if len(entries) == 1:
        entries = entries * len(config.sensors)
    if len(entries) != len(config.sensors):
        raise ValueError(f"design has {len(entries)} sensors, configuration has {len(config.sensors)}")
    out = []
    for model, e in zip(config.sensors, entries):
        if not isinstance(e, dict):
            raise ValueError("design: each sensor entry must be a mapping")
        if "theta" in e and "thresholds" in e:
            mu = [0.0, *map(float, e["thresholds"]), math.inf]
            if len(mu) - 1 != config.policy.intervals:
                raise ValueError("design: number of thresholds does not match the power policy")
            out.append(sensor_design(model, float(e["theta"]), mu))
        elif "pd" in e and "probs" in e:
            probs = [float(p) for p in e["probs"]]
            if len(probs) != config.policy.intervals:
                raise ValueError("design: number of interval probabilities does not match the power policy")
            out.append(sensor_design_from_probs(model, float(e["pd"]), probs))
        else:
            raise ValueError("design: each sensor needs theta and thresholds, or pd and probs")
    return DesignPoint(tuple(out))
