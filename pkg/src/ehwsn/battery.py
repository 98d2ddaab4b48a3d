"""Battery Markov chain of an energy-harvesting sensor.

Battery levels are integers 0..K. In each slot the sensor either stays silent
(probability ``1 - P_tx``) or spends ``floor(c_l * b)`` units, where l is the
channel-gain interval, and then receives a truncated Poisson number of units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse, stats
from scipy.sparse import csgraph

from .model import HarvestModel, OperatingPoint, PowerPolicy, Priors, Quantizer

# Guards floor(c * b) against products like 0.29 * 100 = 28.999999999999996.
_FLOOR_EPS = 1e-9


class ChainError(RuntimeError):
    """The chain has no unique stationary distribution."""


def truncated_arrival_pmf(rate: float, capacity: int) -> np.ndarray:
    """Pmf of stored arrivals: Poisson(rate) for e < K, all remaining mass at K."""
    if not rate > 0:
        raise ValueError("harvest rate must be positive")
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    e = np.arange(capacity)
    q = np.empty(capacity + 1)
    q[:-1] = stats.poisson.pmf(e, rate)
    q[-1] = stats.poisson.sf(capacity - 1, rate)
    return q


def power_units(policy: PowerPolicy, interval: int, level: int) -> int:
    """Energy units spent when transmitting in gain ``interval`` (1-based) at ``level``."""
    if not 1 <= interval <= policy.intervals:
        raise IndexError(f"interval {interval} outside 1..{policy.intervals}")
    if not 0 <= level <= policy.capacity:
        raise IndexError(f"battery level {level} outside 0..{policy.capacity}")
    return int(math.floor(policy.coeffs[interval - 1] * level + _FLOOR_EPS))


def units_table(policy: PowerPolicy) -> np.ndarray:
    """``table[l, b]`` = units spent in interval l (0-based) at level b."""
    b = np.arange(policy.capacity + 1)
    c = np.asarray(policy.coeffs, dtype=float)[:, None]
    return np.floor(c * b + _FLOOR_EPS).astype(np.int64)


def battery_step(level: int, arrival: int, consumed: int, capacity: int) -> int:
    if consumed > level:
        raise ValueError("cannot consume more units than stored")
    return min(max(level + arrival - consumed, 0), capacity)


def transmit_probability(op: OperatingPoint, priors: Priors) -> float:
    """Probability that the sensor's LLR clears its threshold."""
    return priors.pi0 * op.pf + priors.pi1 * op.pd


def transition_components(policy: PowerPolicy, q: np.ndarray) -> np.ndarray:
    """Stack of row-stochastic matrices: silent slot, then one per gain interval.

    The chain is ``(1 - P_tx) * M[0] + P_tx * sum_l pi_l * M[l]``.
    """
    k = policy.capacity
    units = units_table(policy)
    levels = np.arange(k + 1)[:, None]
    arrivals = np.arange(k + 1)[None, :]
    out = np.zeros((policy.intervals + 1, k + 1, k + 1))
    consumed = np.vstack([np.zeros(k + 1, dtype=np.int64), units])
    for m, u in enumerate(consumed):
        nxt = np.clip(levels - u[:, None] + arrivals, 0, k)
        rows = np.broadcast_to(levels, nxt.shape)
        np.add.at(out[m], (rows, nxt), np.broadcast_to(q[None, :], nxt.shape))
    return out


def transition_matrix(policy: PowerPolicy, harvest: HarvestModel, quantizer: Quantizer,
                      op: OperatingPoint, priors: Priors) -> np.ndarray:
    """Row-stochastic transition matrix ``psi[i, j] = P(B_t = j | B_{t-1} = i)``."""
    if len(quantizer.probs) != policy.intervals:
        raise ValueError("quantizer and policy disagree on the number of gain intervals")
    q = truncated_arrival_pmf(harvest.rate, policy.capacity)
    comps = transition_components(policy, q)
    p_tx = transmit_probability(op, priors)
    pi = np.asarray(quantizer.probs, dtype=float)
    return (1.0 - p_tx) * comps[0] + p_tx * np.tensordot(pi, comps[1:], axes=1)


def _period(adj, nodes) -> int:
    # gcd of level differences over the edges of one strongly connected class
    nodes = list(nodes)
    inside = set(nodes)
    level = {nodes[0]: 0}
    frontier = [nodes[0]]
    g = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in inside:
                    continue
                if v not in level:
                    level[v] = level[u] + 1
                    nxt.append(v)
                else:
                    g = math.gcd(g, level[u] + 1 - level[v])
        frontier = nxt
    return abs(g)


def check_structure(psi: np.ndarray) -> None:
    """Raise ChainError unless exactly one closed class exists and it is aperiodic.

    Transient states are allowed; they get zero stationary mass.
    """
    support = sparse.csr_matrix(psi > 0)
    ncomp, labels = csgraph.connected_components(support, directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        leaves = support[members].indices
        if np.all(labels[leaves] == c):
            closed.append(members)
    if len(closed) != 1:
        desc = ", ".join(str(m.tolist()) for m in closed)
        raise ChainError(f"chain has {len(closed)} closed classes ({desc}); stationary distribution not unique")
    adj = [support.indices[support.indptr[i]:support.indptr[i + 1]] for i in range(psi.shape[0])]
    d = _period(adj, closed[0])
    if d != 1:
        raise ChainError(f"closed class {closed[0].tolist()} is periodic with period {d}")


def _solve_stationary(psi: np.ndarray) -> np.ndarray:
    n = psi.shape[0]
    a = psi.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return np.linalg.solve(a, b)


def _power_iteration(psi, tol=1e-13, max_iter=200000):
    phi = np.full(psi.shape[0], 1.0 / psi.shape[0])
    for _ in range(max_iter):
        nxt = phi @ psi
        if np.max(np.abs(nxt - phi)) < tol:
            return nxt
        phi = nxt
    raise ChainError("power iteration did not converge")


def steady_state(psi: np.ndarray, *, check: bool = True) -> np.ndarray:
    """Stationary distribution ``phi`` with ``psi.T @ phi = phi`` and ``sum(phi) = 1``."""
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
        raise ValueError("transition matrix must be square")
    if check:
        check_structure(psi)
    try:
        phi = _solve_stationary(psi)
    except np.linalg.LinAlgError:
        phi = _power_iteration(psi)
    if np.max(np.abs(psi.T @ phi - phi)) > 1e-11 or np.min(phi) < -1e-12:
        phi = _power_iteration(psi)
    phi = np.clip(phi, 0.0, None)
    return phi / phi.sum()


def mean_battery(phi) -> float:
    phi = np.asarray(phi, dtype=float)
    return float(np.arange(phi.size) @ phi)


@dataclass(frozen=True)
class BatteryChain:
    transition: np.ndarray
    steady: np.ndarray
    mean_energy: float

    @classmethod
    def from_transition(cls, psi: np.ndarray) -> "BatteryChain":
        phi = steady_state(psi)
        return cls(psi, phi, mean_battery(phi))


def build_chain(policy: PowerPolicy, harvest: HarvestModel, quantizer: Quantizer,
                op: OperatingPoint, priors: Priors) -> BatteryChain:
    return BatteryChain.from_transition(transition_matrix(policy, harvest, quantizer, op, priors))


def write_matrix_csv(path, matrix) -> None:
    """Write a vector or matrix row-major with 17 significant digits."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in m:
            w.writerow([f"{v:.17g}" for v in row])
