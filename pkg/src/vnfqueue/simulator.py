"""Discrete-event simulation of the controlled system under a fixed policy.

Costs are discounted continuously at rate ``gamma``.  Between events the
holding cost C(q) is integrated exactly, so the only approximation is the
horizon cut-off: a run stops once ``exp(-gamma * t) * value_bound`` drops
below the truncation epsilon, which bounds the neglected tail.

Random numbers come from numpy's PCG64 generator.  Replication ``k`` of a run
seeded with ``seed`` uses the ``k``-th child of ``SeedSequence(seed)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cost_model import ModelParams
from .solver import ACTIVATE, REJECT, PolicyTable

RNG_ALGORITHM = "numpy PCG64, replication k seeded by SeedSequence(seed).spawn(replications)[k]"
COMPONENTS = ("J_b", "J_d", "J_h", "J_kappa", "J_r", "J_f")


class SimulationError(RuntimeError):
    pass


@dataclass
class CostBreakdown:
    """Discounted totals of the six cost components (all nonnegative)."""

    J_b: float = 0.0
    J_d: float = 0.0
    J_h: float = 0.0
    J_kappa: float = 0.0
    J_r: float = 0.0
    J_f: float = 0.0

    @property
    def total(self) -> float:
        return -self.J_b - self.J_d - self.J_h - self.J_kappa + self.J_r - self.J_f

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, c) for c in COMPONENTS])


@dataclass
class SimConfig:
    initial_state: tuple
    replications: int = 2000
    seed: int = 0
    truncation_epsilon: float | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.truncation_epsilon is not None and not self.truncation_epsilon > 0:
            raise ValueError("truncation_epsilon must be positive")


def default_epsilon(params: ModelParams) -> float:
    return 1e-6 * params.value_bound()


class _Stream:
    """Block-buffered exponential and uniform draws from one generator."""

    def __init__(self, rng: np.random.Generator, block: int = 512):
        self.rng, self.block = rng, block
        self._exp = self._uni = ()
        self._i = self._j = block

    def exp(self) -> float:
        if self._i == self.block:
            self._exp = self.rng.standard_exponential(self.block).tolist()
            self._i = 0
        self._i += 1
        return self._exp[self._i - 1]

    def uniform(self) -> float:
        if self._j == self.block:
            self._uni = self.rng.random(self.block).tolist()
            self._j = 0
        self._j += 1
        return self._uni[self._j - 1]


def simulate_once(policy: PolicyTable, params: ModelParams, initial_state, rng,
                  truncation_epsilon: float | None = None, event_log: list | None = None) -> CostBreakdown:
    """One discounted sample path from ``initial_state``.

    ``rng`` is a numpy Generator or an integer seed.  When ``event_log`` is a
    list, one row per cost increment (and per cost-free event) is appended as
    ``(time, event, queue, state_index_after, discounted_increment, component)``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.PCG64(rng))
    stream = _Stream(rng)
    space = params.space
    n, B = params.n, params.B
    lam, gamma = params.lam, params.gamma
    mu = list(params.mu)
    weights = space.weights.tolist()
    eps = default_epsilon(params) if truncation_epsilon is None else truncation_epsilon
    # with every cost zero there is nothing to accumulate
    horizon = math.log(max(params.value_bound(), eps) / eps) / gamma if eps > 0 else 0.0

    kinds = policy.arrival_kind.tolist()
    queues = policy.arrival_queue.tolist()
    destroy = policy.destroy.tolist()
    delay = params.delay_table.tolist()

    q = [int(x) for x in initial_state]
    s = space.encode(q)
    acc = dict.fromkeys(COMPONENTS, 0.0)
    t = 0.0
    disc = 1.0

    def log(event, queue, component, amount):
        if event_log is not None:
            event_log.append((t, event, queue, s, amount, component))

    while t < horizon:
        rates = [mu[i] if q[i] > 0 else 0.0 for i in range(n)]
        total = lam + sum(rates)
        dt = stream.exp() / total
        t_next = t + dt
        disc_next = math.exp(-gamma * t_next)
        weight = (disc - disc_next) / gamma
        held = sum(1 for x in q if x >= 0)
        d_cost = sum(delay[x + 1] for x in q) * weight
        k_cost = params.kappa * held * weight
        acc["J_h"] += d_cost
        acc["J_kappa"] += k_cost
        t, disc = t_next, disc_next
        if event_log is not None:
            log("hold", -1, "J_h", d_cost)
            log("hold", -1, "J_kappa", k_cost)

        u = stream.uniform() * total
        if u < lam:
            kind = kinds[s]
            if kind == REJECT:
                acc["J_f"] += disc * params.f
                log("arrival", -1, "J_f", disc * params.f)
                continue
            i = queues[s]
            if kind == ACTIVATE:
                if q[i] != -1:
                    raise SimulationError(f"activation of active queue {i} in state {tuple(q)}")
                q[i] = 1
                s += 2 * weights[i]
                acc["J_b"] += disc * params.beta
                log("arrival", i, "J_b", disc * params.beta)
            else:
                if not 0 <= q[i] < B:
                    raise SimulationError(f"scheduling into queue {i} at level {q[i]}")
                q[i] += 1
                s += weights[i]
            acc["J_r"] += disc * params.r
            log("arrival", i, "J_r", disc * params.r)
            continue

        u -= lam
        i = 0
        while i < n - 1 and u >= rates[i]:
            u -= rates[i]
            i += 1
        while rates[i] == 0.0:  # guard against rounding at the top of the interval
            i -= 1
        if q[i] < 1:
            raise SimulationError(f"departure from queue {i} at level {q[i]}")
        if q[i] == 1 and destroy[s][i]:
            q[i] = -1
            s -= 2 * weights[i]
            acc["J_d"] += disc * params.psi
            log("departure", i, "J_d", disc * params.psi)
        else:
            q[i] -= 1
            s -= weights[i]
            log("departure", i, "", 0.0)
        if not -1 <= q[i] <= B:
            raise SimulationError(f"queue {i} left the range [-1, {B}]")
    return CostBreakdown(**acc)


@dataclass
class Estimate:
    mean: float
    standard_error: float
    breakdown: dict
    replications: int
    seed: int
    truncation_epsilon: float
    initial_state: tuple = ()
    rng: str = RNG_ALGORITHM
    totals: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("totals")
        d["initial_state"] = list(self.initial_state)
        return d


def estimate_value(policy: PolicyTable, params: ModelParams, initial_state, replications: int = 2000,
                   seed: int = 0, truncation_epsilon: float | None = None) -> Estimate:
    """Monte-Carlo estimate of the discounted value of ``policy`` from ``initial_state``."""
    config = SimConfig(tuple(initial_state), replications, seed, truncation_epsilon)
    policy.validate(params.space)
    eps = default_epsilon(params) if truncation_epsilon is None else truncation_epsilon
    children = np.random.SeedSequence(seed).spawn(config.replications)
    parts = np.empty((config.replications, len(COMPONENTS)))
    totals = np.empty(config.replications)
    for k, child in enumerate(children):
        res = simulate_once(policy, params, config.initial_state,
                            np.random.Generator(np.random.PCG64(child)), eps)
        parts[k] = res.as_array()
        totals[k] = res.total
    se = float(totals.std(ddof=1) / math.sqrt(totals.size)) if totals.size > 1 else math.inf
    return Estimate(float(totals.mean()), se, dict(zip(COMPONENTS, parts.mean(axis=0).tolist())),
                    config.replications, seed, eps, config.initial_state, totals=totals)


def write_event_log(fh, rows) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["time", "event", "queue", "state_index_after", "discounted_increment", "component"])
    for t, event, queue, s, amount, component in rows:
        writer.writerow([f"{t:.12g}", event, queue, s, f"{amount:.12g}", component])
