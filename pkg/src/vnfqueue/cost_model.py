"""Model parameters and the instantaneous cost and service rates."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .state_space import StateSpace, UnsupportedConfigError


class ConfigError(ValueError):
    pass


# JSON key -> dataclass field
_JSON_FIELDS = {
    "lambda": "lam", "mu": "mu", "n": "n", "B": "B", "r": "r", "f": "f",
    "beta": "beta", "psi": "psi", "kappa": "kappa", "h": "h", "eta": "eta",
    "gamma": "gamma",
}


@dataclass(frozen=True)
class ModelParams:
    """All rates and costs of the controlled queue system.

    ``mu`` may be given as a scalar (identical queues) or one rate per queue.
    ``eta`` holds the delay multipliers for levels ``1..B``; ``None`` means the
    linear model (all ones).
    """

    lam: float
    n: int
    B: int
    mu: tuple = 1.0
    r: float = 0.0
    f: float = 0.0
    beta: float = 0.0
    psi: float = 0.0
    kappa: float = 0.0
    h: float = 0.0
    eta: tuple | None = None
    gamma: float = 0.05

    def __post_init__(self):
        n, B = int(self.n), int(self.B)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "B", B)
        if n < 1:
            raise ConfigError(f"n must be >= 1, got {n}")
        if B < 2:
            raise UnsupportedConfigError(f"B must be >= 2, got {B}")

        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if mu.size == 1:
            mu = np.repeat(mu, n)
        if mu.shape != (n,):
            raise ConfigError(f"mu must have length n={n}, got {mu.size}")
        object.__setattr__(self, "mu", tuple(float(m) for m in mu))

        eta = np.ones(B) if self.eta is None else np.asarray(self.eta, dtype=float)
        if eta.shape != (B,):
            raise ConfigError(f"eta must have length B={B}, got {eta.size}")
        if np.any(eta < 1.0) or np.any(np.diff(eta) < 0):
            raise ConfigError(f"eta must be nondecreasing with every entry >= 1, got {eta.tolist()}")
        object.__setattr__(self, "eta", tuple(float(e) for e in eta))

        if not self.lam > 0:
            raise ConfigError(f"arrival rate must be positive, got {self.lam}")
        if not self.gamma > 0:
            raise ConfigError(f"discount rate must be positive, got {self.gamma}")
        if any(not m > 0 for m in self.mu):
            raise ConfigError(f"service rates must be positive, got {self.mu}")
        for name in ("r", "f", "beta", "psi", "kappa", "h"):
            value = getattr(self, name)
            if not value >= 0:
                raise ConfigError(f"{name} must be nonnegative, got {value}")
            object.__setattr__(self, name, float(value))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "gamma", float(self.gamma))

    @cached_property
    def space(self) -> StateSpace:
        return StateSpace(self.n, self.B)

    @property
    def mu_array(self) -> np.ndarray:
        return np.asarray(self.mu)

    @property
    def symmetric(self) -> bool:
        """True when all queues are interchangeable (identical service rates)."""
        return len(set(self.mu)) == 1

    @property
    def contraction_modulus(self) -> float:
        total = self.lam + sum(self.mu)
        return total / (total + self.gamma)

    @cached_property
    def delay_table(self) -> np.ndarray:
        """Delay cost rate indexed by ``level + 1`` for levels ``-1..B``."""
        levels = np.arange(-1, self.B + 1)
        eta = np.concatenate([[1.0, 1.0], self.eta])
        return np.where(levels > 0, levels * eta * self.h, 0.0)

    @cached_property
    def holding_rates(self) -> np.ndarray:
        """C(q) for every state, in index order."""
        L = self.space.levels
        return self.delay_table[L + 1].sum(axis=1) + self.kappa * (L >= 0).sum(axis=1)

    @cached_property
    def effective_rates(self) -> np.ndarray:
        """(size, n) service rate of each queue in each state."""
        return np.where(self.space.levels > 0, self.mu_array[None, :], 0.0)

    def value_bound(self) -> float:
        """Coarse bound on |V| over all states and policies."""
        max_c = float(self.holding_rates.max())
        jump = (self.lam + sum(self.mu)) * max(self.beta, self.psi)
        return (self.lam * max(self.r, self.f) + max_c + jump) / self.gamma

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {key: (list(getattr(self, attr)) if attr in ("mu", "eta") else getattr(self, attr))
                for key, attr in _JSON_FIELDS.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        unknown = set(data) - set(_JSON_FIELDS)
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        missing = {"lambda", "n", "B"} - set(data)
        if missing:
            raise ConfigError(f"missing required keys: {sorted(missing)}")
        return cls(**{_JSON_FIELDS[k]: v for k, v in data.items()})


def delay_rate(level: int, params: ModelParams) -> float:
    if level <= 0:
        return 0.0
    return level * params.eta[level - 1] * params.h


def holding_rate(state, params: ModelParams) -> float:
    return sum(delay_rate(q, params) + (params.kappa if q >= 0 else 0.0) for q in state)


def effective_rate(state, i: int, params: ModelParams) -> float:
    return params.mu[i] if state[i] > 0 else 0.0


@dataclass
class Config:
    """Parsed JSON configuration file: model plus per-command sections."""

    params: ModelParams
    solver: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)


_SECTIONS = {
    "solver": {"tol", "max_iters"},
    "sim": {"initial_state", "replications", "seed", "truncation_epsilon", "policy"},
    "sweep": {"parameter", "values", "start", "stop", "steps", "reference_state", "warm_start"},
}


def parse_config(data: dict) -> Config:
    data = dict(data)
    sections = {}
    for name, allowed in _SECTIONS.items():
        section = dict(data.pop(name, {}) or {})
        unknown = set(section) - allowed
        if unknown:
            raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
        sections[name] = section
    return Config(ModelParams.from_dict(data), **sections)


def load_config(path) -> Config:
    with open(path) as fh:
        return parse_config(json.load(fh))
