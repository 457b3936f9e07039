"""Flexible-queue state space: enumeration, mixed-radix indexing, queue classes.

A state is a length-``n`` tuple of queue levels in ``{-1, 0, ..., B}``, where
``-1`` marks an inactive queue and ``0`` an active but empty one.  States are
indexed big-endian with queue 0 as the most significant digit, so sorting by
index groups states into ``B + 2`` blocks by the level of queue 0.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class InvalidStateError(ValueError):
    pass


class UnsupportedConfigError(ValueError):
    pass


class QueueClass(enum.Enum):
    INACTIVE = "inactive"
    EMPTY = "empty"
    ONE = "one"
    NORMAL = "normal"
    FULL = "full"


def classify(level: int, B: int) -> QueueClass:
    if B < 2:
        raise UnsupportedConfigError(f"buffer size B={B} < 2: 'one' and 'full' classes overlap")
    if not -1 <= level <= B:
        raise InvalidStateError(f"level {level} outside [-1, {B}]")
    if level == -1:
        return QueueClass.INACTIVE
    if level == 0:
        return QueueClass.EMPTY
    if level == 1:
        return QueueClass.ONE
    if level == B:
        return QueueClass.FULL
    return QueueClass.NORMAL


def active_count(state) -> int:
    return sum(1 for q in state if q >= 0)


def task_total(state) -> int:
    return sum(q for q in state if q > 0)


@dataclass(frozen=True)
class StateSpace:
    n: int
    B: int

    def __post_init__(self):
        if self.n < 1:
            raise UnsupportedConfigError(f"need at least one queue, got n={self.n}")
        if self.B < 2:
            raise UnsupportedConfigError(f"buffer size B={self.B} < 2 is not supported")

    @property
    def radix(self) -> int:
        return self.B + 2

    @property
    def size(self) -> int:
        return self.radix ** self.n

    @cached_property
    def weights(self) -> np.ndarray:
        """Index stride of each queue; queue 0 is the most significant digit."""
        return self.radix ** np.arange(self.n - 1, -1, -1, dtype=np.int64)

    @cached_property
    def levels(self) -> np.ndarray:
        """(size, n) array of queue levels for every state index."""
        idx = np.arange(self.size, dtype=np.int64)
        digits = (idx[:, None] // self.weights[None, :]) % self.radix
        out = (digits - 1).astype(np.int64)
        out.setflags(write=False)
        return out

    def encode(self, state) -> int:
        if len(state) != self.n:
            raise InvalidStateError(f"state {tuple(state)} has length {len(state)}, expected {self.n}")
        index = 0
        for q in state:
            q = int(q)
            if not -1 <= q <= self.B:
                raise InvalidStateError(f"level {q} outside [-1, {self.B}] in state {tuple(state)}")
            index = index * self.radix + (q + 1)
        return index

    def decode(self, index: int) -> tuple[int, ...]:
        index = int(index)
        if not 0 <= index < self.size:
            raise InvalidStateError(f"index {index} outside [0, {self.size})")
        digits = []
        for _ in range(self.n):
            index, d = divmod(index, self.radix)
            digits.append(d - 1)
        return tuple(reversed(digits))

    def states(self):
        """All states in index order."""
        return itertools.product(range(-1, self.B + 1), repeat=self.n)

    @cached_property
    def active_counts(self) -> np.ndarray:
        return (self.levels >= 0).sum(axis=1)

    @cached_property
    def task_totals(self) -> np.ndarray:
        return np.clip(self.levels, 0, None).sum(axis=1)

    @cached_property
    def inactive_masks(self) -> np.ndarray:
        """Bitmask of inactive queues per state (bit i set when queue i is inactive)."""
        bits = 1 << np.arange(self.n, dtype=np.int64)
        return ((self.levels == -1) * bits).sum(axis=1)

    def grid(self, values: np.ndarray) -> np.ndarray:
        """View a per-state vector as an n-dimensional array indexed by level + 1."""
        return np.asarray(values).reshape((self.radix,) * self.n)
