"""Replay memory with eviction restricted to the oldest half of the buffer."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class NextTag(str, Enum):
    """Where the next state sits on the decision clock."""

    INTERIOR = "interior"
    PENULTIMATE = "penultimate"  # next state is the last decision time
    TERMINAL = "terminal"  # next state is the horizon; liquidation already in the reward


@dataclass(frozen=True)
class Transition:
    """One stored decision.

    ``state``/``next_state`` are the action-independent features ``(t~, P~, QV~)``;
    inventory is kept separately so action features can be rebuilt for any
    candidate action.
    """

    state: tuple[float, float, float]
    q: int
    action: int
    reward: float
    next_state: tuple[float, float, float]
    next_q: int
    tag: NextTag
    final_value: float | None = None
    next_k: int = -1


class ReplayBuffer:
    def __init__(self, capacity: int = 10_000, seed: int | np.random.Generator = 0):
        if capacity < 2:
            raise ValueError("capacity must be >= 2")
        self.capacity = capacity
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self._items: list = []
        self.n_pushed = 0
        self.evicted: list[int] = []  # insertion ids, for diagnostics
        self._ids: list[int] = []

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def items(self) -> list:
        return list(self._items)

    def push(self, item) -> int | None:
        """Append ``item``; when full, first drop a random entry among the oldest half.

        Returns the buffer position that was evicted, or None.
        """
        evicted = None
        if len(self._items) >= self.capacity:
            evicted = int(self.rng.integers(0, self.capacity // 2))
            del self._items[evicted]
            self.evicted.append(self._ids.pop(evicted))
        self._items.append(item)
        self._ids.append(self.n_pushed)
        self.n_pushed += 1
        return evicted

    def sample(self, batch_size: int, rng: np.random.Generator | None = None) -> list:
        """Uniform draws with replacement."""
        if not self._items:
            raise LookupError("cannot sample from an empty replay buffer")
        rng = self.rng if rng is None else rng
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]
