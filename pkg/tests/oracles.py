"""Independent reference implementations used by the tests.

Nothing here imports the package under test.
"""

from __future__ import annotations

import itertools
import statistics
from collections import defaultdict
from fractions import Fraction


# --- tabular Q-learning ---------------------------------------------------------------

class TabularQ:
    """Matrix Q-learning over discrete states ``(k, q, level)`` and integer actions.

    Step sizes are 1/n per state-action within a sweep, so a single sweep
    over a fixed stream gives running sample means of the bootstrapped targets.
    ``last`` is the final decision index, where the only action is ``q``.
    """

    def __init__(self, last: int, gamma: float):
        self.last = last
        self.gamma = gamma
        self.Q: dict = defaultdict(float)
        self.counts: dict = defaultdict(int)

    def actions(self, k: int, q: int) -> list[int]:
        return [q] if k == self.last else list(range(q + 1))

    def value(self, k: int, q: int, level: int) -> float:
        if q == 0:
            return 0.0
        return max(self.Q[(k, q, level, x)] for x in self.actions(k, q))

    def update(self, exp, n: dict) -> None:
        k, q, level, x, r, nk, nq, nlevel, done = exp
        y = r if done else r + self.gamma * self.value(nk, nq, nlevel)
        key = (k, q, level, x)
        n[key] += 1
        self.counts[key] += 1
        self.Q[key] += (y - self.Q[key]) / n[key]

    def fit(self, stream, sweeps: int = 30) -> "TabularQ":
        stream = list(stream)
        for _ in range(sweeps):
            n: dict = defaultdict(int)
            for exp in stream:
                self.update(exp, n)
        return self

    def greedy(self, k: int, q: int, level: int) -> int:
        acts = self.actions(k, q)
        vals = [self.Q[(k, q, level, x)] for x in acts]
        return acts[vals.index(max(vals))]


def two_level_dp(delta, switch, a, gamma, periods, seconds, q0, mid=10.0):
    """Exact Q for the two-level Markov price toy with forced liquidation at the last decision."""
    levels = (mid - delta, mid + delta)

    def paths(start):
        for seq in itertools.product((0, 1), repeat=seconds):
            pr, prev = 1.0, start
            for s in seq:
                pr *= switch if s != prev else 1.0 - switch
                prev = s
            yield pr, (start, *seq)

    V, Q = {}, {}
    for k in reversed(range(periods)):
        for q in range(q0 + 1):
            for j in (0, 1):
                acts = [q] if k == periods - 1 else range(q + 1)
                best = -float("inf")
                for x in acts:
                    c = x / seconds
                    val = 0.0
                    for pr, seq in paths(j):
                        r, inv = 0.0, float(q)
                        for i in range(seconds):
                            r += inv * (levels[seq[i + 1]] - levels[seq[i]]) - a * c * c
                            inv -= c
                        cont = V[(k + 1, q - x, seq[-1])] if k < periods - 1 else 0.0
                        val += pr * (r + gamma * cont)
                    Q[(k, q, j, x)] = val
                    best = max(best, val)
                V[(k, q, j)] = best
    return Q, V


# --- brute-force metrics ----------------------------------------------------------------

def ref_delta_bps(model, twap):
    return (Fraction(model) - Fraction(twap)) / Fraction(twap) * 10000


def ref_summary(values):
    """Median, mean, sample std, GLR and win probability, computed long-hand."""
    vals = list(values)
    n = len(vals)
    s = sorted(vals)
    median = s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2
    mean = sum(vals) / n
    std = statistics.stdev(vals) if n > 1 else 0
    gains = [v for v in vals if v > 0]
    losses = [-v for v in vals if v < 0]
    if gains and losses:
        glr = (sum(gains) / len(gains)) / (sum(losses) / len(losses))
    elif gains:
        glr = float("inf")
    elif losses:
        glr = 0
    else:
        glr = float("nan")
    return {"n": n, "median": median, "mean": mean, "std": std, "glr": glr,
            "win_probability": Fraction(len(gains), n)}


def ref_twap(q0: int, periods: int) -> list[int]:
    out = [0] * periods
    for i in range(q0):
        out[i % periods] += 1
    return out
