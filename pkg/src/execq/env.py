"""Episodic execution environment over a midprice window.

Decisions happen at the start of each of N periods; the chosen lot count is
sold evenly over the period's M seconds. Leftover inventory at the horizon is
liquidated in one extra second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .features import RawState, compute_qv
from .market_data import EpisodeWindow, WindowSpec


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    q0: int = 20
    periods: int = 5
    seconds_per_period: int = 720
    penalty_a: float = 0.01
    lot_multiple: int = 1
    strict_terminal: bool = False

    def __post_init__(self):
        if self.q0 <= 0:
            raise ValueError("q0 must be positive")
        if self.periods < 2:
            raise ValueError("need at least 2 periods")
        if self.seconds_per_period < 1:
            raise ValueError("seconds_per_period must be >= 1")
        if self.penalty_a < 0:
            raise ValueError("penalty_a must be non-negative")
        if self.lot_multiple < 1:
            raise ValueError("lot_multiple must be >= 1")

    @property
    def terminal_seconds(self) -> int:
        return 1

    def window_spec(self, hours=(11, 12, 13)) -> WindowSpec:
        return WindowSpec(self.periods, self.seconds_per_period, self.terminal_seconds, tuple(hours))


@dataclass(frozen=True)
class EpisodeState:
    window: EpisodeWindow
    k: int
    q: int
    price: float
    hour_price: float
    qv_prev: float

    @property
    def raw(self) -> RawState:
        return RawState(self.k, self.q, self.price, self.hour_price, self.qv_prev)


@dataclass(frozen=True)
class StepResult:
    """Outcome of one decision period.

    ``reward`` is the period reward; ``terminal_reward`` carries the forced
    liquidation of leftover inventory and is non-zero only on the final step.
    ``final_value`` is set when the next state is the last decision time: it is
    the realized reward of selling all remaining inventory evenly over that
    final period.
    """

    reward: float
    state: EpisodeState
    terminal: bool
    terminal_reward: float = 0.0
    final_value: float | None = None

    @property
    def total(self) -> float:
        return self.reward + self.terminal_reward


def _check_window(window: EpisodeWindow, cfg: EnvConfig) -> None:
    spec = window.spec
    if spec.periods != cfg.periods or spec.seconds_per_period != cfg.seconds_per_period:
        raise EnvError(
            f"window geometry ({spec.periods}x{spec.seconds_per_period}s) does not match "
            f"env config ({cfg.periods}x{cfg.seconds_per_period}s)")


def reset(window: EpisodeWindow, cfg: EnvConfig) -> EpisodeState:
    _check_window(window, cfg)
    i0 = window.decision_index(0)
    m = cfg.seconds_per_period
    p0 = float(window.prices[i0])
    return EpisodeState(window, 0, cfg.q0, p0, p0, compute_qv(window.prices[i0 - m:i0 + 1]))


def admissible_actions(state: EpisodeState, cfg: EnvConfig) -> list[int]:
    q = state.q
    if q == 0:
        return [0]
    if cfg.strict_terminal and state.k == cfg.periods - 1:
        return [q]
    acts = list(range(0, q + 1, cfg.lot_multiple))
    if acts[-1] != q:
        acts.append(q)
    return acts


def period_reward(prices: np.ndarray, q: float, x: float, a: float) -> float:
    """Sum of per-second rewards over one period.

    ``prices`` spans the period's M seconds plus the next decision time. Each
    second, pre-trade inventory is revalued by the price move and the child
    order ``x / M`` is charged ``a * (x / M)**2``.
    """
    m = len(prices) - 1
    child = x / m
    pre_trade = q - child * np.arange(m)
    return float(pre_trade @ np.diff(prices)) - m * a * child * child


def terminal_reward(p: float, p_next: float, q_left: float, a: float) -> float:
    if q_left < 0:
        raise EnvError("leftover inventory cannot be negative")
    return q_left * (p_next - p) - a * q_left * q_left


def step(state: EpisodeState, x: int, cfg: EnvConfig) -> StepResult:
    if state.k >= cfg.periods:
        raise EnvError("episode already finished")
    if x not in admissible_actions(state, cfg):
        raise EnvError(f"action {x} not admissible at k={state.k}, q={state.q}")
    w = state.window
    m = cfg.seconds_per_period
    a = cfg.penalty_a
    i = w.decision_index(state.k)
    path = w.prices[i:i + m + 1]
    reward = period_reward(path, state.q, x, a)

    k_next = state.k + 1
    q_next = state.q - x
    nxt = replace(state, k=k_next, q=q_next, price=float(path[-1]), qv_prev=compute_qv(path))
    if k_next == cfg.periods:
        t_end = w.decision_index(k_next)
        r_term = terminal_reward(w.prices[t_end], w.prices[t_end + 1], q_next, a)
        return StepResult(reward, nxt, True, r_term)

    final_value = None
    if k_next == cfg.periods - 1:
        j = w.decision_index(k_next)
        final_value = period_reward(w.prices[j:j + m + 1], q_next, q_next, a)
    return StepResult(reward, nxt, False, 0.0, final_value)


def episode_total_reward(rewards, terminal: float | None, periods: int | None = None) -> float:
    """Total episode reward: period rewards plus the terminal liquidation reward."""
    rewards = list(rewards)
    if terminal is None or (periods is not None and len(rewards) != periods):
        raise EnvError(f"incomplete episode: {len(rewards)} period rewards, terminal={terminal}")
    return math.fsum(rewards) + terminal


def run_episode(window: EpisodeWindow, cfg: EnvConfig, actions) -> tuple[list[StepResult], EpisodeState]:
    """Step through a whole episode with a fixed action list (one per period)."""
    state = reset(window, cfg)
    results = []
    for x in actions:
        res = step(state, int(x), cfg)
        results.append(res)
        state = res.state
    if not results or not results[-1].terminal:
        raise EnvError("action list does not cover every period")
    return results, state
