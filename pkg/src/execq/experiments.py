"""Synthetic experiment setups shared by the scripts and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import env as E
from .agent import AgentConfig, DDQNAgent, NetConfig, PolicyGrid, extract_policy_grid
from .evaluation import evaluate, rollout, summarize, twap_schedule
from .features import FeatureConfig, fit_feature_config
from .market_data import EpisodeWindow, WindowSpec, synth_windows


# --- two-level Markov price process -------------------------------------------------

@dataclass(frozen=True)
class ToySetup:
    """Small MDP: price jumps between ``mid - delta`` and ``mid + delta``.

    Each second the level flips with probability ``switch``; the starting level
    is drawn uniformly.
    """

    periods: int = 3
    seconds_per_period: int = 2
    q0: int = 4
    delta: float = 0.5
    switch: float = 0.2
    mid: float = 10.0
    penalty_a: float = 0.3
    gamma: float = 0.99

    @property
    def levels(self) -> tuple[float, float]:
        return (self.mid - self.delta, self.mid + self.delta)

    def env_config(self) -> E.EnvConfig:
        return E.EnvConfig(q0=self.q0, periods=self.periods,
                           seconds_per_period=self.seconds_per_period,
                           penalty_a=self.penalty_a, strict_terminal=True)

    def feature_config(self) -> FeatureConfig:
        # P~ is exactly -1 / +1 on the two levels
        return FeatureConfig(self.q0, self.periods, price_scale=self.delta, price_ref=self.mid)


def two_level_windows(setup: ToySetup, n_windows: int, seed: int) -> list[EpisodeWindow]:
    spec = setup.env_config().window_spec()
    rng = np.random.default_rng(seed)
    n = spec.n_seconds + 1
    lo, hi = setup.levels
    out = []
    for i in range(n_windows):
        state = np.empty(n, dtype=int)
        state[0] = rng.integers(2)
        flips = rng.random(n - 1) < setup.switch
        state[1:] = (state[0] + np.cumsum(flips)) % 2
        out.append(EpisodeWindow(np.where(state == 1, hi, lo), spec, f"toy-{i:05d}", "synthetic"))
    return out


def toy_agent_configs(setup: ToySetup, seed: int = 0,
                      episodes: int = 15_000) -> tuple[AgentConfig, NetConfig]:
    """Slow epsilon/step-size decay so the Q estimates settle on the noisy toy rewards."""
    agent = AgentConfig(gamma=setup.gamma, tau=0.9998, episodes=episodes,
                        updates_per_step=2, feature_set="TIP", seed=seed)
    net = NetConfig(lr=5e-4, lr_decay=0.99974)
    return agent, net


def train_toy_agent(setup: ToySetup = ToySetup(), seed: int = 0, episodes: int = 15_000,
                    n_windows: int = 2000) -> DDQNAgent:
    """Train on the toy process; replay is large enough that nothing is evicted."""
    windows = two_level_windows(setup, n_windows, seed + 1)
    agent_cfg, net_cfg = toy_agent_configs(setup, seed, episodes)
    n_transitions = setup.periods * (episodes + agent_cfg.pretrain_episodes)
    agent = DDQNAgent(setup.env_config(), setup.feature_config(), agent_cfg, net_cfg,
                      replay_capacity=max(n_transitions, 2))
    agent.pretrain(windows)
    agent.train(windows)
    return agent


# --- Gaussian-increment synthetic markets -------------------------------------------

@dataclass(frozen=True)
class SyntheticSetup:
    """Martingale or drifting 1-second midprices with a small per-second volatility."""

    model: str = "martingale"
    mu: float = 0.0
    vol: float = 2e-4
    p0: float = 100.0
    q0: int = 10
    periods: int = 5
    seconds_per_period: int = 60
    penalty_a: float = 1.0
    strict_terminal: bool = True
    feature_set: str = "TI"
    n_train: int = 500
    n_eval: int = 200
    episodes: int = 1500

    def env_config(self) -> E.EnvConfig:
        return E.EnvConfig(q0=self.q0, periods=self.periods,
                           seconds_per_period=self.seconds_per_period,
                           penalty_a=self.penalty_a, strict_terminal=self.strict_terminal)

    def windows(self, seed: int) -> tuple[list[EpisodeWindow], list[EpisodeWindow]]:
        spec: WindowSpec = self.env_config().window_spec()
        params = {"p0": self.p0}
        if self.model == "drift":
            params["mu"] = self.mu
        wins = synth_windows(self.n_train + self.n_eval, spec, self.model, self.vol, seed, **params)
        return wins[:self.n_train], wins[self.n_train:]


@dataclass
class SyntheticRun:
    setup: SyntheticSetup
    agent: DDQNAgent
    train: list[EpisodeWindow]
    eval: list[EpisodeWindow]
    actions: np.ndarray = field(default=None)  # (n_eval, periods) greedy actions on eval windows


def run_synthetic(setup: SyntheticSetup, seed: int = 0) -> SyntheticRun:
    train, ev = setup.windows(seed)
    cfg = setup.env_config()
    feat = fit_feature_config(train, setup.q0, setup.periods, setup.seconds_per_period)
    agent = DDQNAgent(cfg, feat, AgentConfig(feature_set=setup.feature_set, seed=seed,
                                             episodes=setup.episodes))
    agent.pretrain(train)
    agent.train(train)
    acts = np.array([rollout(agent.policy, w, cfg)[1] for w in ev])
    return SyntheticRun(setup, agent, train, ev, acts)


def twap_deviation(actions: np.ndarray, q0: int, periods: int) -> float:
    """Mean absolute per-period deviation of executed actions from the TWAP schedule."""
    return float(np.mean(np.abs(np.asarray(actions) - np.asarray(twap_schedule(q0, periods)))))


def delta_pnl_summary(run: SyntheticRun):
    return summarize(evaluate(run.agent.policy, run.eval, run.setup.env_config()))


# --- policy-shape checks ------------------------------------------------------------

def grid_for(agent: DDQNAgent) -> PolicyGrid:
    return extract_policy_grid(agent.main, agent.env_cfg, agent.feat_cfg, agent.feature_set)


def monotone_fraction(grid: PolicyGrid, reachable_only: bool = True) -> float:
    """Share of adjacent (k, k+1) cell pairs at fixed inventory where the action does not drop.

    With ``reachable_only`` the first decision time contributes only the
    starting inventory, the one state an episode can be in there.
    """
    ok = total = 0
    for (k, q, pi, qi), x in grid.actions.items():
        if k + 1 >= grid.periods:
            continue
        if reachable_only and k == 0 and q != grid.q0:
            continue
        total += 1
        ok += grid.actions[(k + 1, q, pi, qi)] >= x
    return ok / total if total else float("nan")


def terminal_liquidation_fraction(grid: PolicyGrid) -> float:
    last = grid.periods - 1
    cells = [(q, x) for (k, q, _, _), x in grid.actions.items() if k == last]
    return sum(x == q for q, x in cells) / len(cells)
