"""Double-DQN execution agent: exploration, target construction, training, pre-training."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import env as E
from .features import (FeatureConfig, assemble_inputs, check_feature_set, input_dim,
                       state_features, transform_time)
from .market_data import EpisodeWindow
from .nn import (QNetwork, RmsPropState, TrainingError, copy_params, forward, init_network,
                 loss_and_gradient, rmsprop_step)
from .replay import NextTag, ReplayBuffer, Transition

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    epsilon0: float = 1.0
    tau: float = 0.995
    rho: int = 15
    batch_size: int = 32
    pretrain_episodes: int = 200
    episodes: int | None = None  # None: one pass over the training windows
    updates_per_step: int = 1
    feature_set: str = "TIP"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 < self.tau < 1:
            raise ValueError("tau must be in (0, 1)")
        if not 0 < self.epsilon0 <= 1:
            raise ValueError("epsilon0 must be in (0, 1]")
        if self.rho < 1 or self.batch_size < 1 or self.updates_per_step < 1:
            raise ValueError("rho, batch_size and updates_per_step must be >= 1")
        object.__setattr__(self, "feature_set", check_feature_set(self.feature_set))


@dataclass(frozen=True)
class NetConfig:
    hidden_layers: int = 6
    hidden_units: int = 20
    lr: float = 1e-3
    decay: float = 0.9
    eps: float = 1e-8
    lr_decay: float = 1.0  # per-episode multiplicative step-size decay

    @property
    def hidden(self) -> tuple[int, ...]:
        return (self.hidden_units,) * self.hidden_layers


@dataclass
class LogRow:
    episode: int
    epsilon: float
    mean_loss: float
    episode_reward: float
    eps_used: int


LOG_HEADER = "episode,epsilon,mean_loss,episode_reward,eps_used"


def select_greedy(params: QNetwork, feats, q: int, actions: Sequence[int], q0: int,
                  feature_set: str) -> int:
    """Highest-scoring admissible action; ties go to the smallest action."""
    if q == 0:
        return 0
    if len(actions) == 1:
        return int(actions[0])
    t, p, qv = feats
    values = forward(params, assemble_inputs(t, p, qv, q, actions, q0, feature_set))
    return int(actions[int(np.argmax(values))])


def exploration_action(q: int, k: int, periods: int, rng: np.random.Generator) -> int:
    """Binomial draw whose mean is the TWAP rate over the remaining periods."""
    if q == 0:
        return 0
    return int(rng.binomial(q, 1.0 / (periods - k)))


def _snap(x: int, actions: Sequence[int]) -> int:
    # largest admissible action not above x (actions are ascending and start at 0 or q)
    below = [a for a in actions if a <= x]
    return int(below[-1]) if below else int(actions[0])


def build_targets(batch: Sequence[Transition], main: QNetwork, target: QNetwork,
                  gamma: float, env_cfg: E.EnvConfig, feature_set: str) -> np.ndarray:
    """Regression targets for a minibatch.

    TERMINAL (or flat inventory): the stored reward. PENULTIMATE: reward plus the
    discounted realized value of liquidating the rest over the final period.
    Otherwise the main network picks the next action and the target network
    scores it.
    """
    y = np.empty(len(batch))
    rows, owners, spans = [], [], []
    q0 = env_cfg.q0
    for j, tr in enumerate(batch):
        if tr.tag is None:
            raise ValueError("transition is missing its next-state tag")
        if tr.tag == NextTag.TERMINAL or tr.next_q == 0:
            y[j] = tr.reward
        elif tr.tag == NextTag.PENULTIMATE:
            if tr.final_value is None:
                raise ValueError("penultimate transition lacks its final liquidation value")
            y[j] = tr.reward + gamma * tr.final_value
        else:
            acts = _next_actions(tr.next_q, env_cfg)
            t, p, qv = tr.next_state
            rows.append(assemble_inputs(t, p, qv, tr.next_q, acts, q0, feature_set))
            owners.append(j)
            spans.append(acts)
    if rows:
        block = np.vstack(rows)
        scores = forward(main, block)
        chosen = []
        start = 0
        for acts in spans:
            n = len(acts)
            chosen.append(start + int(np.argmax(scores[start:start + n])))
            start += n
        evals = forward(target, block[chosen])
        for j, v in zip(owners, evals):
            y[j] = batch[j].reward + gamma * v
    return y


def _next_actions(q: int, env_cfg: E.EnvConfig) -> list[int]:
    acts = list(range(0, q + 1, env_cfg.lot_multiple))
    if acts[-1] != q:
        acts.append(q)
    return acts


def batch_inputs(batch: Sequence[Transition], q0: int, feature_set: str) -> np.ndarray:
    return np.vstack([
        assemble_inputs(*tr.state, tr.q, [tr.action], q0, feature_set) for tr in batch
    ])


class DDQNAgent:
    """Holds main/target networks, optimizer state, replay memory and exploration rate."""

    def __init__(self, env_cfg: E.EnvConfig, feat_cfg: FeatureConfig,
                 cfg: AgentConfig = AgentConfig(), net_cfg: NetConfig = NetConfig(),
                 replay_capacity: int = 10_000):
        if feat_cfg.q0 != env_cfg.q0 or feat_cfg.periods != env_cfg.periods:
            raise ValueError("feature config and env config disagree on q0/periods")
        self.env_cfg = env_cfg
        self.feat_cfg = feat_cfg
        self.cfg = cfg
        self.net_cfg = net_cfg
        ss = np.random.SeedSequence(cfg.seed)
        s_init, s_explore, s_replay, s_windows = ss.spawn(4)
        self.explore_rng = np.random.default_rng(s_explore)
        self.window_rng = np.random.default_rng(s_windows)
        init_seed = int(s_init.generate_state(1)[0])
        self.main = init_network(input_dim(cfg.feature_set), init_seed, net_cfg.hidden)
        self.target = copy_params(self.main)
        self.opt = RmsPropState.for_params(self.main, net_cfg.lr, net_cfg.decay, net_cfg.eps)
        self.replay = ReplayBuffer(replay_capacity, np.random.default_rng(s_replay))
        self.epsilon = cfg.epsilon0
        self.episodes_done = 0
        self.log: list[LogRow] = []

    @property
    def feature_set(self) -> str:
        return self.cfg.feature_set

    def features(self, state: E.EpisodeState):
        return state_features(state.raw, self.feat_cfg)

    def greedy_action(self, state: E.EpisodeState, params: QNetwork | None = None) -> int:
        acts = E.admissible_actions(state, self.env_cfg)
        params = self.main if params is None else params
        return select_greedy(params, self.features(state), state.q, acts, self.env_cfg.q0,
                             self.feature_set)

    def egreedy_action(self, state: E.EpisodeState) -> tuple[int, bool]:
        if state.q == 0:
            return 0, False
        if self.explore_rng.random() < self.epsilon:
            x = exploration_action(state.q, state.k, self.env_cfg.periods, self.explore_rng)
            return _snap(min(max(x, 0), state.q), E.admissible_actions(state, self.env_cfg)), True
        return self.greedy_action(state), False

    def policy(self, state: E.EpisodeState) -> int:
        return self.greedy_action(state)

    def _transition(self, state: E.EpisodeState, x: int, res: E.StepResult) -> Transition:
        nxt = res.state
        if res.terminal:
            tag = NextTag.TERMINAL
        elif nxt.k == self.env_cfg.periods - 1:
            tag = NextTag.PENULTIMATE
        else:
            tag = NextTag.INTERIOR
        next_feats = (self.features(nxt) if nxt.k < self.env_cfg.periods
                      else (math.nan, math.nan, math.nan))
        return Transition(self.features(state), state.q, x, res.total, next_feats, nxt.q,
                          tag, res.final_value, nxt.k)

    def update(self) -> float:
        batch = self.replay.sample(self.cfg.batch_size)
        y = build_targets(batch, self.main, self.target, self.cfg.gamma, self.env_cfg,
                          self.feature_set)
        X = batch_inputs(batch, self.env_cfg.q0, self.feature_set)
        loss, grads = loss_and_gradient(self.main, X, y)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss after {self.episodes_done} episodes")
        self.main, self.opt = rmsprop_step(self.main, self.opt, grads)
        return loss

    def run_training_episode(self, window: EpisodeWindow,
                             chooser: Callable[[E.EpisodeState], tuple[int, bool]]) -> LogRow:
        state = E.reset(window, self.env_cfg)
        losses, total, n_explore = [], 0.0, 0
        eps = self.epsilon
        while state.k < self.env_cfg.periods and state.q > 0:
            x, explored = chooser(state)
            if not 0 <= x <= state.q:
                raise TrainingError(f"selected action {x} outside [0, {state.q}]")
            n_explore += explored
            res = E.step(state, x, self.env_cfg)
            self.replay.push(self._transition(state, x, res))
            total += float(res.total)
            for _ in range(self.cfg.updates_per_step):
                losses.append(self.update())
            state = res.state
        return LogRow(self.episodes_done + 1, eps, float(np.mean(losses)) if losses else 0.0,
                      total, n_explore)

    def _end_episode(self, row: LogRow, on_sync=None) -> None:
        self.episodes_done += 1
        self.log.append(row)
        self.epsilon *= self.cfg.tau
        self.opt.lr *= self.net_cfg.lr_decay
        if self.episodes_done % self.cfg.rho == 0:
            self.target = copy_params(self.main)
            if on_sync is not None:
                on_sync(self)

    def pretrain(self, windows: Sequence[EpisodeWindow], n_episodes: int | None = None) -> None:
        """Fit on the two boundary schedules: sell everything at once, or hold until the end."""
        if not windows:
            raise ValueError("pretraining needs at least one window")
        n = self.cfg.pretrain_episodes if n_episodes is None else n_episodes
        last = self.env_cfg.periods - 1
        sell_first = lambda s: (s.q if s.k == 0 else 0, False)  # noqa: E731
        hold = lambda s: (s.q if s.k == last else 0, False)  # noqa: E731
        for i in range(n):
            w = windows[int(self.window_rng.integers(len(windows)))]
            self.run_training_episode(w, sell_first if i % 2 == 0 else hold)
            if (i + 1) % self.cfg.rho == 0:
                self.target = copy_params(self.main)
        self.target = copy_params(self.main)

    def train(self, windows: Sequence[EpisodeWindow], n_episodes: int | None = None,
              on_sync: Callable[["DDQNAgent"], None] | None = None) -> list[LogRow]:
        if not windows:
            raise ValueError("training needs at least one window")
        n = n_episodes or self.cfg.episodes or len(windows)
        order: list[int] = []
        rows = []
        for _ in range(n):
            if not order:
                order = list(self.window_rng.permutation(len(windows)))
            w = windows[order.pop()]
            row = self.run_training_episode(w, self.egreedy_action)
            self._end_episode(row, on_sync)
            rows.append(row)
        return rows


@dataclass
class PolicyGrid:
    """Greedy action for each (k, q, price level, qv level) cell."""

    periods: int
    q0: int
    price_levels: tuple[float, ...]
    qv_levels: tuple[float, ...]
    actions: dict = field(default_factory=dict)

    def rows(self):
        for (k, q, pi, qi), x in sorted(self.actions.items()):
            yield k, q, pi, qi, x

    def panel(self, price_bucket: int, qv_bucket: int) -> np.ndarray:
        """(q0 + 1) x periods array of actions, rows indexed by inventory."""
        out = np.zeros((self.q0 + 1, self.periods), dtype=int)
        for (k, q, pi, qi), x in self.actions.items():
            if pi == price_bucket and qi == qv_bucket:
                out[q, k] = x
        return out


def bucket_levels(n: int) -> tuple[float, ...]:
    """Centres of ``n`` equal-width buckets covering [-1, 1]."""
    return tuple(-1.0 + (2 * i + 1) / n for i in range(n))


def extract_policy_grid(params: QNetwork, env_cfg: E.EnvConfig, feat_cfg: FeatureConfig,
                        feature_set: str, n_price: int = 3, n_qv: int = 3) -> PolicyGrid:
    feature_set = check_feature_set(feature_set)
    price_levels = bucket_levels(n_price) if feature_set in ("TIP", "TIPQV") else (0.0,)
    qv_levels = bucket_levels(n_qv) if feature_set == "TIPQV" else (0.0,)
    grid = PolicyGrid(env_cfg.periods, env_cfg.q0, price_levels, qv_levels)
    for k in range(env_cfg.periods):
        t = transform_time(k, env_cfg.periods)
        for q in range(1, env_cfg.q0 + 1):
            if env_cfg.strict_terminal and k == env_cfg.periods - 1:
                acts = [q]
            else:
                acts = _next_actions(q, env_cfg)
            for pi, p in enumerate(price_levels):
                for qi, qv in enumerate(qv_levels):
                    grid.actions[(k, q, pi, qi)] = select_greedy(
                        params, (t, p, qv), q, acts, env_cfg.q0, feature_set)
    return grid
