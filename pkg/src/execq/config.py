"""Flat ``section.key = value`` run configuration with typed defaults."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .agent import AgentConfig, NetConfig
from .env import EnvConfig
from .features import check_feature_set
from .market_data import SYNTH_MODELS


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt(conv):
    def parse(s: str):
        return None if s.strip().lower() in ("", "none") else conv(s)
    return parse


def _hours(s: str) -> tuple[int, ...]:
    hours = tuple(int(h) for h in s.replace(" ", "").split(",") if h)
    if not hours or any(not 0 <= h < 24 for h in hours):
        raise ValueError(f"hours must be a comma list of 0..23, got {s!r}")
    return hours


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "seed": (int, 0),
    "features": (check_feature_set, "TIP"),
    "out": (str, "runs/default"),
    "env.q0": (int, 20),
    "env.periods": (int, 5),
    "env.seconds_per_period": (int, 720),
    "env.penalty_a": (float, 0.01),
    "env.lot_multiple": (int, 1),
    "env.strict_terminal": (_bool, False),
    "agent.gamma": (float, 0.99),
    "agent.epsilon0": (float, 1.0),
    "agent.tau": (float, 0.995),
    "agent.rho": (int, 15),
    "agent.batch_size": (int, 32),
    "agent.pretrain_episodes": (int, 200),
    "agent.episodes": (_opt(int), None),
    "agent.updates_per_step": (int, 1),
    "nn.hidden_layers": (int, 6),
    "nn.hidden_units": (int, 20),
    "nn.lr": (float, 1e-3),
    "nn.decay": (float, 0.9),
    "nn.eps": (float, 1e-8),
    "nn.lr_decay": (float, 1.0),
    "replay.capacity": (int, 10_000),
    "data.path": (str, ""),
    "data.instrument": (str, ""),
    "data.hours": (_hours, (11, 12, 13)),
    "data.train_ratio": (float, 0.8),
    "data.shuffle": (_bool, False),
    "synth.model": (str, "martingale"),
    "synth.vol": (float, 0.01),
    "synth.mu": (float, 0.0),
    "synth.kappa": (float, 0.0),
    "synth.pbar": (_opt(float), None),
    "synth.p0": (float, 100.0),
    "synth.seed": (int, 0),
    "synth.n_windows": (int, 100),
    "synth.days": (int, 5),
}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, raw: str) -> None:
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None

    def update_lines(self, lines, source: str = "<config>") -> None:
        for n, line in enumerate(lines, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{n}: expected key = value")
            key, raw = line.split("=", 1)
            try:
                self.set(key, raw)
            except ConfigError as exc:
                raise ConfigError(f"{source}:{n}: {exc}") from None

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(self.values[k])}\n" for k in sorted(self.values))

    # typed views -----------------------------------------------------------------------

    def env(self) -> EnvConfig:
        return EnvConfig(q0=self["env.q0"], periods=self["env.periods"],
                         seconds_per_period=self["env.seconds_per_period"],
                         penalty_a=self["env.penalty_a"], lot_multiple=self["env.lot_multiple"],
                         strict_terminal=self["env.strict_terminal"])

    def agent(self) -> AgentConfig:
        return AgentConfig(gamma=self["agent.gamma"], epsilon0=self["agent.epsilon0"],
                           tau=self["agent.tau"], rho=self["agent.rho"],
                           batch_size=self["agent.batch_size"],
                           pretrain_episodes=self["agent.pretrain_episodes"],
                           episodes=self["agent.episodes"],
                           updates_per_step=self["agent.updates_per_step"],
                           feature_set=self["features"], seed=self["seed"])

    def net(self) -> NetConfig:
        return NetConfig(hidden_layers=self["nn.hidden_layers"],
                         hidden_units=self["nn.hidden_units"], lr=self["nn.lr"],
                         decay=self["nn.decay"], eps=self["nn.eps"],
                         lr_decay=self["nn.lr_decay"])

    def validate(self) -> None:
        """Build every typed section once so bad values surface before any work starts."""
        try:
            self.env().window_spec(self["data.hours"])
            self.agent()
            if self["nn.hidden_layers"] < 1 or self["nn.hidden_units"] < 1:
                raise ValueError("network needs at least one hidden unit and layer")
            if self["nn.lr"] <= 0 or not 0 <= self["nn.decay"] < 1 or not 0 < self["nn.lr_decay"] <= 1:
                raise ValueError("nn.lr must be > 0, nn.decay in [0, 1), nn.lr_decay in (0, 1]")
            if self["replay.capacity"] < 2:
                raise ValueError("replay.capacity must be >= 2")
            if not 0 < self["data.train_ratio"] < 1:
                raise ValueError("data.train_ratio must lie in (0, 1)")
            if self["synth.model"] not in SYNTH_MODELS:
                raise ValueError(f"synth.model must be one of {SYNTH_MODELS}")
            if self["synth.vol"] < 0 or self["synth.n_windows"] < 2 or self["synth.days"] < 1:
                raise ValueError("synth.vol must be >= 0, synth.n_windows >= 2, synth.days >= 1")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path=None, overrides=()) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        cfg.update_lines(p.read_text().splitlines(), str(p))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        cfg.set(key, raw)
    return cfg
