"""Command-line entry point: ``execq {train,eval,policy-map,synth-gen}``.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .agent import LOG_HEADER, DDQNAgent, extract_policy_grid, select_greedy
from .config import ConfigError, RunConfig, load_config
from .env import admissible_actions
from .evaluation import (emit_report, evaluate, schedule_policy, summarize, twap_schedule,
                         write_heatmap_csv)
from .features import FeatureConfig, fit_feature_config, state_features
from .market_data import (DataError, SkipLog, load_price_series, save_price_series,
                          slice_windows, synth_series, synth_windows, train_eval_split)
from .nn import QNetwork, TrainingError, params_from_dict, params_to_dict

logger = logging.getLogger("execq")

CHECKPOINT_FILE = "checkpoint.json"
CONFIG_SNAPSHOT = "config.resolved"
TRAIN_LOG = "train_log.csv"


# --- data ---------------------------------------------------------------------------

def check_data(cfg: RunConfig) -> None:
    path = cfg["data.path"]
    if path and not Path(path).is_file():
        raise ConfigError(f"data file not found: {path}")


def load_windows(cfg: RunConfig, skip_log: SkipLog | None = None):
    """All windows for the run: sliced from ``data.path`` or simulated from ``synth.*``."""
    spec = cfg.env().window_spec(cfg["data.hours"])
    if cfg["data.path"]:
        series = load_price_series(cfg["data.path"], cfg["data.instrument"])
        windows = slice_windows(series, spec, skip_log)
    else:
        params = {"p0": cfg["synth.p0"]}
        if cfg["synth.model"] == "drift":
            params["mu"] = cfg["synth.mu"]
        elif cfg["synth.model"] == "ou":
            params.update(kappa=cfg["synth.kappa"], pbar=cfg["synth.pbar"])
        windows = synth_windows(cfg["synth.n_windows"], spec, cfg["synth.model"],
                                cfg["synth.vol"], cfg["synth.seed"], **params)
    return windows


def split_windows(cfg: RunConfig, windows):
    return train_eval_split(windows, cfg["data.train_ratio"], cfg["seed"], cfg["data.shuffle"])


# --- checkpoints --------------------------------------------------------------------

def checkpoint_dict(agent: DDQNAgent) -> dict:
    return {
        "network": params_to_dict(agent.main),
        "feature_config": agent.feat_cfg.to_dict(),
        "feature_set": agent.feature_set,
        "episodes_done": agent.episodes_done,
    }


def write_checkpoint(agent: DDQNAgent, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(agent), sort_keys=True))


def read_checkpoint(path) -> tuple[QNetwork, FeatureConfig, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"checkpoint not found: {p}")
    try:
        d = json.loads(p.read_text())
        return (params_from_dict(d["network"]), FeatureConfig.from_dict(d["feature_config"]),
                d["feature_set"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"unreadable checkpoint {p}: {exc}") from None


def _check_checkpoint(cfg: RunConfig, feat: FeatureConfig, feature_set: str) -> None:
    if feature_set != cfg["features"]:
        raise ConfigError(f"checkpoint was trained with feature set {feature_set}, "
                          f"config asks for {cfg['features']}")
    if feat.q0 != cfg["env.q0"] or feat.periods != cfg["env.periods"]:
        raise ConfigError(f"checkpoint expects q0={feat.q0}, periods={feat.periods}; "
                          f"config has q0={cfg['env.q0']}, periods={cfg['env.periods']}")


# --- commands -----------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> Path:
    cfg.validate()
    check_data(cfg)
    skip_log = SkipLog()
    train, _ = split_windows(cfg, load_windows(cfg, skip_log))
    env_cfg = cfg.env()
    feat = fit_feature_config(train, env_cfg.q0, env_cfg.periods, env_cfg.seconds_per_period)

    out = Path(cfg["out"])
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_SNAPSHOT).write_text(cfg.dumps())
    if skip_log.entries:
        skip_log.write(out / "skipped_windows.csv")

    agent = DDQNAgent(env_cfg, feat, cfg.agent(), cfg.net(), cfg["replay.capacity"])
    on_sync = lambda a: write_checkpoint(a, ckpt_dir / f"episode_{a.episodes_done:06d}.json")  # noqa: E731
    try:
        agent.pretrain(train)
        agent.train(train, on_sync=on_sync)
    except TrainingError:
        write_checkpoint(agent, out / "checkpoint.failed.json")
        raise
    finally:
        with (out / TRAIN_LOG).open("w") as fh:
            fh.write(LOG_HEADER + "\n")
            for r in agent.log:
                fh.write(f"{r.episode},{r.epsilon!r},{r.mean_loss!r},{r.episode_reward!r},{r.eps_used}\n")
    write_checkpoint(agent, out / CHECKPOINT_FILE)
    logger.info("trained %d episodes; artifacts in %s", agent.episodes_done, out)
    return out


def _model_policy(params: QNetwork, feat: FeatureConfig, feature_set: str, env_cfg):
    def policy(state):
        acts = admissible_actions(state, env_cfg)
        return select_greedy(params, state_features(state.raw, feat), state.q, acts,
                             env_cfg.q0, feature_set)
    return policy


def cmd_eval(cfg: RunConfig, checkpoint=None, policy: str = "model") -> Path:
    cfg.validate()
    env_cfg = cfg.env()
    if policy == "twap":
        model = schedule_policy(twap_schedule(env_cfg.q0, env_cfg.periods))
        extra = {"policy": "twap"}
    else:
        if checkpoint is None:
            raise ConfigError("eval needs --checkpoint (or --policy twap)")
        params, feat, feature_set = read_checkpoint(checkpoint)
        _check_checkpoint(cfg, feat, feature_set)
        model = _model_policy(params, feat, feature_set, env_cfg)
        extra = {"policy": "model", "feature_set": feature_set,
                 "feature_config": feat.to_dict()}
    check_data(cfg)
    _, ev = split_windows(cfg, load_windows(cfg))
    results = evaluate(model, ev, env_cfg)
    stats = summarize(results)
    out = Path(cfg["out"])
    emit_report(stats, results, out, extra=extra)
    return out


def cmd_policy_map(cfg: RunConfig, checkpoint, price_buckets: int = 3, qv_buckets: int = 3) -> Path:
    cfg.validate()
    if checkpoint is None:
        raise ConfigError("policy-map needs --checkpoint")
    params, feat, feature_set = read_checkpoint(checkpoint)
    _check_checkpoint(cfg, feat, feature_set)
    grid = extract_policy_grid(params, cfg.env(), feat, feature_set, price_buckets, qv_buckets)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for pi in range(len(grid.price_levels)):
        for qi in range(len(grid.qv_levels)):
            rows = [r for r in grid.rows() if r[2] == pi and r[3] == qi]
            write_heatmap_csv(rows, out / f"policy_p{pi}_qv{qi}.csv")
    return out


def cmd_synth_gen(cfg: RunConfig) -> Path:
    """Write ``synth.days`` days of simulated midprices covering the configured hours."""
    cfg.validate()
    hours = cfg["data.hours"]
    first = max(min(hours) - 1, 0) * 3600
    last = min(max(hours) + 2, 24) * 3600
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "prices.csv"
    seeds = np.random.SeedSequence(cfg["synth.seed"]).generate_state(cfg["synth.days"])
    params = {"p0": cfg["synth.p0"]}
    if cfg["synth.model"] == "drift":
        params["mu"] = cfg["synth.mu"]
    elif cfg["synth.model"] == "ou":
        params.update(kappa=cfg["synth.kappa"], pbar=cfg["synth.pbar"])
    for day, s in enumerate(seeds):
        series = synth_series(cfg["synth.model"], cfg["synth.vol"], last - first, int(s),
                              start=day * 86_400 + first, **params)
        save_price_series(series, path, append=day > 0)
    return path


# --- argument handling --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="execq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--features", type=str.lower, choices=("ti", "tip", "tipqv"))
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        return p

    common(sub.add_parser("train", help="pre-train and train a Double-DQN agent"))
    ev = common(sub.add_parser("eval", help="evaluate a checkpoint against TWAP"))
    ev.add_argument("--checkpoint")
    ev.add_argument("--policy", choices=("model", "twap"), default="model")
    pm = common(sub.add_parser("policy-map", help="write greedy-action grids"))
    pm.add_argument("--checkpoint")
    pm.add_argument("--price-buckets", type=int, default=3)
    pm.add_argument("--qv-buckets", type=int, default=3)
    common(sub.add_parser("synth-gen", help="write a synthetic midprice CSV"))
    return parser


def config_from_args(args) -> RunConfig:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"out={args.out}")
    if args.features is not None:
        overrides.append(f"features={args.features}")
    return load_config(args.config, overrides)


def _setup_logging() -> None:
    level = os.environ.get("EXECQ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(cfg, args.checkpoint, args.policy)
        elif args.command == "policy-map":
            cmd_policy_map(cfg, args.checkpoint, args.price_buckets, args.qv_buckets)
        else:
            cmd_synth_gen(cfg)
    except ConfigError as exc:
        print(f"execq: config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, TrainingError, ValueError, OSError, ArithmeticError) as exc:
        print(f"execq: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
