"""TWAP baseline, P&L accounting, relative-performance statistics and report files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import env as E
from .market_data import EpisodeWindow

REPORT_SCHEMA_VERSION = 1
HOUR_HEADER = ("date", "hour", "model_pnl", "twap_pnl", "delta_bps")
HEATMAP_HEADER = ("k", "q", "price_bucket", "qv_bucket", "action")


class UndefinedResultError(ArithmeticError):
    pass


def twap_schedule(q0: int, periods: int) -> list[int]:
    """Equal lots per period; the remainder goes one lot each to the earliest periods."""
    if periods < 1:
        raise ValueError("periods must be >= 1")
    base, rem = divmod(q0, periods)
    return [base + (1 if k < rem else 0) for k in range(periods)]


def schedule_policy(schedule: Sequence[int]) -> Callable[[E.EpisodeState], int]:
    """Policy that follows a fixed schedule, capped by the inventory left."""
    return lambda s: min(int(schedule[s.k]), s.q)


def rollout(policy: Callable[[E.EpisodeState], int], window: EpisodeWindow,
            cfg: E.EnvConfig) -> tuple[float, list[int]]:
    """Execute a policy on one window; returns (P&L, actions).

    Child orders earn the midprice at the start of each second and pay
    ``a * child**2``; leftovers at the horizon are sold in one extra second.
    """
    state = E.reset(window, cfg)
    m = cfg.seconds_per_period
    a = cfg.penalty_a
    pnl = 0.0
    actions = []
    while state.k < cfg.periods:
        x = int(policy(state))
        i = window.decision_index(state.k)
        child = x / m
        pnl += child * float(np.sum(window.prices[i:i + m])) - m * a * child * child
        actions.append(x)
        state = E.step(state, x, cfg).state
    left = state.q
    pnl += left * float(window.prices[window.decision_index(cfg.periods)]) - a * left * left
    return pnl, actions


def run_policy(policy, window: EpisodeWindow, cfg: E.EnvConfig) -> float:
    if not callable(policy):
        policy = schedule_policy(policy)
    return rollout(policy, window, cfg)[0]


def delta_pnl(model: float, twap: float) -> float:
    """Improvement over TWAP in basis points."""
    if twap == 0:
        raise UndefinedResultError("TWAP P&L is zero; relative improvement undefined")
    return (model - twap) / twap * 10_000


@dataclass(frozen=True)
class HourResult:
    date: str
    hour: str
    model_pnl: float
    twap_pnl: float
    delta_bps: float


@dataclass(frozen=True)
class SummaryStats:
    n: int
    median: float
    mean: float
    std: float
    glr: float
    glr_flag: str  # "", "no_losses" (GLR=inf), "no_gains" (GLR=0) or "no_gains_no_losses" (nan)
    win_probability: float
    zero_share: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryStats":
        return cls(**d)


def summarize(deltas) -> SummaryStats:
    """Median/mean/std, gain-loss ratio and win probability of ΔP&L samples.

    Zeros count towards neither side of the gain-loss ratio. ``std`` is the
    sample standard deviation (0 for a single sample).
    """
    d = np.asarray([r.delta_bps if isinstance(r, HourResult) else r for r in deltas], dtype=float)
    if d.size == 0:
        raise ValueError("cannot summarize an empty result set")
    gains = d[d > 0]
    losses = -d[d < 0]
    if gains.size and losses.size:
        glr, flag = float(gains.mean() / losses.mean()), ""
    elif gains.size:
        glr, flag = math.inf, "no_losses"
    elif losses.size:
        glr, flag = 0.0, "no_gains"
    else:
        glr, flag = math.nan, "no_gains_no_losses"
    return SummaryStats(
        n=int(d.size),
        median=float(np.median(d)),
        mean=float(np.mean(d)),
        std=float(np.std(d, ddof=1)) if d.size > 1 else 0.0,
        glr=glr,
        glr_flag=flag,
        win_probability=float(gains.size / d.size),
        zero_share=float(np.count_nonzero(d == 0) / d.size),
    )


def evaluate(policy: Callable[[E.EpisodeState], int], windows: Sequence[EpisodeWindow],
             cfg: E.EnvConfig, baseline=None) -> list[HourResult]:
    """Model vs TWAP on each window, sorted by (date, hour)."""
    twap = baseline or schedule_policy(twap_schedule(cfg.q0, cfg.periods))
    out = []
    for w in windows:
        model = run_policy(policy, w, cfg)
        ref = run_policy(twap, w, cfg)
        out.append(HourResult(w.date, str(w.hour), model, ref, delta_pnl(model, ref)))
    return sorted(out, key=lambda r: (r.date, r.hour))


def histogram(deltas) -> tuple[np.ndarray, np.ndarray]:
    """Freedman-Diaconis histogram of ΔP&L; returns (edges, counts)."""
    d = np.asarray(deltas, dtype=float)
    edges = np.histogram_bin_edges(d, bins="fd")
    counts, edges = np.histogram(d, bins=edges)
    return edges, counts


def write_hour_csv(results: Sequence[HourResult], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HOUR_HEADER)
        for r in results:
            w.writerow([r.date, r.hour, repr(r.model_pnl), repr(r.twap_pnl), repr(r.delta_bps)])


def read_hour_csv(path) -> list[HourResult]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [HourResult(r["date"], r["hour"], float(r["model_pnl"]), float(r["twap_pnl"]),
                       float(r["delta_bps"])) for r in rows]


def write_heatmap_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEATMAP_HEADER)
        w.writerows(rows)


def emit_report(stats: SummaryStats, results: Sequence[HourResult], out_dir,
                grids: dict | None = None, extra: dict | None = None) -> dict[str, Path]:
    """Write summary JSON, per-hour CSV, ΔP&L histogram CSV and optional heatmap grids.

    ``grids`` maps a file stem to heatmap rows ``(k, q, price_bucket, qv_bucket, action)``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    deltas = [r.delta_bps for r in results]
    edges, counts = histogram(deltas)

    per_hour = {}
    for hour in sorted({r.hour for r in results}):
        per_hour[hour] = summarize([r for r in results if r.hour == hour]).to_dict()
    summary = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "pooled": stats.to_dict(),
        "per_hour": per_hour,
        "histogram": {"rule": "freedman-diaconis",
                      "bin_width": float(edges[1] - edges[0]) if len(edges) > 1 else 0.0,
                      "n_bins": int(len(counts))},
    }
    if extra:
        summary.update(extra)
    paths["summary"] = out / "summary.json"
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True))

    paths["per_hour"] = out / "per_hour.csv"
    write_hour_csv(results, paths["per_hour"])

    paths["histogram"] = out / "delta_hist.csv"
    with paths["histogram"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin_left", "bin_right", "count"))
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow((repr(float(lo)), repr(float(hi)), int(c)))

    for stem, rows in (grids or {}).items():
        paths[stem] = out / f"{stem}.csv"
        write_heatmap_csv(rows, paths[stem])
    return paths


def load_summary(path) -> SummaryStats:
    return SummaryStats.from_dict(json.loads(Path(path).read_text())["pooled"])
