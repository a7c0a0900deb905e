"""Second-level midprice series: loading, cleaning, slicing into episode windows, synthesis."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

CSV_HEADER = ("timestamp_s", "midprice")
MAX_FILLED_FRACTION = 0.05
SECONDS_PER_DAY = 86_400
SYNTH_MODELS = ("martingale", "drift", "ou")


class DataError(ValueError):
    """Raised for malformed or inconsistent price data."""


class ParseError(DataError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class PriceSeries:
    """Gap-free 1-second midprice grid for one instrument.

    ``filled`` marks seconds that were forward-filled during cleaning.
    """

    instrument: str
    timestamps: np.ndarray
    prices: np.ndarray
    filled: np.ndarray = None
    n_duplicates: int = 0

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        px = np.asarray(self.prices, dtype=np.float64)
        filled = (np.zeros(len(ts), dtype=bool) if self.filled is None
                  else np.asarray(self.filled, dtype=bool))
        if len(ts) != len(px) or len(filled) != len(ts):
            raise DataError("timestamps, prices and fill mask must have equal length")
        if len(ts) < 2:
            raise DataError("a price series needs at least 2 points")
        if np.any(np.diff(ts) != 1):
            raise DataError("timestamps must be consecutive seconds")
        if not np.all(np.isfinite(px)) or np.any(px <= 0):
            raise DataError("midprices must be finite and positive")
        for name, arr in (("timestamps", ts), ("prices", px), ("filled", filled)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.prices)

    @property
    def n_filled(self) -> int:
        return int(self.filled.sum())

    def index_of(self, timestamp: int) -> int:
        return int(timestamp - self.timestamps[0])


@dataclass(frozen=True)
class WindowSpec:
    """Episode geometry: N periods of M seconds, a leading period and a liquidation tail."""

    periods: int = 5
    seconds_per_period: int = 720
    terminal_seconds: int = 1
    hours: tuple[int, ...] = (11, 12, 13)

    def __post_init__(self):
        if self.periods < 2 or self.seconds_per_period < 1:
            raise ValueError("need periods >= 2 and seconds_per_period >= 1")
        if self.terminal_seconds != 1:
            raise ValueError("terminal liquidation extension is fixed at 1 second")
        if self.horizon > 3600:
            raise ValueError(f"horizon {self.horizon}s does not fit in one trading hour")

    @property
    def horizon(self) -> int:
        return self.periods * self.seconds_per_period

    @property
    def lead(self) -> int:
        return self.seconds_per_period

    @property
    def n_seconds(self) -> int:
        return self.lead + self.horizon + self.terminal_seconds


@dataclass(frozen=True)
class EpisodeWindow:
    """Price slice for one episode.

    ``prices`` holds ``n_seconds + 1`` points: ``lead`` seconds of warm-up (for the
    initial quadratic variation), the trading horizon, and the liquidation second.
    Decision time T_k sits at index ``lead + k * M``.
    """

    prices: np.ndarray
    spec: WindowSpec
    date: str = ""
    hour: int | str = "synthetic"
    filled_fraction: float = 0.0

    def __post_init__(self):
        px = np.array(self.prices, dtype=np.float64)
        if len(px) != self.spec.n_seconds + 1:
            raise DataError(f"window has {len(px) - 1} seconds, expected {self.spec.n_seconds}")
        if not np.all(np.isfinite(px)) or np.any(px <= 0):
            raise DataError("window prices must be finite and positive")
        px.flags.writeable = False
        object.__setattr__(self, "prices", px)

    @property
    def n_seconds(self) -> int:
        return len(self.prices) - 1

    def decision_index(self, k: int) -> int:
        return self.spec.lead + k * self.spec.seconds_per_period

    @property
    def start_price(self) -> float:
        return float(self.prices[self.spec.lead])

    @property
    def sort_key(self) -> tuple[str, str]:
        return (self.date, str(self.hour))


def load_price_series(path, instrument: str = "") -> PriceSeries:
    """Read a ``timestamp_s,midprice`` CSV onto a 1-second grid.

    Duplicate seconds keep the last value; missing seconds are forward-filled and
    flagged so that windows can be rejected later.
    """
    path = Path(path)
    by_second: dict[int, float] = {}
    n_dup = 0
    last_ts = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(path, 1, f"expected header {','.join(CSV_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(path, line, f"expected 2 fields, got {len(row)}")
            try:
                ts = int(row[0])
                px = float(row[1])
            except ValueError as exc:
                raise ParseError(path, line, str(exc)) from None
            if not np.isfinite(px) or px <= 0:
                raise ParseError(path, line, f"midprice must be positive, got {row[1]!r}")
            if last_ts is not None and ts < last_ts:
                raise DataError(f"{path}:{line}: timestamp {ts} goes backwards (after {last_ts})")
            if ts == last_ts:
                n_dup += 1
            by_second[ts] = px
            last_ts = ts
    if len(by_second) == 0:
        raise DataError(f"{path}: no data rows")

    seconds = np.fromiter(by_second.keys(), dtype=np.int64)
    values = np.fromiter(by_second.values(), dtype=np.float64)
    grid = np.arange(seconds[0], seconds[-1] + 1, dtype=np.int64)
    # position of the last observed second at or before each grid point
    pos = np.searchsorted(seconds, grid, side="right") - 1
    prices = values[pos]
    filled = seconds[pos] != grid
    if filled.any():
        logger.info("%s: forward-filled %d missing seconds", path, int(filled.sum()))
    return PriceSeries(instrument or path.stem, grid, prices, filled, n_dup)


def save_price_series(series: PriceSeries, path, append: bool = False) -> None:
    """Write ``timestamp_s,midprice`` rows; ``append`` adds rows without a header."""
    with Path(path).open("a" if append else "w", newline="") as fh:
        if not append:
            fh.write(",".join(CSV_HEADER) + "\n")
        for ts, px in zip(series.timestamps.tolist(), series.prices.tolist()):
            fh.write(f"{ts},{px!r}\n")


@dataclass
class SkipLog:
    entries: list[tuple[str, str, str]] = field(default_factory=list)

    def add(self, date: str, hour, reason: str) -> None:
        logger.info("skipping window %s hour %s: %s", date, hour, reason)
        self.entries.append((date, str(hour), reason))

    def lines(self) -> list[str]:
        return [f"{d},{h},{r}" for d, h, r in self.entries]

    def write(self, path) -> None:
        Path(path).write_text("".join(line + "\n" for line in self.lines()))


def _day_label(day: int) -> str:
    return (dt.date(1970, 1, 1) + dt.timedelta(days=day)).isoformat()


def slice_windows(series: PriceSeries, spec: WindowSpec,
                  skip_log: SkipLog | None = None) -> list[EpisodeWindow]:
    """One window per (day, hour) that the series fully covers.

    Timestamps are read as exchange-local wall-clock seconds, so hour ``h`` of a
    day starts at ``day * 86400 + h * 3600``.
    """
    skip_log = skip_log if skip_log is not None else SkipLog()
    first_day = int(series.timestamps[0]) // SECONDS_PER_DAY
    last_day = int(series.timestamps[-1]) // SECONDS_PER_DAY
    out = []
    for day in range(first_day, last_day + 1):
        date = _day_label(day)
        for hour in spec.hours:
            t0 = day * SECONDS_PER_DAY + hour * 3600
            lo = series.index_of(t0 - spec.lead)
            hi = series.index_of(t0 + spec.horizon + spec.terminal_seconds)
            if lo < 0 or hi >= len(series):
                skip_log.add(date, hour, "insufficient data")
                continue
            frac = float(series.filled[lo:hi + 1].mean())
            if frac > MAX_FILLED_FRACTION:
                skip_log.add(date, hour, f"filled fraction {frac:.4f} exceeds {MAX_FILLED_FRACTION}")
                continue
            out.append(EpisodeWindow(series.prices[lo:hi + 1], spec, date, hour, frac))
    return out


def synth_series(model: str = "martingale", vol: float = 0.01, length: int = 3600,
                 seed: int = 0, p0: float = 100.0, mu: float = 0.0, kappa: float = 0.0,
                 pbar: float | None = None, start: int = 0,
                 instrument: str = "SYNTH") -> PriceSeries:
    """Simulate a 1-second midprice path.

    martingale: iid N(0, vol^2) increments; drift: adds ``mu`` per second;
    ou: ``p += kappa * (pbar - p) + noise``.
    """
    if vol < 0:
        raise ValueError(f"vol must be non-negative, got {vol}")
    if length < 2:
        raise ValueError("length must be >= 2")
    if model not in SYNTH_MODELS:
        raise ValueError(f"unknown synthetic model {model!r}; expected one of {SYNTH_MODELS}")
    rng = np.random.default_rng(seed)
    noise = vol * rng.standard_normal(length - 1)
    if model == "martingale":
        prices = p0 + np.concatenate(([0.0], np.cumsum(noise)))
    elif model == "drift":
        prices = p0 + mu * np.arange(length) + np.concatenate(([0.0], np.cumsum(noise)))
    else:
        target = p0 if pbar is None else pbar
        prices = np.empty(length)
        prices[0] = p0
        for i in range(1, length):
            prices[i] = prices[i - 1] + kappa * (target - prices[i - 1]) + noise[i - 1]
    if np.any(prices <= 0):
        raise DataError("synthetic path hit a non-positive price; lower vol or raise p0")
    return PriceSeries(instrument, np.arange(start, start + length, dtype=np.int64), prices)


def synth_windows(n_windows: int, spec: WindowSpec, model: str = "martingale",
                  vol: float = 0.01, seed: int = 0, **params) -> list[EpisodeWindow]:
    """Independent synthetic windows, each path restarted at ``p0``.

    Window i is labelled with date ``"synth-{i:05d}"`` so chronological order is
    the generation order.
    """
    seeds = np.random.SeedSequence(seed).generate_state(n_windows)
    out = []
    for i, s in enumerate(seeds):
        path = synth_series(model, vol, spec.n_seconds + 1, int(s), **params)
        out.append(EpisodeWindow(path.prices, spec, f"synth-{i:05d}", "synthetic"))
    return out


def train_eval_split(windows: Sequence[EpisodeWindow], ratio: float = 0.8,
                     seed: int = 0, shuffle: bool = False):
    """Split windows into (train, eval).

    Chronological by default: the earliest ``floor(n * ratio)`` windows train
    (at least one window on each side). ``shuffle=True`` uses a seeded random split.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    if len(windows) < 2:
        raise DataError("need at least 2 windows to split")
    ordered = sorted(windows, key=lambda w: w.sort_key)
    if shuffle:
        perm = np.random.default_rng(seed).permutation(len(ordered))
        ordered = [ordered[i] for i in perm]
    n_train = min(max(int(np.floor(len(ordered) * ratio + 1e-9)), 1), len(ordered) - 1)
    return list(ordered[:n_train]), list(ordered[n_train:])
