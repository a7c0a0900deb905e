"""Feature transforms mapping market and inventory quantities into roughly [-1, 1]."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

FEATURE_SETS = ("TI", "TIP", "TIPQV")


def check_feature_set(tag: str) -> str:
    tag = tag.upper()
    if tag not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {tag!r}; expected one of {FEATURE_SETS}")
    return tag


def input_dim(feature_set: str) -> int:
    return {"TI": 3, "TIP": 4, "TIPQV": 5}[check_feature_set(feature_set)]


@dataclass(frozen=True)
class FeatureConfig:
    """Normalisation constants shared by training and evaluation.

    ``price_ref`` of ``None`` measures price against the hour-start midprice;
    a number pins the reference (used for toy processes with absolute levels).
    """

    q0: int
    periods: int
    price_scale: float = 1.0
    qv_mean: float = 0.0
    qv_std: float = 1.0
    price_ref: float | None = None

    def __post_init__(self):
        if self.price_scale <= 0:
            raise ValueError("price_scale must be positive")
        if self.qv_std <= 0:
            raise ValueError("qv_std must be positive")
        if self.q0 <= 0 or self.periods < 2:
            raise ValueError("need q0 > 0 and periods >= 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


@dataclass(frozen=True)
class RawState:
    k: int
    q: int
    p: float
    p_hour: float
    qv_prev: float


def transform_time(k, n_periods: int):
    if n_periods < 2:
        raise ValueError("need at least 2 periods")
    return 2.0 * k / (n_periods - 1) - 1.0


def transform_price(p: float, p_hour: float, scale: float) -> float:
    if scale <= 0:
        raise ValueError("scale must be positive")
    return (p - p_hour) / scale


def compute_qv(prices) -> float:
    """Sum of squared one-second increments along a price path."""
    p = np.asarray(prices, dtype=float)
    if p.size < 2:
        raise ValueError("quadratic variation needs at least 2 prices")
    d = np.diff(p)
    return float(d @ d)


def standardize_qv(qv: float, mean: float, std: float) -> float:
    if std <= 0:
        raise ValueError("std must be positive")
    return (qv - mean) / (2.0 * std)


def transform_inventory_action(q, x, q0) -> tuple[float, float]:
    """Map the valid triangle ``0 <= x <= q <= q0, q > 0`` onto [-1, 1]^2.

    Polar coordinates are taken on the shifted pair ``(q/q0 - 1, x/q0)`` and the
    radius is stretched so the triangle fills the quadrant [-1, 0] x [0, 1].
    """
    if q <= 0:
        raise ValueError(f"inventory must be positive, got {q}")
    if x < 0 or x > q:
        raise ValueError(f"action {x} outside [0, {q}]")
    if q > q0:
        raise ValueError(f"inventory {q} exceeds q0={q0}")
    qh = q / q0 - 1.0
    xh = x / q0
    if qh == 0.0 and xh == 0.0:
        return 0.0, 0.0
    r = math.hypot(qh, xh)
    if qh == 0.0:
        # ratio -x/q diverges: take the theta -> pi/2 limit of the upper branch
        r_t = r * math.sqrt((0.0 + 1.0) * 2.0 * math.cos(math.pi / 4) ** 2)
        return 0.0, r_t
    zeta = -xh / qh
    theta = math.atan(zeta)
    if theta <= math.pi / 4:
        r_t = r * math.sqrt((zeta ** 2 + 1.0) * 2.0 * math.cos(math.pi / 4 - theta) ** 2)
    else:
        r_t = r * math.sqrt((zeta ** -2 + 1.0) * 2.0 * math.cos(theta - math.pi / 4) ** 2)
    return -r_t * math.cos(theta), r_t * math.sin(theta)


@lru_cache(maxsize=64)
def inventory_action_table(q0: int) -> np.ndarray:
    """Precomputed ``(q~, x~)`` for all integer ``0 < q <= q0``, ``0 <= x <= q``.

    Indexed as ``table[q, x]``; entries with ``x > q`` or ``q == 0`` are NaN.
    """
    table = np.full((q0 + 1, q0 + 1, 2), np.nan)
    for q in range(1, q0 + 1):
        for x in range(q + 1):
            table[q, x] = transform_inventory_action(q, x, q0)
    table.flags.writeable = False
    return table


def state_features(raw: RawState, cfg: FeatureConfig) -> tuple[float, float, float]:
    """Action-independent features ``(t~, P~, QV~)`` for a raw state."""
    ref = raw.p_hour if cfg.price_ref is None else cfg.price_ref
    return (
        transform_time(raw.k, cfg.periods),
        transform_price(raw.p, ref, cfg.price_scale),
        standardize_qv(raw.qv_prev, cfg.qv_mean, cfg.qv_std),
    )


def assemble_inputs(t, p, qv, q: int, actions: Iterable[int], q0: int,
                    feature_set: str) -> np.ndarray:
    """Network input rows ``(t~, q~, x~[, P~][, QV~])``, one per candidate action."""
    actions = np.asarray(list(actions) if not isinstance(actions, np.ndarray) else actions,
                         dtype=np.int64)
    if q <= 0:
        raise ValueError("zero-inventory states are not fed to the network")
    if np.any(actions < 0) or np.any(actions > q):
        raise ValueError(f"actions must lie in [0, {q}]")
    qx = inventory_action_table(q0)[q, actions]
    n = len(actions)
    cols = [np.full(n, t), qx[:, 0], qx[:, 1]]
    if feature_set in ("TIP", "TIPQV"):
        cols.append(np.full(n, p))
    if feature_set == "TIPQV":
        cols.append(np.full(n, qv))
    return np.column_stack(cols)


def build_state_vector(raw: RawState, x: int, cfg: FeatureConfig,
                       feature_set: str = "TIP") -> np.ndarray:
    feature_set = check_feature_set(feature_set)
    if not 0 <= raw.k <= cfg.periods - 1:
        raise ValueError(f"period index {raw.k} outside [0, {cfg.periods - 1}]")
    if not 0 < raw.q <= cfg.q0:
        raise ValueError(f"inventory {raw.q} outside (0, {cfg.q0}]")
    t, p, qv = state_features(raw, cfg)
    return assemble_inputs(t, p, qv, raw.q, [x], cfg.q0, feature_set)[0]


def fit_feature_config(windows, q0: int, periods: int, seconds_per_period: int,
                       price_ref: float | None = None) -> FeatureConfig:
    """Fit price scale and QV statistics on training windows.

    Price scale is twice the std of (p - reference) over all decision times;
    QV statistics pool every period's quadratic variation, including the
    leading period. Degenerate (zero) spreads fall back to 1.
    """
    devs, qvs = [], []
    m = seconds_per_period
    for w in windows:
        ref = w.start_price if price_ref is None else price_ref
        for k in range(periods):
            i = w.decision_index(k)
            devs.append(w.prices[i] - ref)
            qvs.append(compute_qv(w.prices[i - m:i + 1]))
    devs = np.asarray(devs)
    qvs = np.asarray(qvs)
    price_scale = 2.0 * float(np.std(devs)) if len(devs) else 0.0
    qv_std = float(np.std(qvs)) if len(qvs) else 0.0
    return FeatureConfig(
        q0=q0,
        periods=periods,
        price_scale=price_scale if price_scale > 0 else 1.0,
        qv_mean=float(np.mean(qvs)) if len(qvs) else 0.0,
        qv_std=qv_std if qv_std > 0 else 1.0,
        price_ref=price_ref,
    )
