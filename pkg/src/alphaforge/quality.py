"""Field-level data quality metrics and lookback-window recommendations."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidConfig, NoData, ZeroExpected
from .panel import PanelField

VOL_WINDOW = 63

# (upper bound on frequency_ratio, windows); last row catches everything else
WINDOW_TABLE = (
    (0.02, (63, 252)),
    (0.2, (21, 63)),
    (math.inf, (5, 10, 21, 63)),
)


@dataclass(frozen=True)
class QualityConfig:
    outlier_threshold: Optional[float] = None
    expected_median: Optional[float] = None

    def __post_init__(self):
        if self.outlier_threshold is not None and not self.outlier_threshold > 0:
            raise InvalidConfig("outlier_threshold must be > 0")


@dataclass(frozen=True)
class SeriesQuality:
    coverage_ratio: float
    missing_ratio: float
    frequency_ratio: float
    duplicate_ratio: float
    outlier_ratio: Optional[float]
    deviation_from_expected: Optional[float]
    skewness: float
    kurtosis: float
    max_gap: int
    volatility_ratio: float
    count_non_null: int
    total_expected: int


@dataclass(frozen=True)
class QualityReport:
    field: str
    pooled: SeriesQuality
    per_symbol: dict = field(default_factory=dict)  # symbol -> SeriesQuality or None
    recommended_windows: tuple = ()

    @property
    def frequency_ratio(self):
        return self.pooled.frequency_ratio

    def to_records(self):
        rows = []
        for sym, q in self.per_symbol.items():
            rows.append(_record(self.field, sym, q))
        pooled = _record(self.field, "__pooled__", self.pooled)
        pooled["recommended_windows"] = list(self.recommended_windows)
        rows.append(pooled)
        return rows

    def to_json(self):
        return json.dumps(self.to_records(), indent=2, allow_nan=False)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _record(name, symbol, q):
    rec = {"field": name, "symbol": symbol}
    if q is None:
        rec["no_data"] = True
        return rec
    rec.update({k: _clean(v) for k, v in asdict(q).items()})
    return rec


def moment_skew_kurt(x):
    """Moment-based skewness g1 and excess kurtosis g2 (NaN when degenerate)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2:
        return math.nan, math.nan
    d = x - x.mean()
    m2 = np.mean(d * d)
    if math.sqrt(m2) < 1e-12:
        return math.nan, math.nan
    m3 = np.mean(d**3)
    m4 = np.mean(d**4)
    return float(m3 / m2**1.5), float(m4 / m2**2 - 3.0)


def _volatility_ratio(obs):
    if obs.size < VOL_WINDOW:
        return math.nan
    full = obs.std(ddof=1)
    if full < 1e-12:
        return math.nan
    windows = np.lib.stride_tricks.sliding_window_view(obs, VOL_WINDOW)
    return float(windows.std(axis=1, ddof=1).max() / full)


def _counts(values, cfg):
    mask = ~np.isnan(values)
    obs = values[mask]
    idx = np.flatnonzero(mask)
    pairs = max(obs.size - 1, 0)
    changes = int(np.count_nonzero(obs[1:] != obs[:-1])) if pairs else 0
    outliers = None
    if cfg.outlier_threshold is not None:
        outliers = int(np.count_nonzero(np.abs(obs) > cfg.outlier_threshold))
    gap = int((np.diff(idx) - 1).max()) if idx.size > 1 else 0
    return obs, pairs, changes, outliers, gap


def _summarize(n_expected, obs, pairs, changes, outliers, gap, cfg, vol_ratio):
    n = obs.size
    skew, kurt = moment_skew_kurt(obs)
    deviation = None
    if cfg.expected_median is not None:
        deviation = abs(float(np.median(obs)) - cfg.expected_median) / abs(cfg.expected_median)
    coverage = n / n_expected
    return SeriesQuality(
        coverage_ratio=coverage,
        missing_ratio=1.0 - coverage,
        frequency_ratio=changes / pairs if pairs else 0.0,
        duplicate_ratio=(pairs - changes) / pairs if pairs else 0.0,
        outlier_ratio=None if outliers is None else outliers / n,
        deviation_from_expected=deviation,
        skewness=skew,
        kurtosis=kurt,
        max_gap=gap,
        volatility_ratio=vol_ratio,
        count_non_null=n,
        total_expected=n_expected,
    )


def evaluate_series(values, cfg: QualityConfig = QualityConfig()) -> SeriesQuality:
    """Quality metrics for one date-ordered series (NaN = missing)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise NoData("empty series")
    if cfg.expected_median == 0:
        raise ZeroExpected("expected_median must be non-zero")
    obs, pairs, changes, outliers, gap = _counts(values, cfg)
    if obs.size == 0:
        raise NoData("series is entirely missing")
    return _summarize(values.size, obs, pairs, changes, outliers, gap, cfg, _volatility_ratio(obs))


def evaluate_field(fld: PanelField, cfg: QualityConfig = QualityConfig(), symbols=None) -> QualityReport:
    """Per-symbol and pooled metrics for a panel field.

    Pooled numbers only count symbols with at least one observation, so
    appending all-missing symbols leaves them unchanged.
    """
    values = np.asarray(fld.values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.size == 0:
        raise NoData(f"field {fld.name!r} is empty")
    if cfg.expected_median == 0:
        raise ZeroExpected("expected_median must be non-zero")
    n_dates, n_sym = values.shape
    symbols = symbols or [str(j) for j in range(n_sym)]

    per_symbol = {}
    pooled_obs, tot_pairs, tot_changes, tot_out, max_gap, vol = [], 0, 0, 0, 0, math.nan
    for j, sym in enumerate(symbols):
        obs, pairs, changes, outliers, gap = _counts(values[:, j], cfg)
        if obs.size == 0:
            per_symbol[sym] = None
            continue
        vr = _volatility_ratio(obs)
        per_symbol[sym] = _summarize(n_dates, obs, pairs, changes, outliers, gap, cfg, vr)
        pooled_obs.append(obs)
        tot_pairs += pairs
        tot_changes += changes
        tot_out += outliers or 0
        max_gap = max(max_gap, gap)
        if not math.isnan(vr):
            vol = vr if math.isnan(vol) else max(vol, vr)
    if not pooled_obs:
        raise NoData(f"field {fld.name!r} is entirely missing")

    obs = np.concatenate(pooled_obs)
    n_expected = n_dates * len(pooled_obs)
    outliers = tot_out if cfg.outlier_threshold is not None else None
    pooled = _summarize(n_expected, obs, tot_pairs, tot_changes, outliers, max_gap, cfg, vol)
    return QualityReport(fld.name, pooled, per_symbol, tuple(sorted(recommend_windows(pooled))))


def recommend_windows(report) -> set:
    """Map an update-frequency ratio to a menu of lookback windows.

    Slowly updating data (fundamentals) gets quarterly/yearly windows,
    daily-varying data gets short ones. Accepts a report or a bare ratio.
    """
    ratio = report if isinstance(report, (int, float)) else report.frequency_ratio
    if ratio is None or math.isnan(ratio):
        raise InvalidConfig("frequency_ratio undefined")
    for bound, windows in WINDOW_TABLE:
        if ratio <= bound:
            return set(windows)
    raise AssertionError("unreachable")
