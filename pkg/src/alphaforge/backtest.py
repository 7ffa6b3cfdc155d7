"""Dollar-neutral position construction, daily PnL simulation and metrics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ._jit import USE_NUMBA, optional_njit
from .errors import InvalidConfig, MissingReturns, TooFewDates
from .kernels import cs_rank

ANNUALIZATION = 252
MIN_SPLIT_DATES = 60


@dataclass(frozen=True)
class BacktestReport:
    sharpe: float
    annual_return: float
    max_drawdown: float
    turnover: float
    margin: float
    n_days: int
    total_pnl: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PnlSeries:
    daily_pnl: np.ndarray
    turnover: np.ndarray  # per-date one-way turnover
    gross: np.ndarray  # per-date gross exposure of the held book

    @property
    def cum_pnl(self):
        return np.cumsum(self.daily_pnl)

    def slice(self, start, stop):
        return PnlSeries(self.daily_pnl[start:stop], self.turnover[start:stop], self.gross[start:stop])

    def __len__(self):
        return len(self.daily_pnl)


@dataclass(frozen=True)
class SampleSplit:
    train: tuple  # half-open (start, stop) row ranges
    validation: tuple
    test: tuple

    def ranges(self):
        return {"train": self.train, "validation": self.validation, "test": self.test}


# --------------------------------------------------------------- positions


@optional_njit
def _neutralize_loop(ranks):
    n, m = ranks.shape
    out = np.zeros((n, m))
    for t in range(n):
        c = 0
        s = 0.0
        for j in range(m):
            v = ranks[t, j]
            if not np.isnan(v):
                c += 1
                s += v
        if c < 2:
            continue
        mean = s / c
        gross = 0.0
        for j in range(m):
            v = ranks[t, j]
            if not np.isnan(v):
                gross += abs(v - mean)
        if gross < 1e-12:
            continue
        for j in range(m):
            v = ranks[t, j]
            if not np.isnan(v):
                out[t, j] = (v - mean) / gross
    return out


def _neutralize_numpy(ranks):
    present = ~np.isnan(ranks)
    count = present.sum(axis=1, keepdims=True)
    with np.errstate(all="ignore"):
        centered = ranks - np.nansum(ranks, axis=1, keepdims=True) / count
        gross = np.nansum(np.abs(centered), axis=1, keepdims=True)
        out = centered / gross
    live = (count >= 2) & (gross >= 1e-12)
    return np.where(present & live, out, 0.0)


_neutralize_rows = _neutralize_loop if USE_NUMBA else _neutralize_numpy


def signal_to_weights(signal: np.ndarray) -> np.ndarray:
    """Rank, demean and scale each date to unit gross exposure.

    Dates with fewer than two names or a fully tied cross-section are flat.
    """
    ranks = cs_rank(np.ascontiguousarray(signal, dtype=np.float64))
    return _neutralize_rows(ranks)


# --------------------------------------------------------------------- PnL


def simulate(weights: np.ndarray, returns: np.ndarray, cost_bps: float = 0.0) -> PnlSeries:
    """Positions held at t-1 earn returns at t; missing returns earn nothing."""
    if cost_bps < 0:
        raise InvalidConfig("cost_bps must be >= 0")
    w = np.nan_to_num(np.asarray(weights, dtype=np.float64))
    r = np.nan_to_num(np.asarray(returns, dtype=np.float64))
    prev = np.vstack([np.zeros((1, w.shape[1])), w[:-1]])
    turnover = 0.5 * np.abs(w - prev).sum(axis=1)
    gross_pnl = (prev * r).sum(axis=1)
    daily = gross_pnl - cost_bps * 1e-4 * turnover
    return PnlSeries(daily, turnover, np.abs(w).sum(axis=1))


def max_drawdown(cum_pnl) -> float:
    cum = np.asarray(cum_pnl, dtype=np.float64)
    if cum.size == 0:
        return 0.0
    return float((np.maximum.accumulate(cum) - cum).max())


def sharpe_ratio(daily) -> float:
    daily = np.asarray(daily, dtype=np.float64)
    if daily.size < 2:
        return 0.0
    sd = daily.std(ddof=1)
    if sd < 1e-12:
        return 0.0
    return float(math.sqrt(ANNUALIZATION) * daily.mean() / sd)


def report(pnl: PnlSeries) -> BacktestReport:
    daily = pnl.daily_pnl
    n = len(daily)
    total = float(daily.sum())
    growth = 1.0 + total
    annual = growth ** (ANNUALIZATION / n) - 1.0 if n and growth > 0 else -1.0
    return BacktestReport(
        sharpe=sharpe_ratio(daily),
        annual_return=float(annual),
        max_drawdown=max_drawdown(np.cumsum(daily)),
        turnover=float(pnl.turnover.mean()) if n else 0.0,
        margin=float(pnl.gross.mean()) if n else 0.0,
        n_days=n,
        total_pnl=total,
    )


def run_backtest(weights, panel, cost_bps: float = 0.0, rows=None):
    """Simulate ``weights`` against the panel's ``returns``.

    ``rows`` optionally restricts the report to a half-open (start, stop)
    date range; positions before ``start`` still carry into it.
    """
    if "returns" not in panel.fields:
        raise MissingReturns("panel has no 'returns' field")
    pnl = simulate(weights, panel.fields["returns"], cost_bps)
    if rows is not None:
        pnl = pnl.slice(*rows)
    return pnl, report(pnl)


def split_reports(weights, panel, split: SampleSplit, cost_bps: float = 0.0):
    """Full-calendar simulation reported per split: {name: (PnlSeries, report)}."""
    if "returns" not in panel.fields:
        raise MissingReturns("panel has no 'returns' field")
    pnl = simulate(weights, panel.fields["returns"], cost_bps)
    out = {}
    for name, rows in split.ranges().items():
        part = pnl.slice(*rows)
        out[name] = (part, report(part))
    return out


# ------------------------------------------------------------------ splits


def split_sample(calendar, fractions=(0.6, 0.2, 0.2), min_dates: int = MIN_SPLIT_DATES) -> SampleSplit:
    """Contiguous chronological train/validation/test split."""
    n = len(calendar)
    if n < min_dates:
        raise TooFewDates(f"need at least {min_dates} dates, got {n}")
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidConfig("fractions must be three positive numbers summing to 1")
    a = int(round(fractions[0] * n))
    b = int(round((fractions[0] + fractions[1]) * n))
    if not 0 < a < b < n:
        raise InvalidConfig(f"fractions {fractions} leave an empty segment over {n} dates")
    return SampleSplit((0, a), (a, b), (b, n))


# --------------------------------------------------------------------- I/O


def write_pnl_csv(pnl: PnlSeries, dates, path):
    cum = pnl.cum_pnl
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "daily_pnl", "cum_pnl"])
        for d, p, c in zip(dates, pnl.daily_pnl, cum):
            w.writerow([d, repr(float(p)), repr(float(c))])


def report_json(rep: BacktestReport) -> str:
    return json.dumps(rep.to_dict(), sort_keys=True)
