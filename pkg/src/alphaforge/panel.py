"""Panel data: aligned date x symbol matrices, CSV ingest and synthetic data."""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np

from .errors import DuplicateRecord, EmptyInput, InvalidConfig, MalformedRow, UnknownField

MISSING = np.nan

LONG_HEADER = ["date", "symbol", "field", "value"]
WIDE_HEADER = ["date", "symbol", "open", "high", "low", "close", "volume"]


@dataclass(frozen=True)
class TradingCalendar:
    dates: tuple

    def __post_init__(self):
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise InvalidConfig("calendar dates must be strictly increasing")

    def __len__(self):
        return len(self.dates)

    def iso(self):
        return [d.isoformat() for d in self.dates]


@dataclass(frozen=True)
class PanelField:
    name: str
    values: np.ndarray  # read-only, NaN marks missing

    @property
    def shape(self):
        return self.values.shape


def _freeze(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PanelSet:
    calendar: TradingCalendar
    symbols: tuple
    fields: Mapping[str, np.ndarray]
    groups: Optional[Mapping[str, str]] = None
    _group_codes: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise InvalidConfig("duplicate symbols")
        shape = (len(self.calendar), len(self.symbols))
        frozen = {}
        for name, values in self.fields.items():
            values = _freeze(values)
            if values.shape != shape:
                raise InvalidConfig(f"field {name!r} has shape {values.shape}, expected {shape}")
            frozen[name] = values
        object.__setattr__(self, "fields", MappingProxyType(frozen))
        if self.groups is not None:
            groups = dict(self.groups)
            labels = sorted({groups[s] for s in self.symbols if s in groups})
            index = {g: i for i, g in enumerate(labels)}
            codes = np.array([index[groups[s]] if s in groups else -1 for s in self.symbols], dtype=np.int64)
            codes.setflags(write=False)
            object.__setattr__(self, "groups", MappingProxyType(groups))
            object.__setattr__(self, "_group_codes", codes)

    @property
    def shape(self):
        return (len(self.calendar), len(self.symbols))

    @property
    def field_names(self):
        return tuple(self.fields)

    @property
    def has_groups(self):
        return self._group_codes is not None

    @property
    def group_codes(self):
        """Integer group id per symbol column, -1 for unlabeled symbols."""
        return self._group_codes

    def with_fields(self, **extra):
        merged = dict(self.fields)
        merged.update(extra)
        return PanelSet(self.calendar, self.symbols, merged, self.groups)

    def with_groups(self, groups):
        return PanelSet(self.calendar, self.symbols, dict(self.fields), groups)

    def equals(self, other):
        if self.calendar != other.calendar or self.symbols != other.symbols:
            return False
        if set(self.fields) != set(other.fields):
            return False
        if (dict(self.groups) if self.groups else None) != (dict(other.groups) if other.groups else None):
            return False
        return all(
            np.array_equal(self.fields[k], other.fields[k], equal_nan=True) for k in self.fields
        )


def get_field(panel: PanelSet, name: str) -> PanelField:
    try:
        return PanelField(name, panel.fields[name])
    except KeyError:
        raise UnknownField(f"unknown field {name!r}; available: {sorted(panel.fields)}") from None


def simple_returns(close: np.ndarray) -> np.ndarray:
    out = np.full(close.shape, MISSING)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = close[1:] / close[:-1] - 1.0
    out[~np.isfinite(out)] = MISSING
    return out


def _parse_date(text, lineno):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise MalformedRow(f"line {lineno}: unparsable date {text!r}") from None


def _parse_value(text, lineno):
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na", "null"):
        return MISSING
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(f"line {lineno}: unparsable value {text!r}") from None
    if math.isinf(value):
        raise MalformedRow(f"line {lineno}: infinite value")
    return value


def _read_records(path, layout):
    """Yield (date, symbol, field, value) tuples from either CSV layout."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyInput(f"{path}: empty file")
        header = [h.strip().lower() for h in header]
        expected = LONG_HEADER if layout == "long" else WIDE_HEADER
        if header != expected:
            raise MalformedRow(f"{path}: header {header} does not match {layout} layout {expected}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected):
                raise MalformedRow(f"line {lineno}: expected {len(expected)} columns, got {len(row)}")
            date = _parse_date(row[0], lineno)
            symbol = row[1].strip()
            if not symbol:
                raise MalformedRow(f"line {lineno}: empty symbol")
            if layout == "long":
                name = row[2].strip()
                if not name:
                    raise MalformedRow(f"line {lineno}: empty field name")
                yield date, symbol, name, _parse_value(row[3], lineno)
            else:
                for name, text in zip(expected[2:], row[2:]):
                    yield date, symbol, name, _parse_value(text, lineno)


def ingest_csv(path, layout: str = "long", groups_path=None) -> PanelSet:
    """Load a long (``date,symbol,field,value``) or wide OHLCV CSV into a PanelSet.

    The calendar and symbol list are the sorted unions of what the file
    contains. Absent cells stay missing; nothing is filled.
    """
    if layout not in ("long", "wide_ohlcv"):
        raise InvalidConfig(f"unknown layout {layout!r}")
    path = Path(path)
    cells = {}
    for date, symbol, name, value in _read_records(path, layout):
        key = (date, symbol, name)
        if key in cells:
            raise DuplicateRecord(f"duplicate record for {date.isoformat()},{symbol},{name}")
        cells[key] = value
    if not cells:
        raise EmptyInput(f"{path}: no data rows")

    dates = sorted({k[0] for k in cells})
    symbols = sorted({k[1] for k in cells})
    names = sorted({k[2] for k in cells})
    di = {d: i for i, d in enumerate(dates)}
    si = {s: j for j, s in enumerate(symbols)}
    mats = {n: np.full((len(dates), len(symbols)), MISSING) for n in names}
    for (date, symbol, name), value in cells.items():
        mats[name][di[date], si[symbol]] = value
    if "close" in mats and "returns" not in mats:
        mats["returns"] = simple_returns(mats["close"])

    groups = read_groups(groups_path) if groups_path is not None else None
    return PanelSet(TradingCalendar(tuple(dates)), tuple(symbols), mats, groups)


def read_groups(path) -> dict:
    groups = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader, [])]
        if header != ["symbol", "group"]:
            raise MalformedRow(f"{path}: expected header symbol,group")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise MalformedRow(f"line {lineno}: expected 2 columns")
            symbol, group = row[0].strip(), row[1].strip()
            if symbol in groups:
                raise DuplicateRecord(f"duplicate group label for {symbol}")
            groups[symbol] = group
    return groups


def write_long_csv(panel: PanelSet, path, fields=None):
    """Inverse of ``ingest_csv(layout="long")``; missing cells are omitted."""
    names = sorted(fields or panel.fields)
    dates = panel.calendar.iso()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_HEADER)
        for name in names:
            values = panel.fields[name]
            for i, d in enumerate(dates):
                for j, s in enumerate(panel.symbols):
                    v = values[i, j]
                    if not np.isnan(v):
                        w.writerow([d, s, name, repr(float(v))])


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    n_symbols: int = 50
    n_days: int = 1500
    signal_strength: float = 0.3
    noise_vol: float = 0.02
    n_groups: int = 0
    start: str = "2016-01-04"

    def validate(self):
        if self.n_days < 30:
            raise InvalidConfig("n_days must be >= 30")
        if self.n_symbols < 3:
            raise InvalidConfig("n_symbols must be >= 3")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise InvalidConfig("signal_strength must lie in [0, 1]")
        if not self.noise_vol > 0:
            raise InvalidConfig("noise_vol must be > 0")
        if self.n_groups < 0:
            raise InvalidConfig("n_groups must be >= 0")


def business_days(start: str, n: int) -> tuple:
    days = np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")
    return tuple(d.astype(dt.date) for d in days)


def cs_zscore(x: np.ndarray) -> np.ndarray:
    """Cross-sectional z-score per row (sample std), NaN-aware."""
    mean = np.nanmean(x, axis=1, keepdims=True)
    std = np.nanstd(x, axis=1, ddof=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (x - mean) / std
    z[~np.isfinite(z)] = MISSING
    return z


def generate_synthetic(cfg: SyntheticConfig) -> PanelSet:
    """Random-walk universe with a planted predictive field ``sig``.

    ``returns[t+1] = strength * zscore(sig[t]) * vol + eps`` with
    ``eps ~ N(0, vol^2)``; everything is derived from ``cfg.seed``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, m = cfg.n_days, cfg.n_symbols
    sig = rng.standard_normal((n, m))
    eps = rng.standard_normal((n, m)) * cfg.noise_vol
    returns = np.full((n, m), MISSING)
    returns[1:] = cfg.signal_strength * cs_zscore(sig[:-1]) * cfg.noise_vol + eps[1:]

    close = np.empty((n, m))
    close[0] = 100.0 * np.exp(rng.normal(0.0, 0.5, m))
    close[1:] = close[0] * np.cumprod(1.0 + returns[1:], axis=0)
    volume = np.exp(rng.normal(13.0, 1.0, (n, m)))

    symbols = tuple(f"S{j:03d}" for j in range(m))
    groups = None
    if cfg.n_groups:
        groups = {s: f"G{j % cfg.n_groups}" for j, s in enumerate(symbols)}
    fields = {"close": close, "volume": volume, "returns": returns, "sig": sig}
    return PanelSet(TradingCalendar(business_days(cfg.start, n)), symbols, fields, groups)
