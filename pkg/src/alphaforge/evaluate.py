"""Vectorized expression evaluation over a PanelSet."""
from __future__ import annotations

import csv

import numpy as np

from . import kernels as K
from .lang import CATALOG, Const, Field, PanelSchema, to_text, validate
from .errors import ExprError

EPS_STD = K.EPS_STD


def _finite(a):
    a = np.asarray(a, dtype=np.float64)
    if not np.isfinite(a).all():
        a = np.where(np.isfinite(a), a, np.nan)
    return a


# ---------------------------------------------------------- cross-sectional


def _row_mean(x):
    n = (~np.isnan(x)).sum(axis=1, keepdims=True)
    with np.errstate(all="ignore"):
        return np.nansum(x, axis=1, keepdims=True) / n


def cs_zscore(x):
    n = (~np.isnan(x)).sum(axis=1, keepdims=True)
    with np.errstate(all="ignore"):
        mean = _row_mean(x)
        std = np.sqrt(np.nansum((x - mean) ** 2, axis=1, keepdims=True) / (n - 1))
        out = (x - mean) / std
    return np.where((n < 2) | ~(std >= EPS_STD), np.nan, out)


def cs_demean(x):
    with np.errstate(all="ignore"):
        return x - _row_mean(x)


def cs_normalize(x):
    s = np.nansum(np.abs(x), axis=1, keepdims=True)
    with np.errstate(all="ignore"):
        out = np.where(s == 0.0, 0.0, x / s)
    return np.where(np.isnan(x), np.nan, out)


def cs_quantile(x, q):
    r = K.cs_rank(x)
    return np.where(np.isnan(r), np.nan, np.minimum(np.floor(r * q), q - 1))


def grouped(fn, x, codes):
    """Apply a cross-sectional function separately within each group label."""
    out = np.full(x.shape, np.nan)
    for g in np.unique(codes[codes >= 0]):
        cols = np.flatnonzero(codes == g)
        out[:, cols] = fn(x[:, cols])
    return out


def cs_mean_broadcast(x):
    m = _row_mean(x)
    return np.where(np.isnan(x), np.nan, np.broadcast_to(m, x.shape))


# ------------------------------------------------------------------ logical


def _truth(a):
    return a != 0.0


def _bool(mask, *inputs):
    out = mask.astype(np.float64)
    for a in inputs:
        out[np.isnan(a)] = np.nan
    return out


# ------------------------------------------------------------------ dispatch


def _apply(op, args, panel):
    """Evaluate one operator given already evaluated child matrices / ints."""
    x = args[0]
    if op == "add":
        return x + args[1]
    if op == "subtract":
        return x - args[1]
    if op == "multiply":
        return x * args[1]
    if op == "divide":
        y = args[1]
        return np.where(y == 0.0, np.nan, x / np.where(y == 0.0, 1.0, y))
    if op == "power":
        y = args[1]
        return np.where(np.isnan(x) | np.isnan(y), np.nan, np.power(x, y))
    if op == "min":
        return np.minimum(x, args[1])
    if op == "max":
        return np.maximum(x, args[1])
    if op == "neg":
        return -x
    if op == "abs":
        return np.abs(x)
    if op == "sign":
        return np.sign(x)
    if op == "log":
        return np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), np.nan)
    if op == "sqrt":
        return np.where(x >= 0, np.sqrt(np.where(x >= 0, x, 0.0)), np.nan)
    if op == "inverse":
        return np.where(x == 0.0, np.nan, 1.0 / np.where(x == 0.0, 1.0, x))
    if op == "sin":
        return np.sin(x)
    if op == "cos":
        return np.cos(x)
    if op == "tail":
        lo, hi, v = args[1:]
        return np.where((x > lo) & (x < hi), float(v), x)

    if op == "rank":
        return K.cs_rank(x)
    if op == "zscore":
        return cs_zscore(x)
    if op == "demean":
        return cs_demean(x)
    if op == "normalize":
        return cs_normalize(x)
    if op == "quantile":
        return cs_quantile(x, args[1])
    if op.startswith("group_"):
        fn = {"group_rank": K.cs_rank, "group_mean": cs_mean_broadcast, "group_zscore": cs_zscore}[op]
        return grouped(fn, x, panel.group_codes)

    if op == "and":
        return _bool(_truth(x) & _truth(args[1]), x, args[1])
    if op == "or":
        return _bool(_truth(x) | _truth(args[1]), x, args[1])
    if op == "not":
        return _bool(~_truth(x), x)
    if op == "equal":
        return _bool(x == args[1], x, args[1])
    if op == "less":
        return _bool(x < args[1], x, args[1])
    if op == "greater":
        return _bool(x > args[1], x, args[1])
    if op == "if_else":
        a, b = args[1], args[2]
        out = np.where(_truth(x), a, b)
        return np.where(np.isnan(x), np.nan, out)

    if op in K.UNARY_CODES:
        return K.ts_unary(np.ascontiguousarray(x), args[1], K.UNARY_CODES[op])
    if op in K.BINARY_CODES:
        return K.ts_binary(np.ascontiguousarray(x), np.ascontiguousarray(args[1]), args[2], K.BINARY_CODES[op])
    if op == "ts_delay":
        return K.ts_delay(x, args[1])
    if op == "ts_delta":
        return K.ts_delta(x, args[1])
    if op == "ts_macd":
        return K.ts_macd(np.ascontiguousarray(x), args[1], args[2])
    if op == "ta_rsi":
        return K.ta_rsi(np.ascontiguousarray(x), args[1])
    raise ExprError(f"no evaluator for operator {op!r}")


def _eval(node, panel, memo):
    if isinstance(node, Field):
        return panel.fields[node.name]
    hit = memo.get(node)
    if hit is not None:
        return hit
    sig = CATALOG[node.op]
    args = []
    for slot, a in zip(sig.slots, node.args):
        if isinstance(a, Const):
            if slot == "v":
                args.append(np.full(panel.shape, float(a.value)))
            else:
                args.append(a.value)
        else:
            args.append(_eval(a, panel, memo))
    with np.errstate(all="ignore"):
        out = _finite(_apply(node.op, args, panel))
    memo[node] = out
    return out


def evaluate(expr, panel, check: bool = True) -> np.ndarray:
    """Signal matrix (dates x symbols, NaN = missing) for ``expr`` over ``panel``."""
    if check:
        diags = validate(expr, PanelSchema.of(panel))
        if diags:
            raise ExprError(f"invalid expression {to_text(expr)!r}: " + "; ".join(d.message for d in diags))
    out = _eval(expr, panel, {})
    if out is panel.fields.get(getattr(expr, "name", None)):
        out = out.copy()
    return out


def write_signal_csv(signal, panel, path):
    dates = panel.calendar.iso()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "symbol", "value"])
        for i, d in enumerate(dates):
            for j, s in enumerate(panel.symbols):
                v = signal[i, j]
                if not np.isnan(v):
                    w.writerow([d, s, repr(float(v))])
