"""Brute-force reference evaluator.

Re-derives every output cell from scratch with plain Python arithmetic on
lists. It shares nothing with the vectorized evaluator and exists to check
it; expect it to be several orders of magnitude slower.
"""
import math

import numpy as np

from .lang import CATALOG, Const, Field

NAN = float("nan")
EPS = 1e-12


def _isnan(v):
    return v != v


def _mean(xs):
    return sum(xs) / len(xs)


def _frac_rank(values, target):
    """Average rank of ``target`` among ``values`` scaled to [0, 1]."""
    n = len(values)
    if n == 1:
        return 0.5
    below = sum(1 for v in values if v < target)
    ties = sum(1 for v in values if v == target)
    return (below + (ties - 1) / 2) / (n - 1)


# -------------------------------------------------------------- time series


def _ts_stat(op, win):
    w = len(win)
    if op == "ts_sum":
        return sum(win)
    if op == "ts_min":
        return min(win)
    if op == "ts_max":
        return max(win)
    if op in ("ts_arg_max", "ts_arg_min"):
        target = max(win) if op == "ts_arg_max" else min(win)
        for lag in range(w):
            if win[w - 1 - lag] == target:
                return float(lag)
    if op == "ts_rank":
        return _frac_rank(win, win[-1])
    mu = _mean(win)
    dev = [v - mu for v in win]
    if op == "ts_mean":
        return mu
    if op in ("ts_skew", "ts_kurtosis"):
        m2 = sum(d * d for d in dev) / w
        if math.sqrt(m2) < EPS:
            return NAN
        if op == "ts_skew":
            return (sum(d * d * d for d in dev) / w) / m2 ** 1.5
        return (sum(d * d * d * d for d in dev) / w) / (m2 * m2) - 3.0
    sd = math.sqrt(sum(d * d for d in dev) / (w - 1))
    if op == "ts_std":
        return sd
    if sd < EPS:
        return NAN
    if op == "ts_zscore":
        return (win[-1] - mu) / sd
    if op == "ts_ir":
        return mu / sd
    if op == "ts_sharpe":
        return math.sqrt(252.0) * mu / sd
    raise KeyError(op)


def _ts_pair(op, xs, ys):
    w = len(xs)
    mx, my = _mean(xs), _mean(ys)
    dx = [v - mx for v in xs]
    dy = [v - my for v in ys]
    sxx = sum(a * a for a in dx)
    syy = sum(b * b for b in dy)
    sxy = sum(a * b for a, b in zip(dx, dy))
    sdx = math.sqrt(sxx / (w - 1))
    sdy = math.sqrt(syy / (w - 1))
    if op == "ts_cov":
        return sxy / (w - 1)
    if op == "ts_corr":
        return NAN if sdx < EPS or sdy < EPS else sxy / math.sqrt(sxx * syy)
    if op == "ts_beta":
        return NAN if sdy < EPS else sxy / syy
    if op in ("ts_regression", "ts_regression_res"):
        # regress xs (dependent) on ys
        if sdy < EPS:
            return NAN
        slope = sxy / syy
        fit = (mx - slope * my) + slope * ys[-1]
        return fit if op == "ts_regression" else xs[-1] - fit
    if sdx < EPS or sdy < EPS:
        return NAN
    px, py = math.sqrt(sxx / w), math.sqrt(syy / w)
    if op == "ts_co_skewness":
        return (sum(a * b * b for a, b in zip(dx, dy)) / w) / (px * py * py)
    return (sum(a * b * b * b for a, b in zip(dx, dy)) / w) / (px * py * py * py)


def _ema(vals, span):
    alpha = 2.0 / (span + 1.0)
    e = vals[0]
    for v in vals[1:]:
        e = alpha * v + (1.0 - alpha) * e
    return e


# ---------------------------------------------------------- cross sections


def _cs(op, row, q=None):
    """Cross-sectional op over one date's row (list, NaN = missing)."""
    present = [v for v in row if not _isnan(v)]
    out = [NAN] * len(row)
    if not present:
        return out
    n = len(present)
    mu = sum(present) / n
    for j, v in enumerate(row):
        if _isnan(v):
            continue
        if op == "rank":
            out[j] = _frac_rank(present, v)
        elif op == "quantile":
            out[j] = float(min(math.floor(_frac_rank(present, v) * q), q - 1))
        elif op == "demean":
            out[j] = v - mu
        elif op == "mean":
            out[j] = mu
        elif op == "normalize":
            gross = sum(abs(p) for p in present)
            out[j] = 0.0 if gross == 0 else v / gross
        elif op == "zscore":
            if n < 2:
                continue
            sd = math.sqrt(sum((p - mu) ** 2 for p in present) / (n - 1))
            if sd >= EPS:
                out[j] = (v - mu) / sd
    return out


# ------------------------------------------------------------ per-cell ops


def _point(op, vals, params):
    """Element-wise operators; ``vals`` are the child values at one cell."""
    if any(_isnan(v) for v in vals):
        if op != "if_else" or _isnan(vals[0]):
            return NAN
    x = vals[0]
    try:
        if op == "add":
            return x + vals[1]
        if op == "subtract":
            return x - vals[1]
        if op == "multiply":
            return x * vals[1]
        if op == "divide":
            return NAN if vals[1] == 0 else x / vals[1]
        if op == "power":
            r = x ** vals[1]
            return NAN if isinstance(r, complex) else r
        if op == "min":
            return min(x, vals[1])
        if op == "max":
            return max(x, vals[1])
        if op == "neg":
            return -x
        if op == "abs":
            return abs(x)
        if op == "sign":
            return float((x > 0) - (x < 0))
        if op == "log":
            return math.log(x) if x > 0 else NAN
        if op == "sqrt":
            return math.sqrt(x) if x >= 0 else NAN
        if op == "inverse":
            return NAN if x == 0 else 1.0 / x
        if op == "sin":
            return math.sin(x)
        if op == "cos":
            return math.cos(x)
        if op == "tail":
            lo, hi, v = params
            return float(v) if lo < x < hi else x
        if op == "and":
            return float(x != 0 and vals[1] != 0)
        if op == "or":
            return float(x != 0 or vals[1] != 0)
        if op == "not":
            return float(x == 0)
        if op == "equal":
            return float(x == vals[1])
        if op == "less":
            return float(x < vals[1])
        if op == "greater":
            return float(x > vals[1])
        if op == "if_else":
            return vals[1] if x != 0 else vals[2]
    except (OverflowError, ZeroDivisionError, ValueError):
        return NAN
    raise KeyError(op)


def _clean(v):
    if isinstance(v, complex) or _isnan(v) or math.isinf(v):
        return NAN
    return float(v)


def _ref(node, panel, n, m):
    if isinstance(node, Field):
        src = panel.fields[node.name]
        return [[float(src[t, j]) for j in range(m)] for t in range(n)]
    sig = CATALOG[node.op]
    kids, params = [], []
    for slot, a in zip(sig.slots, node.args):
        if isinstance(a, Const):
            if slot == "v":
                kids.append([[float(a.value)] * m for _ in range(n)])
            else:
                params.append(a.value)
        else:
            kids.append(_ref(a, panel, n, m))
    op = node.op
    out = [[NAN] * m for _ in range(n)]

    if sig.category in ("horizontal", "group"):
        x = kids[0]
        base = {"group_rank": "rank", "group_mean": "mean", "group_zscore": "zscore"}.get(op, op)
        q = params[0] if params else None
        for t in range(n):
            if sig.category == "group":
                labels = panel.groups
                for j, s in enumerate(panel.symbols):
                    if s not in labels:
                        continue
                    members = [k for k, s2 in enumerate(panel.symbols) if labels.get(s2) == labels[s]]
                    row = _cs(base, [x[t][k] for k in members])
                    out[t][j] = row[members.index(j)]
            else:
                out[t] = _cs(base, x[t], q)
        return out

    for t in range(n):
        for j in range(m):
            if op in ("ts_delay", "ts_delta"):
                w = params[0]
                if t - w < 0:
                    continue
                past = kids[0][t - w][j]
                val = past if op == "ts_delay" else kids[0][t][j] - past
            elif op == "ts_macd":
                fast, slow = params
                span = max(fast, slow)
                if t - span + 1 < 0:
                    continue
                win = [kids[0][k][j] for k in range(t - span + 1, t + 1)]
                if any(_isnan(v) for v in win):
                    continue
                val = _ema(win, fast) - _ema(win, slow)
            elif op == "ta_rsi":
                w = params[0]
                if t - w < 0:
                    continue
                win = [kids[0][k][j] for k in range(t - w, t + 1)]
                if any(_isnan(v) for v in win):
                    continue
                ups = [b - a for a, b in zip(win, win[1:]) if b > a]
                downs = [a - b for a, b in zip(win, win[1:]) if b <= a]
                g, l_ = sum(ups) / w, sum(downs) / w
                if l_ == 0:
                    val = 100.0 if g > 0 else 50.0
                else:
                    val = 100.0 - 100.0 / (1.0 + g / l_)
            elif sig.slots.endswith("w") and op.startswith("ts_"):
                w = params[-1]
                if t - w + 1 < 0:
                    continue
                wins = [[k[s][j] for s in range(t - w + 1, t + 1)] for k in kids]
                if any(_isnan(v) for win in wins for v in win):
                    continue
                val = _ts_stat(op, wins[0]) if len(wins) == 1 else _ts_pair(op, wins[0], wins[1])
            else:
                val = _point(op, [k[t][j] for k in kids], params)
            out[t][j] = _clean(val)
    return out


def reference_evaluate(expr, panel) -> np.ndarray:
    """Evaluate ``expr`` cell by cell; the independent oracle for ``evaluate``."""
    n, m = panel.shape
    return np.array(_ref(expr, panel, n, m), dtype=np.float64).reshape(n, m)
