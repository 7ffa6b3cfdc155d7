"""Rolling-window and cross-sectional kernels.

Every kernel exists twice: a loop version compiled with numba (``*_loop``)
and a vectorized numpy version (``*_numpy``). The public names point at the
loop version unless numba is unavailable or ``ALPHAFORGE_NO_NUMBA=1``.

Arrays are (dates, symbols) float64 with NaN as the missing marker. Time
windows are trailing and include the current row; a window with any NaN
produces NaN.
"""
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from ._jit import USE_NUMBA, optional_njit

EPS_STD = 1e-12
SQRT252 = math.sqrt(252.0)

# unary rolling statistics
TS_MEAN, TS_STD, TS_SUM, TS_MIN, TS_MAX, TS_RANK, TS_ZSCORE, TS_SKEW, TS_KURT, \
    TS_ARGMAX, TS_ARGMIN, TS_IR, TS_SHARPE = range(13)

UNARY_CODES = {
    "ts_mean": TS_MEAN, "ts_std": TS_STD, "ts_sum": TS_SUM, "ts_min": TS_MIN,
    "ts_max": TS_MAX, "ts_rank": TS_RANK, "ts_zscore": TS_ZSCORE, "ts_skew": TS_SKEW,
    "ts_kurtosis": TS_KURT, "ts_arg_max": TS_ARGMAX, "ts_arg_min": TS_ARGMIN,
    "ts_ir": TS_IR, "ts_sharpe": TS_SHARPE,
}

# binary rolling statistics
TS_CORR, TS_COV, TS_COSKEW, TS_COKURT, TS_REG, TS_REGRES, TS_BETA = range(7)

BINARY_CODES = {
    "ts_corr": TS_CORR, "ts_cov": TS_COV, "ts_co_skewness": TS_COSKEW,
    "ts_co_kurtosis": TS_COKURT, "ts_regression": TS_REG,
    "ts_regression_res": TS_REGRES, "ts_beta": TS_BETA,
}


# ------------------------------------------------------------- loop kernels


@optional_njit
def _window_stat(win, code):
    w = win.shape[0]
    if code == TS_SUM:
        s = 0.0
        for v in win:
            s += v
        return s
    if code == TS_MIN:
        m = win[0]
        for v in win:
            if v < m:
                m = v
        return m
    if code == TS_MAX:
        m = win[0]
        for v in win:
            if v > m:
                m = v
        return m
    if code == TS_ARGMAX or code == TS_ARGMIN:
        best = w - 1
        for k in range(w - 2, -1, -1):
            if code == TS_ARGMAX:
                if win[k] > win[best]:
                    best = k
            elif win[k] < win[best]:
                best = k
        return float(w - 1 - best)
    if code == TS_RANK:
        today = win[w - 1]
        less = 0
        eq = 0
        for v in win:
            if v < today:
                less += 1
            elif v == today:
                eq += 1
        return (less + (eq - 1) / 2.0) / (w - 1)
    s = 0.0
    for v in win:
        s += v
    mean = s / w
    if code == TS_MEAN:
        return mean
    ss = 0.0
    if code == TS_SKEW or code == TS_KURT:
        s3 = 0.0
        s4 = 0.0
        for v in win:
            d = v - mean
            d2 = d * d
            ss += d2
            s3 += d2 * d
            s4 += d2 * d2
        m2 = ss / w
        if math.sqrt(m2) < EPS_STD:
            return np.nan
        if code == TS_SKEW:
            return (s3 / w) / m2 ** 1.5
        return (s4 / w) / (m2 * m2) - 3.0
    for v in win:
        d = v - mean
        ss += d * d
    std = math.sqrt(ss / (w - 1))
    if code == TS_STD:
        return std
    if std < EPS_STD:
        return np.nan
    if code == TS_ZSCORE:
        return (win[w - 1] - mean) / std
    if code == TS_IR:
        return mean / std
    return SQRT252 * mean / std  # TS_SHARPE


@optional_njit
def ts_unary_loop(x, window, code):
    n, m = x.shape
    out = np.full((n, m), np.nan)
    for j in range(m):
        bad = 0  # NaNs inside the current window
        for t in range(n):
            if np.isnan(x[t, j]):
                bad += 1
            if t >= window and np.isnan(x[t - window, j]):
                bad -= 1
            if t >= window - 1 and bad == 0:
                out[t, j] = _window_stat(x[t - window + 1:t + 1, j], code)
    return out


@optional_njit
def _pair_stat(wx, wy, code):
    w = wx.shape[0]
    sx = 0.0
    sy = 0.0
    for k in range(w):
        sx += wx[k]
        sy += wy[k]
    mx = sx / w
    my = sy / w
    sxx = 0.0
    syy = 0.0
    sxy = 0.0
    for k in range(w):
        dx = wx[k] - mx
        dy = wy[k] - my
        sxx += dx * dx
        syy += dy * dy
        sxy += dx * dy
    if code == TS_COV:
        return sxy / (w - 1)
    std_x = math.sqrt(sxx / (w - 1))
    std_y = math.sqrt(syy / (w - 1))
    if code == TS_CORR:
        if std_x < EPS_STD or std_y < EPS_STD:
            return np.nan
        return sxy / math.sqrt(sxx * syy)
    if code == TS_BETA:
        if std_y < EPS_STD:
            return np.nan
        return sxy / syy
    if code == TS_REG or code == TS_REGRES:
        # wx is the dependent series, wy the regressor
        if std_y < EPS_STD:
            return np.nan
        beta = sxy / syy
        fitted = (mx - beta * my) + beta * wy[w - 1]
        if code == TS_REG:
            return fitted
        return wx[w - 1] - fitted
    if std_x < EPS_STD or std_y < EPS_STD:
        return np.nan
    sig_x = math.sqrt(sxx / w)
    sig_y = math.sqrt(syy / w)
    acc = 0.0
    for k in range(w):
        dx = wx[k] - mx
        dy = wy[k] - my
        if code == TS_COSKEW:
            acc += dx * dy * dy
        else:
            acc += dx * dy * dy * dy
    if code == TS_COSKEW:
        return (acc / w) / (sig_x * sig_y * sig_y)
    return (acc / w) / (sig_x * sig_y * sig_y * sig_y)


@optional_njit
def ts_binary_loop(x, y, window, code):
    n, m = x.shape
    out = np.full((n, m), np.nan)
    for j in range(m):
        bad = 0
        for t in range(n):
            if np.isnan(x[t, j]) or np.isnan(y[t, j]):
                bad += 1
            if t >= window and (np.isnan(x[t - window, j]) or np.isnan(y[t - window, j])):
                bad -= 1
            if t >= window - 1 and bad == 0:
                out[t, j] = _pair_stat(x[t - window + 1:t + 1, j], y[t - window + 1:t + 1, j], code)
    return out


@optional_njit
def ts_macd_loop(x, fast, slow):
    n, m = x.shape
    span = max(fast, slow)
    af = 2.0 / (fast + 1.0)
    aslow = 2.0 / (slow + 1.0)
    out = np.full((n, m), np.nan)
    for j in range(m):
        for t in range(span - 1, n):
            ok = True
            for k in range(t - span + 1, t + 1):
                if np.isnan(x[k, j]):
                    ok = False
                    break
            if not ok:
                continue
            ef = x[t - span + 1, j]
            es = ef
            for k in range(t - span + 2, t + 1):
                ef = af * x[k, j] + (1.0 - af) * ef
                es = aslow * x[k, j] + (1.0 - aslow) * es
            out[t, j] = ef - es
    return out


@optional_njit
def ta_rsi_loop(x, window):
    n, m = x.shape
    out = np.full((n, m), np.nan)
    for j in range(m):
        for t in range(window, n):
            ok = True
            for k in range(t - window, t + 1):
                if np.isnan(x[k, j]):
                    ok = False
                    break
            if not ok:
                continue
            gain = 0.0
            loss = 0.0
            for k in range(t - window + 1, t + 1):
                d = x[k, j] - x[k - 1, j]
                if d > 0:
                    gain += d
                else:
                    loss -= d
            out[t, j] = _rsi(gain / window, loss / window)
    return out


@optional_njit
def _rsi(avg_gain, avg_loss):
    if avg_loss == 0.0:
        return 100.0 if avg_gain > 0.0 else 50.0
    return 100.0 - 100.0 / (1.0 + avg_gain / avg_loss)


@optional_njit
def cs_rank_loop(x):
    """Row-wise average rank scaled to [0, 1]; a lone value ranks 0.5."""
    n, m = x.shape
    out = np.full((n, m), np.nan)
    vals = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    for t in range(n):
        # insertion sort of the present values; rows are short
        c = 0
        for j in range(m):
            v = x[t, j]
            if np.isnan(v):
                continue
            k = c
            while k > 0 and vals[k - 1] > v:
                vals[k] = vals[k - 1]
                idx[k] = idx[k - 1]
                k -= 1
            vals[k] = v
            idx[k] = j
            c += 1
        if c == 0:
            continue
        if c == 1:
            out[t, idx[0]] = 0.5
            continue
        k = 0
        while k < c:
            e = k
            while e + 1 < c and vals[e + 1] == vals[k]:
                e += 1
            r = (k + e) / 2.0 / (c - 1)  # average zero-based rank over the tie block
            for q in range(k, e + 1):
                out[t, idx[q]] = r
            k = e + 1
    return out


# ------------------------------------------------------------ numpy kernels


def _windows(x, window):
    """(n - window + 1, m, window) view plus a validity mask."""
    v = sliding_window_view(x, window, axis=0)
    ok = ~np.isnan(v).any(axis=2)
    return v, ok


def _place(n, m, window, values, ok, offset=None):
    out = np.full((n, m), np.nan)
    offset = window - 1 if offset is None else offset
    values = np.where(ok, values, np.nan)
    out[offset:] = values
    return out


def ts_unary_numpy(x, window, code):
    n, m = x.shape
    if n < window:
        return np.full((n, m), np.nan)
    v, ok = _windows(x, window)
    with np.errstate(all="ignore"):
        if code == TS_SUM:
            r = v.sum(axis=2)
        elif code == TS_MIN:
            r = v.min(axis=2)
        elif code == TS_MAX:
            r = v.max(axis=2)
        elif code in (TS_ARGMAX, TS_ARGMIN):
            rev = v[..., ::-1]  # newest first, so argmax picks the most recent tie
            r = (rev.argmax(axis=2) if code == TS_ARGMAX else rev.argmin(axis=2)).astype(float)
        elif code == TS_RANK:
            today = v[..., -1:]
            less = (v < today).sum(axis=2)
            eq = (v == today).sum(axis=2)
            r = (less + (eq - 1) / 2.0) / (window - 1)
        else:
            mean = v.mean(axis=2)
            d = v - mean[..., None]
            ss = (d * d).sum(axis=2)
            if code == TS_MEAN:
                r = mean
            elif code in (TS_SKEW, TS_KURT):
                m2 = ss / window
                if code == TS_SKEW:
                    r = ((d * d * d).sum(axis=2) / window) / m2**1.5
                else:
                    r = (((d * d) * (d * d)).sum(axis=2) / window) / (m2 * m2) - 3.0
                r = np.where(np.sqrt(m2) < EPS_STD, np.nan, r)
            else:
                std = np.sqrt(ss / (window - 1))
                if code == TS_STD:
                    r = std
                else:
                    if code == TS_ZSCORE:
                        r = (v[..., -1] - mean) / std
                    elif code == TS_IR:
                        r = mean / std
                    else:
                        r = SQRT252 * mean / std
                    r = np.where(std < EPS_STD, np.nan, r)
    return _place(n, m, window, r, ok)


def ts_binary_numpy(x, y, window, code):
    n, m = x.shape
    if n < window:
        return np.full((n, m), np.nan)
    vx, okx = _windows(x, window)
    vy, oky = _windows(y, window)
    ok = okx & oky
    with np.errstate(all="ignore"):
        mx = vx.mean(axis=2)
        my = vy.mean(axis=2)
        dx = vx - mx[..., None]
        dy = vy - my[..., None]
        sxx = (dx * dx).sum(axis=2)
        syy = (dy * dy).sum(axis=2)
        sxy = (dx * dy).sum(axis=2)
        std_x = np.sqrt(sxx / (window - 1))
        std_y = np.sqrt(syy / (window - 1))
        if code == TS_COV:
            r = sxy / (window - 1)
        elif code == TS_CORR:
            r = np.where((std_x < EPS_STD) | (std_y < EPS_STD), np.nan, sxy / np.sqrt(sxx * syy))
        elif code == TS_BETA:
            r = np.where(std_y < EPS_STD, np.nan, sxy / syy)
        elif code in (TS_REG, TS_REGRES):
            beta = sxy / syy
            fitted = (mx - beta * my) + beta * vy[..., -1]
            r = fitted if code == TS_REG else vx[..., -1] - fitted
            r = np.where(std_y < EPS_STD, np.nan, r)
        else:
            sig_x = np.sqrt(sxx / window)
            sig_y = np.sqrt(syy / window)
            if code == TS_COSKEW:
                r = (dx * dy * dy).sum(axis=2) / window / (sig_x * sig_y * sig_y)
            else:
                r = (dx * dy * dy * dy).sum(axis=2) / window / (sig_x * sig_y * sig_y * sig_y)
            r = np.where((std_x < EPS_STD) | (std_y < EPS_STD), np.nan, r)
    return _place(n, m, window, r, ok)


def ts_macd_numpy(x, fast, slow):
    n, m = x.shape
    span = max(fast, slow)
    if n < span:
        return np.full((n, m), np.nan)
    v, ok = _windows(x, span)
    af, aslow = 2.0 / (fast + 1.0), 2.0 / (slow + 1.0)
    ef = v[..., 0].copy()
    es = ef.copy()
    for k in range(1, span):
        ef = af * v[..., k] + (1.0 - af) * ef
        es = aslow * v[..., k] + (1.0 - aslow) * es
    return _place(n, m, span, ef - es, ok)


def ta_rsi_numpy(x, window):
    n, m = x.shape
    if n < window + 1:
        return np.full((n, m), np.nan)
    v, ok = _windows(x, window + 1)
    d = np.diff(v, axis=2)
    gain = np.where(d > 0, d, 0.0).sum(axis=2) / window
    loss = np.where(d > 0, 0.0, -d).sum(axis=2) / window
    with np.errstate(all="ignore"):
        r = 100.0 - 100.0 / (1.0 + gain / loss)
    r = np.where(loss == 0.0, np.where(gain > 0.0, 100.0, 50.0), r)
    return _place(n, m, window + 1, r, ok)


def cs_rank_numpy(x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] == 0:
        return x.copy()
    r = rankdata(x, method="average", axis=1, nan_policy="omit")
    n = (~np.isnan(x)).sum(axis=1, keepdims=True).astype(float)
    with np.errstate(all="ignore"):
        out = (r - 1.0) / (n - 1.0)
    out = np.where(n == 1, 0.5, out)
    return np.where(np.isnan(x), np.nan, out)


# ------------------------------------------------------------------ dispatch

if USE_NUMBA:
    ts_unary, ts_binary, ts_macd, ta_rsi, cs_rank = (
        ts_unary_loop, ts_binary_loop, ts_macd_loop, ta_rsi_loop, cs_rank_loop)
else:
    ts_unary, ts_binary, ts_macd, ta_rsi, cs_rank = (
        ts_unary_numpy, ts_binary_numpy, ts_macd_numpy, ta_rsi_numpy, cs_rank_numpy)


def ts_delay(x, window):
    out = np.full(x.shape, np.nan)
    out[window:] = x[:-window]
    return out


def ts_delta(x, window):
    return x - ts_delay(x, window)
