"""Capital allocation across alpha books.

Per-alpha statistics feed eleven score-based weighting schemes, three
baselines and a stochastic mean-variance hill climber. Weights live on the
non-negative simplex; each alpha is a dollar-neutral book and the combined
portfolio is the weighted sum of books rescaled to unit gross exposure.
"""
from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .backtest import ANNUALIZATION, max_drawdown, report, simulate
from .errors import (CalendarMismatch, InfeasibleCardinality, InvalidConfig, NoConvergence, ShapeMismatch,
                     ZeroVolatilityAsset)
from .seeds import derive_seed

SCHEMES = (
    "ir_exp_turnover", "inv_avg_corr", "inv_volatility", "sigmoid_momentum", "ls_balance", "zscore_gate",
    "pos_expected_pnl", "composite", "ir_long_short_mean", "inv_drawdown", "rank_aggregate",
)
BASELINES = ("equal", "inverse_volatility", "risk_parity")
IR_CAP = 10.0
MOMENTUM_WINDOW = 63
ZSCORE_WINDOW = 21


@dataclass(frozen=True)
class AlphaStats:
    ir: float
    volatility: float
    turnover: float
    avg_corr: float
    momentum: float
    drawdown: float
    expected_pnl: float
    long_short_ratio: float
    zscore: float
    ir_long: float
    ir_short: float
    rank_sharpe: float = 0.5
    rank_pnl: float = 0.5
    rank_turnover: float = 0.5

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class MvoInputs:
    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mu.size, mu.size):
            raise ShapeMismatch(f"covariance {cov.shape} does not match {mu.size} means")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise InvalidConfig("covariance must be symmetric")
        if (np.diag(cov) < 0).any():
            raise InvalidConfig("covariance diagonal must be >= 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_pnls(cls, daily_pnls):
        P = np.column_stack([np.asarray(p, dtype=float) for p in daily_pnls])
        return cls(P.mean(axis=0), np.atleast_2d(np.cov(P, rowvar=False, ddof=1)))


# ------------------------------------------------------------------ stats


def capped_sharpe(daily) -> float:
    """Annualized sharpe; a zero-variance stream scores +-IR_CAP by the sign of its mean."""
    daily = np.asarray(daily, dtype=float)
    if daily.size == 0:
        return 0.0
    mean = daily.mean()
    sd = daily.std(ddof=1) if daily.size > 1 else 0.0
    if sd < 1e-12:
        return float(np.sign(mean) * IR_CAP) if abs(mean) > 0 else 0.0
    return float(np.clip(math.sqrt(ANNUALIZATION) * mean / sd, -IR_CAP * 1e6, IR_CAP * 1e6))


def frac_rank(values) -> np.ndarray:
    """Average-tie fractional ranks in [0, 1]; a single value ranks 0.5."""
    from scipy.stats import rankdata

    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return np.array([0.5])
    return (rankdata(v, method="average") - 1.0) / (v.size - 1)


def leg_pnls(weights, returns):
    """Daily PnL of the long and short legs of a book (held at t-1, earning at t)."""
    w = np.nan_to_num(np.asarray(weights, dtype=float))
    r = np.nan_to_num(np.asarray(returns, dtype=float))
    prev = np.vstack([np.zeros((1, w.shape[1])), w[:-1]])
    contrib = prev * r
    return np.where(prev > 0, contrib, 0.0).sum(axis=1), np.where(prev < 0, contrib, 0.0).sum(axis=1)


def long_short_ratio(weights) -> float:
    w = np.nan_to_num(np.asarray(weights, dtype=float))
    gross = np.abs(w).sum(axis=1)
    live = gross > 1e-12
    if not live.any():
        return 0.5
    return float((np.where(w > 0, w, 0.0).sum(axis=1)[live] / gross[live]).mean())


def _single_stats(pnl, book, returns, rows):
    start, stop = rows
    daily = np.asarray(pnl.daily_pnl, dtype=float)
    sd = daily.std(ddof=1) if daily.size > 1 else 0.0
    sd = sd if sd >= 1e-12 else 0.0
    tail = daily[-MOMENTUM_WINDOW:]
    tail_sd = tail.std(ddof=1) if tail.size > 1 else 0.0
    momentum = float(tail.mean() / tail_sd) if tail_sd >= 1e-12 else 0.0
    recent = daily[-ZSCORE_WINDOW:]
    zscore = float((recent.mean() - daily.mean()) / (sd / math.sqrt(ZSCORE_WINDOW))) if sd >= 1e-12 else 0.0
    long_leg, short_leg = leg_pnls(book, returns)
    return dict(
        ir=capped_sharpe(daily),
        volatility=float(math.sqrt(ANNUALIZATION) * sd),
        turnover=float(np.mean(pnl.turnover)) if len(pnl.turnover) else 0.0,
        momentum=momentum,
        drawdown=max_drawdown(np.cumsum(daily)),
        expected_pnl=float(ANNUALIZATION * daily.mean()) if daily.size else 0.0,
        long_short_ratio=long_short_ratio(np.asarray(book)[max(start - 1, 0):stop - 1] if stop > start else book),
        zscore=zscore,
        ir_long=capped_sharpe(long_leg[start:stop]),
        ir_short=capped_sharpe(short_leg[start:stop]),
    )


def average_correlation(daily_pnls) -> np.ndarray:
    """Mean pairwise correlation of each stream against all others (0 for flat streams)."""
    P = np.column_stack([np.asarray(p, dtype=float) for p in daily_pnls])
    k = P.shape[1]
    if k < 2:
        return np.zeros(k)
    D = P - P.mean(axis=0)
    norms = np.sqrt((D * D).sum(axis=0))
    live = norms >= 1e-12
    C = np.zeros((k, k))
    denom = np.outer(norms, norms)
    mask = np.outer(live, live)
    C[mask] = (D.T @ D)[mask] / denom[mask]
    np.fill_diagonal(C, 0.0)
    return C.sum(axis=1) / (k - 1)


def compute_alpha_stats(pnls, weight_books, returns, rows=None) -> list:
    """Per-alpha statistics over ``rows`` of the full-calendar books.

    ``pnls`` are the alphas' PnlSeries already restricted to ``rows``;
    ``weight_books`` and ``returns`` cover the full calendar, so legs and
    long/short ratios use the positions held into each date of the range.
    """
    if not pnls:
        raise InvalidConfig("no alphas")
    if len(pnls) != len(weight_books):
        raise ShapeMismatch("one book per PnL series")
    n = len(pnls[0])
    if any(len(p) != n for p in pnls):
        raise CalendarMismatch("PnL series have different lengths")
    shape = np.shape(weight_books[0])
    if any(np.shape(b) != shape for b in weight_books) or np.shape(returns) != shape:
        raise CalendarMismatch("books and returns are not aligned")
    rows = rows or (shape[0] - n, shape[0])
    if rows[1] - rows[0] != n:
        raise CalendarMismatch("row range does not match the PnL length")
    base = [_single_stats(p, b, returns, rows) for p, b in zip(pnls, weight_books)]
    corr = average_correlation([p.daily_pnl for p in pnls])
    r_sharpe = frac_rank([b["ir"] for b in base])
    r_pnl = frac_rank([b["expected_pnl"] for b in base])
    r_turn = frac_rank([-b["turnover"] for b in base])
    return [AlphaStats(avg_corr=float(c), rank_sharpe=float(a), rank_pnl=float(p), rank_turnover=float(t), **b)
            for b, c, a, p, t in zip(base, corr, r_sharpe, r_pnl, r_turn)]


# ----------------------------------------------------------------- schemes


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def raw_score(scheme: str, s: AlphaStats) -> float:
    if scheme == "ir_exp_turnover":
        return s.ir * math.exp(-s.turnover)
    if scheme == "inv_avg_corr":
        # avg_corr hits -1 only for two perfectly anti-correlated streams
        return 1.0 / max(1.0 + s.avg_corr, 1e-12)
    if scheme == "inv_volatility":
        return 1.0 / (1.0 + s.volatility)
    if scheme == "sigmoid_momentum":
        return _sigmoid(s.momentum)
    if scheme == "ls_balance":
        return 1.0 - abs(0.5 - s.long_short_ratio)
    if scheme == "zscore_gate":
        return 1.0 if abs(s.zscore) < 2.0 else 0.0
    if scheme == "pos_expected_pnl":
        return max(s.expected_pnl, 0.0)
    if scheme == "composite":
        return (s.ir + 1.0 / (1.0 + s.volatility) + _sigmoid(s.momentum)) / 3.0
    if scheme == "ir_long_short_mean":
        return (s.ir_short + s.ir_long) / 2.0
    if scheme == "inv_drawdown":
        return 1.0 / (1.0 + s.drawdown)
    if scheme == "rank_aggregate":
        return (s.rank_sharpe + s.rank_pnl + s.rank_turnover) / 3.0
    raise InvalidConfig(f"unknown scheme {scheme!r}")


def normalize_scores(raw) -> np.ndarray:
    """Clamp at zero and scale to sum 1; all-nonpositive scores give equal weights."""
    r = np.maximum(np.asarray(raw, dtype=float), 0.0)
    r = np.where(np.isfinite(r), r, 0.0)
    total = r.sum()
    if total <= 0:
        return np.full(r.size, 1.0 / r.size)
    return r / total


def scheme_weight(scheme: str, stats) -> np.ndarray:
    if not stats:
        raise InvalidConfig("no alpha statistics")
    return normalize_scores([raw_score(scheme, s) for s in stats])


def combine_books(weights, books) -> np.ndarray:
    """Weighted sum of books, each date rescaled to unit gross (flat dates stay flat)."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size != len(books) or w.size == 0:
        raise ShapeMismatch(f"{w.size} weights for {len(books)} books")
    shape = np.shape(books[0])
    if any(np.shape(b) != shape for b in books):
        raise ShapeMismatch("books are not aligned")
    out = np.zeros(shape)
    for wk, b in zip(w, books):
        if wk != 0:
            out += wk * np.nan_to_num(np.asarray(b, dtype=float))
    gross = np.abs(out).sum(axis=1, keepdims=True)
    live = gross >= 1e-12
    return np.where(live, out / np.where(live, gross, 1.0), 0.0)


# --------------------------------------------------------------------- MVO


def mvo_objective(w, inputs: MvoInputs) -> float:
    var = float(w @ inputs.cov @ w)
    if var < 1e-16:
        return -math.inf
    return float(w @ inputs.mu) / math.sqrt(var)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1}."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


@dataclass
class MvoResult:
    weights: np.ndarray
    objective: float
    trajectory: list  # objective after each accepted step, starting point first
    active: tuple


def mvo_hill_climb(seed: int, inputs: MvoInputs, cardinality: Optional[int] = None, n_steps: int = 10_000,
                   step_size: float = 0.05, record_weights: bool = False) -> MvoResult:
    """Stochastic pairwise-perturbation climb on wᵀμ / sqrt(wᵀΣw) over the simplex.

    Each step moves a random amount in (0, step_size] from one active
    coordinate to another, projects back onto the simplex and keeps the
    move only when the objective strictly improves.
    """
    n = inputs.mu.size
    if cardinality is not None and not 1 <= cardinality <= n:
        raise InfeasibleCardinality(f"cardinality {cardinality} not in [1, {n}]")
    if n_steps < 0 or step_size <= 0:
        raise InvalidConfig("n_steps must be >= 0 and step_size > 0")
    rng = random.Random(derive_seed(seed, 0))
    k = n if cardinality is None else cardinality
    active = tuple(range(n)) if k == n else tuple(sorted(rng.sample(range(n), k)))
    idx = np.array(active)
    w = np.zeros(n)
    w[idx] = 1.0 / k
    f = mvo_objective(w, inputs)
    trajectory = [f]
    history = [w.copy()] if record_weights else None
    if k >= 2:
        for _ in range(n_steps):
            i, j = rng.sample(active, 2)
            delta = step_size * (1.0 - rng.random())
            sub = w[idx].copy()
            pos = {a: p for p, a in enumerate(active)}
            sub[pos[i]] += delta
            sub[pos[j]] -= delta
            cand = np.zeros(n)
            cand[idx] = project_simplex(sub)
            fc = mvo_objective(cand, inputs)
            if fc > f:
                w, f = cand, fc
                trajectory.append(f)
                if record_weights:
                    history.append(w.copy())
    res = MvoResult(w, f, trajectory, active)
    if record_weights:
        res.history = history
    return res


# ---------------------------------------------------------------- baselines


def risk_contributions(w, cov) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w * (np.asarray(cov) @ w)


def baseline_allocate(method: str, inputs: MvoInputs, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    n = inputs.mu.size
    if method == "equal":
        return np.full(n, 1.0 / n)
    diag = np.diag(inputs.cov)
    if method not in ("inverse_volatility", "risk_parity"):
        raise InvalidConfig(f"unknown baseline {method!r}")
    if (diag <= 0).any():
        raise ZeroVolatilityAsset(f"asset {int(np.argmin(diag))} has zero variance")
    if method == "inverse_volatility":
        inv = 1.0 / np.sqrt(diag)
        return inv / inv.sum()
    # cyclical coordinate descent on x_i (Σx)_i = 1; each update solves the
    # scalar quadratic in x_i exactly, then the solution is normalized
    cov = inputs.cov
    x = 1.0 / np.sqrt(diag)
    for _ in range(max_iter):
        prev = x.copy()
        for i in range(n):
            c = cov[i] @ x - cov[i, i] * x[i]
            x[i] = (-c + math.sqrt(c * c + 4.0 * cov[i, i])) / (2.0 * cov[i, i])
        if np.max(np.abs(x - prev)) <= tol * np.max(np.abs(x)):
            return x / x.sum()
    raise NoConvergence(f"risk parity did not converge in {max_iter} iterations")


# -------------------------------------------------------------- comparison


@dataclass
class AllocationRow:
    scheme: str
    weights: np.ndarray
    in_sample: object  # BacktestReport
    out_sample: object
    pnl: object  # full-calendar PnlSeries of the combined book


def compare_schemes(books, returns, in_rows, out_rows, seed: int = 0, schemes=SCHEMES, baselines=BASELINES,
                    mvo: Optional[dict] = None, cost_bps: float = 0.0) -> list:
    """Weights from in-sample statistics, scored in and out of sample."""
    if len(books) < 2:
        raise InvalidConfig("allocation needs at least two books")
    shape = np.shape(returns)
    if any(np.shape(b) != shape for b in books):
        raise CalendarMismatch("books do not share the returns calendar")
    full = [simulate(b, returns, cost_bps) for b in books]
    ins = [p.slice(*in_rows) for p in full]
    stats = compute_alpha_stats(ins, books, returns, in_rows)
    inputs = MvoInputs.from_pnls([p.daily_pnl for p in ins])
    plan = [(s, scheme_weight(s, stats)) for s in schemes]
    for b in baselines:
        plan.append((b, baseline_allocate(b, inputs)))
    if mvo is not None:
        res = mvo_hill_climb(seed, inputs, mvo.get("cardinality"), mvo.get("n_steps", 10_000),
                             mvo.get("step_size", 0.05))
        plan.append(("mvo", res.weights))
    rows = []
    for name, w in plan:
        pnl = simulate(combine_books(w, books), returns, cost_bps)
        rows.append(AllocationRow(name, w, report(pnl.slice(*in_rows)), report(pnl.slice(*out_rows)), pnl))
    return rows


def write_comparison_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "in_sample_sharpe", "out_sample_sharpe", "returns", "drawdown", "turnover"])
        for r in rows:
            o = r.out_sample
            w.writerow([r.scheme, repr(r.in_sample.sharpe), repr(o.sharpe), repr(o.annual_return),
                        repr(o.max_drawdown), repr(o.turnover)])


def weights_json(rows, labels=None) -> str:
    return json.dumps({r.scheme: {"weights": [float(x) for x in r.weights],
                                  **({"alphas": list(labels)} if labels is not None else {}),
                                  "in_sample": r.in_sample.to_dict(), "out_sample": r.out_sample.to_dict()}
                       for r in rows}, sort_keys=True, indent=1)
