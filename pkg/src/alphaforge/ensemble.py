"""Model ensembles over archived alpha signals.

Alpha signals become features of a pooled (date, symbol) regression whose
target is the forward compounded return. Fitted models emit prediction
panels, combiners merge them, and two drivers explore compositions: a hill
climber (``ensemble_search``) and a purely random study
(``random_composition_study``).
"""
from __future__ import annotations

import json
import logging
import math
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backtest import BacktestReport, signal_to_weights, split_reports
from .errors import (ArchiveTooSmall, EmptyDataset, InvalidConfig, MissingReturns,
                     WeightMismatch)
from .evaluate import evaluate
from .models import FAMILIES, ModelSpec
from .search import accept
from .seeds import derive_seed

log = logging.getLogger(__name__)

COMBINERS = ("weighted_vote", "stacking", "bagging")
MIN_ALPHAS, MAX_ALPHAS = 10, 20

# integer stream tags for derive_seed
_TRIAL, _BAG, _SEARCH = 1, 2, 3


# ------------------------------------------------------------------ data


@dataclass(frozen=True)
class SupervisedDataset:
    X: np.ndarray  # (rows, features)
    y: np.ndarray
    t: np.ndarray  # date row of each sample
    j: np.ndarray  # symbol column of each sample
    horizon: int
    alpha_ids: tuple
    cube: np.ndarray = field(repr=False)  # (features, dates, symbols) source signals

    def __len__(self):
        return len(self.y)


class SignalCache:
    """Lazily evaluated archive signals, shared across trials."""

    def __init__(self, archive, panel):
        self.archive = archive
        self.panel = panel
        self._store = {}
        self._lock = threading.Lock()

    def __getitem__(self, idx):
        sig = self._store.get(idx)
        if sig is None:
            sig = evaluate(self.archive.entries[idx].expr, self.panel, check=False)
            with self._lock:
                self._store.setdefault(idx, sig)
        return sig

    def cube(self, ids):
        return np.stack([self[i] for i in ids])


def forward_returns(returns: np.ndarray, horizon: int) -> np.ndarray:
    """target[t] = prod_{h=1..H}(1 + r[t+h]) - 1, NaN where the window leaves the panel."""
    n = returns.shape[0]
    out = np.full(returns.shape, np.nan)
    if n > horizon:
        growth = np.ones((n - horizon, returns.shape[1]))
        for h in range(1, horizon + 1):
            growth = growth * (1.0 + returns[h:n - horizon + h])
        out[:n - horizon] = growth - 1.0
    return out


def build_dataset(archive, alpha_ids, panel, rows, horizon: int = 1, cache: Optional[SignalCache] = None,
                  max_rows: Optional[int] = None) -> SupervisedDataset:
    """Pool (date, symbol) samples over ``rows`` with complete features and target.

    The last ``horizon`` dates of the range are dropped so targets never
    reach past it. ``max_rows`` keeps every k-th date when the pool is larger.
    """
    if horizon < 1:
        raise InvalidConfig("horizon must be >= 1")
    if "returns" not in panel.fields:
        raise MissingReturns("panel has no 'returns' field")
    ids = tuple(int(i) for i in alpha_ids)
    cache = cache or SignalCache(archive, panel)
    cube = cache.cube(ids)
    target = forward_returns(np.asarray(panel.fields["returns"]), horizon)
    start, stop = rows
    stop = min(stop, panel.shape[0]) - horizon
    if stop <= start:
        raise EmptyDataset("range shorter than the horizon")
    ok = ~np.isnan(target[start:stop]) & ~np.isnan(cube[:, start:stop]).any(axis=0)
    if max_rows is not None and ok.sum() > max_rows:
        stride = math.ceil(ok.sum() / max_rows)
        keep = np.zeros(stop - start, dtype=bool)
        keep[::stride] = True
        ok &= keep[:, None]
    t, j = np.nonzero(ok)
    if t.size == 0:
        raise EmptyDataset("no complete (date, symbol) rows in range")
    t = t + start
    X = np.ascontiguousarray(cube[:, t, j].T)
    return SupervisedDataset(X, target[t, j], t, j, horizon, ids, cube)


def _cells(cube, ranges):
    """Coordinates of complete feature cells inside the given row ranges."""
    ts, js = [], []
    for start, stop in ranges:
        ok = ~np.isnan(cube[:, start:stop]).any(axis=0)
        t, j = np.nonzero(ok)
        ts.append(t + start)
        js.append(j)
    t = np.concatenate(ts) if ts else np.empty(0, dtype=np.int64)
    j = np.concatenate(js) if js else np.empty(0, dtype=np.int64)
    return t, j


# --------------------------------------------------------------- fitting


def fit_model(spec: ModelSpec, X, y):
    return spec.build().fit(X, y)


def _as_ranges(score_range):
    if score_range and isinstance(score_range[0], (tuple, list)):
        return [tuple(r) for r in score_range]
    return [tuple(score_range)]


def fit_predict(model: ModelSpec, train: SupervisedDataset, score_range, panel=None, return_model=False):
    """Fit on ``train`` and predict every complete cell of ``score_range``.

    ``score_range`` is one half-open (start, stop) row range or a list of
    them; cells outside it, or with a missing feature, are NaN.
    """
    if len(train) == 0:
        raise EmptyDataset("empty training set")
    fitted = fit_model(model, train.X, train.y)
    if getattr(fitted, "singular", False):
        log.warning("collinear features: %s fell back to ridge(1e-8)", model.family)
    out = _predict_panel(fitted, train.cube, _as_ranges(score_range))
    return (out, fitted) if return_model else out


def _predict_panel(fitted, cube, ranges):
    out = np.full(cube.shape[1:], np.nan)
    t, j = _cells(cube, ranges)
    if t.size:
        out[t, j] = _predict(fitted, np.ascontiguousarray(cube[:, t, j].T))
    return out


def _predict(fitted, X):
    # features near the float limit can overflow a prediction; treat it as missing
    with np.errstate(over="ignore", invalid="ignore"):
        p = np.asarray(fitted.predict(X), dtype=np.float64)
    return np.where(np.isfinite(p), p, np.nan)


@dataclass
class MemberFit:
    """Prediction panel of one member plus its in-sample predictions on the train rows."""
    signal: np.ndarray
    train_pred: np.ndarray


def fit_member(model: ModelSpec, train: SupervisedDataset, ranges, n_bags: int = 1, bootstrap: bool = False,
               seed: int = 0, with_train_pred: bool = True) -> MemberFit:
    """Fit one member, averaging ``n_bags`` fits when bagging."""
    if n_bags == 1 and not bootstrap:
        fitted = fit_model(model, train.X, train.y)
        return MemberFit(_predict_panel(fitted, train.cube, ranges),
                         _predict(fitted, train.X) if with_train_pred else None)
    rng = np.random.default_rng(seed)
    signal = None
    train_pred = None
    n = len(train)
    for _ in range(n_bags):
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        fitted = fit_model(model, train.X[idx], train.y[idx])
        s = _predict_panel(fitted, train.cube, ranges)
        signal = s if signal is None else signal + s
        if with_train_pred:
            p = _predict(fitted, train.X)
            train_pred = p if train_pred is None else train_pred + p
    return MemberFit(signal / n_bags, train_pred / n_bags if with_train_pred else None)


def stacking_fit(train_preds, y):
    """OLS-with-intercept coefficients of the target on member predictions.

    Rows where any member prediction is non-finite are left out of the fit.
    """
    A = np.column_stack([np.ones(len(y)), *train_preds])
    ok = np.isfinite(A).all(axis=1)
    if not ok.any():
        return np.concatenate([[float(np.mean(y))], np.zeros(A.shape[1] - 1)])
    coef, *_ = np.linalg.lstsq(A[ok], y[ok], rcond=None)
    return coef


def combine(member_signals, method: str, train: Optional[SupervisedDataset] = None, weights=None,
            train_preds=None):
    """Merge aligned member prediction panels into one signal.

    weighted_vote: convex combination with ``weights``. stacking: OLS of the
    train target on the members' train predictions (read from the panels at
    the train cells unless ``train_preds`` is given), applied everywhere.
    bagging: plain mean (the resampling itself happens at fit time).
    """
    signals = [np.asarray(s, dtype=np.float64) for s in member_signals]
    if not signals:
        raise WeightMismatch("no members")
    shape = signals[0].shape
    if any(s.shape != shape for s in signals):
        raise WeightMismatch("member signals are not aligned")
    if method == "weighted_vote":
        w = np.full(len(signals), 1.0 / len(signals)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(signals),):
            raise WeightMismatch(f"{w.size} weights for {len(signals)} members")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise WeightMismatch("vote weights must be non-negative and sum to 1")
        out = None
        for wk, s in zip(w, signals):
            if wk == 0:
                continue
            term = s if wk == 1.0 else wk * s
            out = term if out is None else out + term
        return out.copy()
    if method == "bagging":
        return sum(signals[1:], signals[0].copy()) / len(signals) if len(signals) > 1 else signals[0].copy()
    if method == "stacking":
        if train is None:
            raise InvalidConfig("stacking needs the training set")
        if train_preds is None:
            train_preds = [s[train.t, train.j] for s in signals]
        coef = stacking_fit(train_preds, train.y)
        out = np.full(shape, coef[0])
        for c, s in zip(coef[1:], signals):
            out = out + c * s
        return out
    raise InvalidConfig(f"unknown combiner {method!r}")


# ------------------------------------------------------------------ specs


@dataclass(frozen=True)
class EnsembleSpec:
    alpha_ids: tuple
    members: tuple  # ModelSpec
    combiner: str = "weighted_vote"
    weights: Optional[tuple] = None  # weighted_vote only
    n_bags: int = 1  # bagging only

    def __post_init__(self):
        if self.combiner not in COMBINERS:
            raise InvalidConfig(f"unknown combiner {self.combiner!r}")
        if not self.members:
            raise InvalidConfig("ensemble needs at least one member")
        if not self.alpha_ids:
            raise InvalidConfig("ensemble needs at least one alpha")
        if self.combiner == "weighted_vote" and self.weights is not None:
            if len(self.weights) != len(self.members):
                raise WeightMismatch("one vote weight per member")
            if min(self.weights) < 0 or abs(sum(self.weights) - 1.0) > 1e-9:
                raise WeightMismatch("vote weights must be non-negative and sum to 1")
        if self.combiner == "bagging" and self.n_bags < 1:
            raise InvalidConfig("n_bags must be >= 1")

    def to_dict(self, archive=None):
        d = {
            "alpha_ids": list(self.alpha_ids),
            "members": [m.to_dict() for m in self.members],
            "combiner": self.combiner,
        }
        if self.combiner == "weighted_vote":
            d["weights"] = list(self.weights) if self.weights is not None else None
        if self.combiner == "bagging":
            d["n_bags"] = self.n_bags
        if archive is not None:
            d["alphas"] = [archive.entries[i].text for i in self.alpha_ids]
        return d

    @classmethod
    def from_dict(cls, d):
        w = d.get("weights")
        return cls(tuple(d["alpha_ids"]), tuple(ModelSpec.from_dict(m) for m in d["members"]), d["combiner"],
                   tuple(w) if w is not None else None, d.get("n_bags", 1))


@dataclass(frozen=True)
class EnsembleConfig:
    horizon: int = 1
    budget: int = 60  # ensemble_search evaluations
    n_trials: int = 200  # random_composition_study trials
    max_train_rows: int = 6000
    cost_bps: float = 0.0

    def __post_init__(self):
        for name in ("horizon", "budget", "n_trials", "max_train_rows"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.cost_bps < 0:
            raise InvalidConfig("cost_bps must be >= 0")


class EnsembleContext:
    """Everything needed to score ensembles on one panel and split."""

    def __init__(self, archive, panel, split, cfg: EnsembleConfig = EnsembleConfig(), cache=None):
        if len(archive) == 0:
            raise ArchiveTooSmall("archive is empty")
        self.archive = archive
        self.panel = panel
        self.split = split
        self.cfg = cfg
        self.cache = cache or SignalCache(archive, panel)
        self._datasets = {}

    def dataset(self, alpha_ids):
        key = tuple(alpha_ids)
        ds = self._datasets.get(key)
        if ds is None:
            ds = build_dataset(self.archive, key, self.panel, self.split.train, self.cfg.horizon,
                               self.cache, self.cfg.max_train_rows)
            if len(self._datasets) > 64:
                self._datasets.clear()
            self._datasets[key] = ds
        return ds

    def signal(self, spec: EnsembleSpec, seed: int, segments=("validation",)):
        """Combined prediction panel over the requested split segments.

        Each segment starts one date early so the book held into its first
        date is formed from an out-of-sample prediction.
        """
        train = self.dataset(spec.alpha_ids)
        ranges = []
        for name in segments:
            start, stop = self.split.ranges()[name]
            ranges.append((max(start - 1, 0), stop))
        bagging = spec.combiner == "bagging"
        stacking = spec.combiner == "stacking"
        fits = [fit_member(m, train, ranges, spec.n_bags if bagging else 1, bagging, derive_seed(seed, _BAG, k),
                           with_train_pred=stacking)
                for k, m in enumerate(spec.members)]
        return combine([f.signal for f in fits], spec.combiner, train, spec.weights,
                       [f.train_pred for f in fits] if stacking else None), train

    def score(self, spec: EnsembleSpec, seed: int, segments=("validation",)):
        signal, _ = self.signal(spec, seed, segments)
        per_split = split_reports(signal_to_weights(signal), self.panel, self.split, self.cfg.cost_bps)
        return {name: per_split[name][1] for name in segments}, {name: per_split[name][0] for name in segments}


# ----------------------------------------------------------------- random draws


def random_model(rng: random.Random, family=None) -> ModelSpec:
    family = family or rng.choice(FAMILIES)
    if family == "ols":
        return ModelSpec.make("ols")
    if family in ("ridge", "logistic"):
        return ModelSpec.make(family, lam=10 ** rng.uniform(-4, 2))
    if family == "knn":
        return ModelSpec.make("knn", k=rng.choice((10, 25, 50, 100, 200)))
    if family == "decision_tree":
        return ModelSpec.make("decision_tree", max_depth=rng.randint(1, 5), min_leaf=rng.choice((50, 100, 200, 400)))
    return ModelSpec.make("gbt", n_trees=rng.randint(10, 60), learning_rate=rng.choice((0.05, 0.1, 0.2)),
                          max_depth=rng.randint(1, 3), min_leaf=rng.choice((50, 100, 200, 400)))


def jitter_model(rng: random.Random, spec: ModelSpec) -> ModelSpec:
    p = spec.params
    f = spec.family
    if f in ("ridge", "logistic"):
        p["lam"] = min(max(p["lam"] * 10 ** rng.choice((-0.5, 0.5)), 1e-6), 1e4)
    elif f == "knn":
        p["k"] = min(max(1, int(round(p["k"] * rng.choice((0.5, 2.0))))), 500)
    elif f == "decision_tree":
        if rng.random() < 0.5:
            p["max_depth"] = min(max(p["max_depth"] + rng.choice((-1, 1)), 1), 8)
        else:
            p["min_leaf"] = max(1, int(p["min_leaf"] * rng.choice((0.5, 2.0))))
    elif f == "gbt":
        key = rng.choice(("n_trees", "learning_rate", "max_depth"))
        if key == "n_trees":
            p[key] = min(max(p[key] + rng.choice((-10, 10)), 1), 500)
        elif key == "learning_rate":
            p[key] = min(max(p[key] * rng.choice((0.5, 2.0)), 1e-4), 1.0)
        else:
            p[key] = min(max(p[key] + rng.choice((-1, 1)), 1), 6)
    else:
        return random_model(rng)
    return ModelSpec.make(f, **p)


def _dirichlet(rng: random.Random, k):
    g = [rng.gammavariate(1.0, 1.0) for _ in range(k)]
    s = sum(g)
    w = [x / s for x in g]
    w[-1] = 1.0 - sum(w[:-1])
    return tuple(max(x, 0.0) for x in w)


def random_spec(rng: random.Random, n_archive: int, max_members: int = 3) -> EnsembleSpec:
    count = rng.randint(MIN_ALPHAS, min(MAX_ALPHAS, n_archive))
    ids = tuple(sorted(rng.sample(range(n_archive), count)))
    members = tuple(random_model(rng) for _ in range(rng.randint(1, max_members)))
    combiner = rng.choice(COMBINERS)
    weights = _dirichlet(rng, len(members)) if combiner == "weighted_vote" else None
    n_bags = rng.randint(2, 5) if combiner == "bagging" else 1
    return EnsembleSpec(ids, members, combiner, weights, n_bags)


# -------------------------------------------------------------- the study


@dataclass
class StudyTrial:
    index: int
    seed: int
    spec: EnsembleSpec
    validation: BacktestReport
    test: Optional[BacktestReport] = None

    def to_json(self, archive=None):
        return json.dumps({
            "trial": self.index,
            "seed": self.seed,
            "spec": self.spec.to_dict(archive),
            "validation": self.validation.to_dict(),
            "test": self.test.to_dict() if self.test is not None else None,
        }, sort_keys=True)


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def random_composition_study(seed: int, archive, panel, split, n_trials: int = 200,
                             cfg: EnsembleConfig = EnsembleConfig(), threads: int = 1, context=None):
    """Score ``n_trials`` random ensembles on validation, best first.

    Trial ``i`` draws everything from ``derive_seed(seed, i)``, so results do
    not depend on ``threads``. Only the top decile is scored on test.
    """
    if n_trials < 1:
        raise InvalidConfig("n_trials must be >= 1")
    if len(archive) < MIN_ALPHAS:
        raise ArchiveTooSmall(f"need at least {MIN_ALPHAS} archived alphas, got {len(archive)}")
    ctx = context or EnsembleContext(archive, panel, split, cfg)

    def run(i):
        s = derive_seed(seed, _TRIAL, i)
        spec = random_spec(random.Random(s), len(archive))
        reports, _ = ctx.score(spec, s)
        return StudyTrial(i, s, spec, reports["validation"])

    trials = _map(run, range(n_trials), threads)
    trials.sort(key=lambda tr: -tr.validation.sharpe)
    top = trials[:math.ceil(len(trials) / 10)]

    def attach(tr):
        tr.test = ctx.score(tr.spec, tr.seed, ("test",))[0]["test"]

    _map(attach, top, threads)
    return trials


def write_study_jsonl(trials, path, archive=None):
    with open(path, "w") as fh:
        for tr in trials:
            fh.write(tr.to_json(archive) + "\n")


# ------------------------------------------------------------- hill climb


@dataclass
class EnsembleSearchResult:
    spec: EnsembleSpec
    report: BacktestReport  # validation
    seed: int
    trajectory: list  # accepted validation sharpes
    n_evaluated: int


def _initial_spec(archive):
    order = sorted(range(len(archive)), key=lambda i: (-archive.entries[i].reports["validation"].sharpe, i))
    k = min(len(archive), (MIN_ALPHAS + MAX_ALPHAS) // 2)
    return EnsembleSpec(tuple(sorted(order[:k])), (ModelSpec.make("ols"),), "weighted_vote", (1.0,))


def _propose(rng: random.Random, spec: EnsembleSpec, n_archive: int) -> EnsembleSpec:
    ids = list(spec.alpha_ids)
    members = list(spec.members)
    lo = min(MIN_ALPHAS, n_archive)
    pool = [i for i in range(n_archive) if i not in ids]
    moves = []
    if pool and len(ids) < MAX_ALPHAS:
        moves.append("add")
    if len(ids) > lo:
        moves.append("drop")
    if pool:
        moves.append("swap")
    moves += ["family", "jitter", "combiner"]
    move = rng.choice(moves)
    combiner, weights, n_bags = spec.combiner, spec.weights, spec.n_bags
    if move == "add":
        ids.append(rng.choice(pool))
    elif move == "drop":
        ids.pop(rng.randrange(len(ids)))
    elif move == "swap":
        ids[rng.randrange(len(ids))] = rng.choice(pool)
    elif move == "family":
        k = rng.randrange(len(members))
        members[k] = random_model(rng, rng.choice([f for f in FAMILIES if f != members[k].family]))
    elif move == "jitter":
        k = rng.randrange(len(members))
        members[k] = jitter_model(rng, members[k])
    else:
        combiner = rng.choice([c for c in COMBINERS if c != spec.combiner])
        if combiner == "stacking" and len(members) == 1:
            members.append(random_model(rng))
        weights = _dirichlet(rng, len(members)) if combiner == "weighted_vote" else None
        n_bags = rng.randint(2, 5) if combiner == "bagging" else 1
    if combiner == "weighted_vote" and (weights is None or len(weights) != len(members)):
        weights = _dirichlet(rng, len(members))
    return EnsembleSpec(tuple(sorted(ids)), tuple(members), combiner, weights, n_bags)


def ensemble_search(seed: int, archive, panel, split, budget: int = 60, cfg: EnsembleConfig = EnsembleConfig(),
                    context=None) -> EnsembleSearchResult:
    """Hill-climb ensemble compositions on validation sharpe.

    Starts from an OLS fit over the top archived alphas by validation
    sharpe; each step applies one move (add, drop or swap an alpha, change a
    member's family, jitter a hyperparameter, switch combiner) and keeps it
    under ``search.accept``.
    """
    ctx = context or EnsembleContext(archive, panel, split, cfg)
    rng = random.Random(derive_seed(seed, _SEARCH))
    current = _initial_spec(archive)
    rep = ctx.score(current, seed)[0]["validation"]
    trajectory = [rep.sharpe]
    seen = {current}
    n = 1
    while n < budget:
        cand = _propose(rng, current, len(archive))
        if cand in seen:
            n += 1
            continue
        seen.add(cand)
        cand_rep = ctx.score(cand, seed)[0]["validation"]
        n += 1
        if accept(rep.sharpe, cand_rep.sharpe, rep.turnover, cand_rep.turnover):
            current, rep = cand, cand_rep
            trajectory.append(rep.sharpe)
    return EnsembleSearchResult(current, rep, seed, trajectory, n)
