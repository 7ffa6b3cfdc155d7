"""Classical predictive models used by the ensemble layer.

All models share a two-method protocol, ``fit(X, y)`` then ``predict(X)``,
and are deterministic given their inputs. Trees use histogram splits over
per-feature quantile bins fitted on the training data; among equal-gain
splits the lowest feature index and then the lowest threshold wins.

Further model families (neural nets, RL agents, ...) can be plugged in with
``register_model(name, factory)``; the factory receives the hyperparameter
dict and must return an object implementing the same protocol.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jit import USE_NUMBA, optional_njit
from .errors import InvalidConfig, NotFitted

FAMILIES = ("ols", "ridge", "logistic", "knn", "decision_tree", "gbt")

HYPER_RANGES = {
    "ridge": {"lam": (0.0, 1e12)},
    "logistic": {"lam": (0.0, 1e3)},
    "knn": {"k": (1, 10**9)},
    "decision_tree": {"max_depth": (1, 8), "min_leaf": (1, 10**9)},
    "gbt": {"n_trees": (1, 500), "learning_rate": (1e-4, 1.0), "max_depth": (1, 6), "min_leaf": (1, 10**9)},
}

DEFAULT_HYPER = {
    "ols": {},
    "ridge": {"lam": 1.0},
    "logistic": {"lam": 1e-4},
    "knn": {"k": 50},
    "decision_tree": {"max_depth": 3, "min_leaf": 200},
    "gbt": {"n_trees": 30, "learning_rate": 0.1, "max_depth": 2, "min_leaf": 200},
}


@dataclass(frozen=True)
class ModelSpec:
    family: str
    hyper: tuple = ()  # sorted (name, value) pairs, hashable

    @classmethod
    def make(cls, family, **hyper):
        if family not in FAMILIES and family not in _PLUGINS:
            raise InvalidConfig(f"unknown model family {family!r}")
        merged = dict(DEFAULT_HYPER.get(family, {}))
        merged.update(hyper)
        for name, value in merged.items():
            lo, hi = HYPER_RANGES.get(family, {}).get(name, (-math.inf, math.inf))
            if not lo <= value <= hi:
                raise InvalidConfig(f"{family}.{name}={value} outside [{lo}, {hi}]")
        return cls(family, tuple(sorted(merged.items())))

    @property
    def params(self):
        return dict(self.hyper)

    def to_dict(self):
        return {"family": self.family, **self.params}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls.make(d.pop("family"), **d)

    def build(self):
        if self.family in _PLUGINS:
            return _PLUGINS[self.family](self.params)
        return _BUILTIN[self.family](**self.params)


# ---------------------------------------------------------------- helpers


class _Scaler:
    """Column standardizer that divides by the column max first.

    Working in max-scaled units keeps centering and squaring finite even for
    features near the float limit.
    """

    def __init__(self, X):
        scale = np.abs(X).max(axis=0) if len(X) else np.ones(X.shape[1])
        self.scale = np.where((scale > 0) & np.isfinite(scale), scale, 1.0)
        Xs = X / self.scale
        self.mu = Xs.mean(axis=0)
        sd = Xs.std(axis=0)
        self.sd = np.where(sd < 1e-12, 1.0, sd)

    def __call__(self, X):
        return (X / self.scale - self.mu) / self.sd

    def raw_linear(self, beta, b0):
        """(coef, intercept) on raw features for ``Z @ beta + b0``."""
        with np.errstate(under="ignore"):
            coef = beta / self.sd / self.scale
        return coef, b0 - (self.mu / self.sd) @ beta


class _Fitted:
    fitted = False

    def _check(self):
        if not self.fitted:
            raise NotFitted(f"{type(self).__name__} used before fit")


class _Linear(_Fitted):
    def predict(self, X):
        self._check()
        return self.scaler_(X) @ self.beta_ + self.b0_

    def _finish(self, scaler, beta, b0):
        self.scaler_, self.beta_, self.b0_ = scaler, beta, b0
        self.coef_, self.intercept_ = scaler.raw_linear(beta, b0)
        self.fitted = True
        return self


# ---------------------------------------------------------- linear models


class OLS(_Linear):
    """Least squares with intercept; falls back to ridge(1e-8) when collinear."""

    singular = False

    def fit(self, X, y):
        sc = _Scaler(X)
        Z = sc(X)
        A = np.column_stack([np.ones(len(Z)), Z])
        if np.linalg.matrix_rank(A) < A.shape[1]:
            self.singular = True
            return self._finish(sc, _ridge_solve(Z, y, 1e-8), y.mean())
        sol, *_ = np.linalg.lstsq(A, y, rcond=None)
        return self._finish(sc, sol[1:], sol[0])


def _ridge_solve(Z, y, lam):
    # Z is centered, so the unpenalized intercept is the target mean
    G = Z.T @ Z + lam * np.eye(Z.shape[1])
    return np.linalg.solve(G, Z.T @ (y - y.mean()))


class Ridge(_Linear):
    """L2-penalized least squares on standardized features, unpenalized intercept."""

    def __init__(self, lam=1.0):
        self.lam = lam

    def fit(self, X, y):
        sc = _Scaler(X)
        return self._finish(sc, _ridge_solve(sc(X), y, self.lam), y.mean())


class Logistic(_Fitted):
    """P(target > 0) by Newton iterations on L2-penalized log-loss."""

    def __init__(self, lam=1e-4, max_iter=100, tol=1e-10):
        self.lam = lam
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        self.scaler_ = _Scaler(X)
        Z = np.column_stack([np.ones(len(X)), self.scaler_(X)])
        lab = (y > 0).astype(float)
        n, p = Z.shape
        w = np.zeros(p)
        pen = np.full(p, max(self.lam, 1e-10))
        pen[0] = 1e-10
        for _ in range(self.max_iter):
            prob = _sigmoid(Z @ w)
            grad = Z.T @ (prob - lab) / n + pen * w
            H = (Z * (prob * (1 - prob))[:, None]).T @ Z / n + np.diag(pen)
            step = np.linalg.solve(H, grad)
            w -= step
            if np.max(np.abs(step)) < self.tol:
                break
        self.w_ = w
        self.fitted = True
        return self

    def predict(self, X):
        self._check()
        return _sigmoid(self.w_[0] + self.scaler_(X) @ self.w_[1:])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# -------------------------------------------------------------------- kNN


class KNN(_Fitted):
    """Mean target of the k nearest training rows (standardized Euclidean).

    Distance ties at the k-th neighbour are broken by lowest row index.
    """

    def __init__(self, k=50, chunk=256):
        self.k = int(k)
        self.chunk = chunk

    def fit(self, X, y):
        self.scaler_ = _Scaler(X)
        self.Z_ = self.scaler_(X)
        self.sq_ = (self.Z_ ** 2).sum(axis=1)
        self.y_ = np.asarray(y, dtype=float)
        self.fitted = True
        return self

    def predict(self, X):
        self._check()
        n_train = len(self.y_)
        k = min(self.k, n_train)
        if k == n_train:
            return np.full(len(X), self.y_.mean())
        Q = self.scaler_(X)
        out = np.empty(len(Q))
        for s in range(0, len(Q), self.chunk):
            q = Q[s:s + self.chunk]
            d = (q ** 2).sum(axis=1)[:, None] - 2.0 * q @ self.Z_.T + self.sq_[None, :]
            tol = 1e-9 * (1.0 + (q ** 2).sum(axis=1) + self.sq_.max())
            out[s:s + self.chunk] = _knn_select(d, np.ascontiguousarray(q), self.Z_, self.y_, k, tol)
        return out


@optional_njit
def _knn_select_loop(d, Q, Z, y, k, tol):
    # d holds fast approximate distances; rows within tol of the k-th one get
    # exact distances so that ties resolve by lowest training index
    n, m = d.shape
    F = Z.shape[1]
    out = np.empty(n)
    for i in range(n):
        row = d[i]
        kth = np.partition(row, k - 1)[k - 1]
        cand = np.nonzero(row <= kth + tol[i])[0]
        exact = np.empty(cand.size)
        for c in range(cand.size):
            s = 0.0
            for f in range(F):
                diff = Z[cand[c], f] - Q[i, f]
                s += diff * diff
            exact[c] = s
        order = np.argsort(exact, kind="mergesort")
        total = 0.0
        for c in range(k):
            total += y[cand[order[c]]]
        out[i] = total / k
    return out


def _knn_select_numpy(d, Q, Z, y, k, tol):
    out = np.empty(d.shape[0])
    kth = np.partition(d, k - 1, axis=1)[:, k - 1]
    for i in range(d.shape[0]):
        cand = np.nonzero(d[i] <= kth[i] + tol[i])[0]
        exact = ((Z[cand] - Q[i]) ** 2).sum(axis=1)
        out[i] = y[cand[np.argsort(exact, kind="stable")[:k]]].mean()
    return out


_knn_select = _knn_select_loop if USE_NUMBA else _knn_select_numpy


# ----------------------------------------------------------------- trees


def quantile_edges(X, n_bins=64):
    edges = []
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    for f in range(X.shape[1]):
        e = np.unique(np.quantile(X[:, f], qs, method="lower"))
        edges.append(e)
    return edges


def digitize(X, edges):
    B = np.empty(X.shape, dtype=np.int64)
    for f, e in enumerate(edges):
        B[:, f] = np.searchsorted(e, X[:, f], side="left")
    return B


@optional_njit
def _grow_tree(B, y, n_bins, max_depth, min_leaf):
    """Level-wise histogram tree. Returns (feature, bin, left, right, value) arrays."""
    n, F = B.shape
    max_nodes = 2 ** (max_depth + 1)
    feat = np.full(max_nodes, -1, dtype=np.int64)
    thr = np.zeros(max_nodes, dtype=np.int64)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    node_of = np.zeros(n, dtype=np.int64)
    nbmax = n_bins.max()

    total = 0.0
    for i in range(n):
        total += y[i]
    value[0] = total / n
    n_nodes = 1
    level = np.array([0], dtype=np.int64)
    for depth in range(max_depth):
        L = level.shape[0]
        if L == 0:
            break
        slot = np.full(max_nodes, -1, dtype=np.int64)
        for a in range(L):
            slot[level[a]] = a
        hs = np.zeros((L, F, nbmax))
        hc = np.zeros((L, F, nbmax), dtype=np.int64)
        ns = np.zeros(L)
        nc = np.zeros(L, dtype=np.int64)
        for i in range(n):
            a = slot[node_of[i]]
            if a < 0:
                continue
            ns[a] += y[i]
            nc[a] += 1
            for f in range(F):
                hs[a, f, B[i, f]] += y[i]
                hc[a, f, B[i, f]] += 1
        nxt = np.empty(2 * L, dtype=np.int64)
        k = 0
        for a in range(L):
            node = level[a]
            cnt = nc[a]
            if cnt < 2 * min_leaf:
                continue
            base = ns[a] * ns[a] / cnt
            best_gain = 1e-12 * (1.0 + abs(base))
            best_f = -1
            best_b = -1
            for f in range(F):
                sl = 0.0
                cl = 0
                for b in range(n_bins[f] - 1):
                    sl += hs[a, f, b]
                    cl += hc[a, f, b]
                    cr = cnt - cl
                    if cl < min_leaf:
                        continue
                    if cr < min_leaf:
                        break
                    sr = ns[a] - sl
                    gain = sl * sl / cl + sr * sr / cr - base
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_b = b
            if best_f < 0:
                continue
            feat[node] = best_f
            thr[node] = best_b
            left[node] = n_nodes
            right[node] = n_nodes + 1
            n_nodes += 2
            nxt[k] = left[node]
            nxt[k + 1] = right[node]
            k += 2
        # reassign rows and compute child means
        sums = np.zeros(n_nodes)
        cnts = np.zeros(n_nodes, dtype=np.int64)
        for i in range(n):
            node = node_of[i]
            f = feat[node]
            if f >= 0 and left[node] >= 0 and slot[node] >= 0:
                node = left[node] if B[i, f] <= thr[node] else right[node]
                node_of[i] = node
            sums[node] += y[i]
            cnts[node] += 1
        for c in range(k):
            node = nxt[c]
            value[node] = sums[node] / cnts[node]
        level = nxt[:k].copy()
    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@optional_njit
def _apply_tree(B, feat, thr, left, right, value):
    n = B.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            node = left[node] if B[i, feat[node]] <= thr[node] else right[node]
        out[i] = value[node]
    return out


@dataclass
class _Tree:
    feat: np.ndarray
    thr: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, B):
        return _apply_tree(B, self.feat, self.thr, self.left, self.right, self.value)

    @property
    def n_leaves(self):
        return int((self.feat < 0).sum())


def fit_tree(B, y, n_bins, max_depth, min_leaf):
    return _Tree(*_grow_tree(np.ascontiguousarray(B), np.ascontiguousarray(y, dtype=np.float64),
                             n_bins, int(max_depth), int(min_leaf)))


class DecisionTree(_Fitted):
    def __init__(self, max_depth=3, min_leaf=200, n_bins=64):
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)
        self.n_bins = n_bins

    def fit(self, X, y):
        self.edges_ = quantile_edges(X, self.n_bins)
        nb = np.array([len(e) + 1 for e in self.edges_], dtype=np.int64)
        self.tree_ = fit_tree(digitize(X, self.edges_), y, nb, self.max_depth, self.min_leaf)
        self.fitted = True
        return self

    def predict(self, X):
        self._check()
        return self.tree_.apply(digitize(X, self.edges_))


class GBT(_Fitted):
    """Squared-loss gradient boosting over histogram trees."""

    def __init__(self, n_trees=30, learning_rate=0.1, max_depth=2, min_leaf=200, n_bins=64):
        self.n_trees = int(n_trees)
        self.learning_rate = learning_rate
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)
        self.n_bins = n_bins

    def fit(self, X, y):
        self.edges_ = quantile_edges(X, self.n_bins)
        nb = np.array([len(e) + 1 for e in self.edges_], dtype=np.int64)
        B = digitize(X, self.edges_)
        self.base_ = float(np.mean(y))
        pred = np.full(len(y), self.base_)
        self.trees_ = []
        self.train_mse_ = []
        for _ in range(self.n_trees):
            tree = fit_tree(B, y - pred, nb, self.max_depth, self.min_leaf)
            pred = pred + self.learning_rate * tree.apply(B)
            self.trees_.append(tree)
            self.train_mse_.append(float(np.mean((y - pred) ** 2)))
        self.fitted = True
        return self

    def predict(self, X):
        self._check()
        B = digitize(X, self.edges_)
        pred = np.full(len(X), self.base_)
        for tree in self.trees_:
            pred = pred + self.learning_rate * tree.apply(B)
        return pred


_BUILTIN = {
    "ols": lambda: OLS(),
    "ridge": lambda lam: Ridge(lam),
    "logistic": lambda lam: Logistic(lam),
    "knn": lambda k: KNN(k),
    "decision_tree": lambda max_depth, min_leaf: DecisionTree(max_depth, min_leaf),
    "gbt": lambda n_trees, learning_rate, max_depth, min_leaf: GBT(n_trees, learning_rate, max_depth, min_leaf),
}

_PLUGINS: dict = {}


def register_model(name: str, factory):
    """Register an external model family.

    ``factory(params: dict)`` must return an object with ``fit(X, y)``
    returning itself and ``predict(X)`` returning one score per row.
    """
    if name in _BUILTIN:
        raise InvalidConfig(f"{name!r} is a built-in family")
    _PLUGINS[name] = factory


def registered_families():
    return FAMILIES + tuple(sorted(_PLUGINS))
