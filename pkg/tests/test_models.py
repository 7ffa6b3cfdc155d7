import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphaforge.errors import InvalidConfig, NotFitted
from alphaforge.models import (GBT, KNN, OLS, DecisionTree, Logistic, ModelSpec, Ridge, register_model,
                               registered_families)

rng = np.random.default_rng(0)


def test_ols_exact():
    X = rng.normal(size=(200, 3))
    y = 2 * X[:, 0]
    m = OLS().fit(X, y)
    assert m.coef_[0] == pytest.approx(2.0, abs=1e-9)
    assert np.max(np.abs(m.predict(X) - y)) < 1e-9
    assert not m.singular


def test_ols_collinear_falls_back():
    x = rng.normal(size=200)
    X = np.column_stack([x, 2 * x])
    m = OLS().fit(X, x)
    assert m.singular
    assert np.max(np.abs(m.predict(X) - x)) < 1e-6


def test_ridge_shrinkage_limit():
    X = rng.normal(size=(300, 4))
    y = X @ np.array([1.0, -2.0, 0.5, 3.0]) + rng.normal(size=300)
    m = Ridge(lam=1e9).fit(X, y)
    assert np.all(np.abs(m.coef_) < 1e-6)
    assert np.allclose(Ridge(lam=0).fit(X, y).coef_, OLS().fit(X, y).coef_, atol=1e-8)


def test_logistic_separable():
    X = rng.normal(size=(200, 2))
    y = np.where(X[:, 0] + 0.5 * X[:, 1] > 0, 0.01, -0.01)
    p = Logistic(lam=1e-6).fit(X, y).predict(X)
    assert np.mean((p > 0.5) == (y > 0)) == 1.0
    assert ((p >= 0) & (p <= 1)).all()


def test_knn_full_k_is_mean():
    X = rng.normal(size=(50, 3))
    y = rng.normal(size=50)
    np.testing.assert_allclose(KNN(k=50).fit(X, y).predict(rng.normal(size=(7, 3))), y.mean())


def _knn_brute(Xtr, ytr, Xq, k):
    mu, sd = Xtr.mean(0), Xtr.std(0)
    Z, Q = (Xtr - mu) / sd, (Xq - mu) / sd
    out = []
    for q in Q:
        d = [float(((z - q) ** 2).sum()) for z in Z]
        order = sorted(range(len(d)), key=lambda i: (d[i], i))
        out.append(np.mean([ytr[i] for i in order[:k]]))
    return np.array(out)


def test_knn_matches_brute_force():
    X = rng.integers(0, 3, size=(60, 2)).astype(float)  # many exact distance ties
    y = rng.normal(size=60)
    Q = rng.integers(0, 3, size=(15, 2)).astype(float)
    for k in (1, 4, 9):
        np.testing.assert_allclose(KNN(k).fit(X, y).predict(Q), _knn_brute(X, y, Q, k), atol=1e-12)


def test_tree_splits_on_signal():
    X = rng.normal(size=(1000, 3))
    y = (X[:, 1] > 0.3).astype(float)
    t = DecisionTree(max_depth=1, min_leaf=10).fit(X, y)
    assert t.tree_.feat[0] == 1
    assert np.mean((t.predict(X) > 0.5) == (y > 0.5)) > 0.97


def test_tree_tie_breaks_lowest_feature():
    x = rng.normal(size=300)
    X = np.column_stack([x, x, x])
    y = (x > 0).astype(float)
    t = DecisionTree(max_depth=2, min_leaf=5).fit(X, y)
    used = set(t.tree_.feat[t.tree_.feat >= 0].tolist())
    assert used == {0}


def test_tree_min_leaf_and_depth():
    X = rng.normal(size=(500, 2))
    y = X[:, 0] + rng.normal(size=500)
    t = DecisionTree(max_depth=3, min_leaf=60).fit(X, y)
    leaves = t.predict(X)
    _, counts = np.unique(leaves, return_counts=True)
    assert counts.min() >= 60
    assert t.tree_.n_leaves <= 8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_gbt_train_mse_non_increasing(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(300, 3))
    y = np.sin(X[:, 0]) + 0.3 * r.normal(size=300)
    g = GBT(n_trees=15, learning_rate=0.3, max_depth=2, min_leaf=10).fit(X, y)
    mse = [np.mean((y - y.mean()) ** 2)] + g.train_mse_
    assert all(b <= a + 1e-12 for a, b in zip(mse, mse[1:]))


def test_models_deterministic():
    X = rng.normal(size=(400, 4))
    y = X[:, 0] * X[:, 1] + rng.normal(size=400)
    for fam in ("ols", "ridge", "logistic", "knn", "decision_tree", "gbt"):
        a = ModelSpec.make(fam).build().fit(X, y).predict(X)
        b = ModelSpec.make(fam).build().fit(X, y).predict(X)
        np.testing.assert_array_equal(a, b)


def test_not_fitted():
    for m in (OLS(), Ridge(), Logistic(), KNN(), DecisionTree(), GBT()):
        with pytest.raises(NotFitted):
            m.predict(np.zeros((1, 2)))


def test_spec_ranges_and_plugins():
    with pytest.raises(InvalidConfig):
        ModelSpec.make("svm")
    with pytest.raises(InvalidConfig):
        ModelSpec.make("ridge", lam=-1)
    with pytest.raises(InvalidConfig):
        ModelSpec.make("gbt", learning_rate=2.0)
    spec = ModelSpec.make("ridge", lam=3.0)
    assert ModelSpec.from_dict(spec.to_dict()) == spec

    class Mean:
        def fit(self, X, y):
            self.m = y.mean()
            return self

        def predict(self, X):
            return np.full(len(X), self.m)

    register_model("mean_plugin", lambda params: Mean())
    assert "mean_plugin" in registered_families()
    out = ModelSpec.make("mean_plugin").build().fit(np.zeros((3, 1)), np.array([1.0, 2, 3])).predict(np.zeros((2, 1)))
    assert out.tolist() == [2.0, 2.0]
    with pytest.raises(InvalidConfig):
        register_model("ols", lambda p: Mean())


@pytest.mark.parametrize("family", ["ols", "ridge", "logistic", "knn", "decision_tree", "gbt"])
def test_features_near_float_limit(family):
    g = np.random.default_rng(9)
    X = g.normal(size=(300, 3))
    X[:, 2] = np.exp(g.normal(size=300)) * 1e307  # max close to the float limit
    y = 0.01 * X[:, 0] + 0.001 * g.normal(size=300)
    with np.errstate(all="raise"):
        pred = ModelSpec.make(family).build().fit(X, y).predict(X)
    assert np.isfinite(pred).all()
    if family == "ols":
        assert np.corrcoef(pred, y)[0, 1] > 0.9
