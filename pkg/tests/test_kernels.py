"""The numba loop kernels and the numpy kernels must agree cell for cell."""
import numpy as np
import pytest

from alphaforge import kernels as K

rng = np.random.default_rng(11)


def data(n=60, m=7, missing=0.1, ties=False):
    x = rng.normal(size=(n, m))
    if ties:
        x = np.round(x, 1)
    x[rng.random((n, m)) < missing] = np.nan
    return x


def same(a, b, tol=1e-12):
    assert (np.isnan(a) == np.isnan(b)).all()
    ok = ~np.isnan(a)
    if ok.any():
        assert np.max(np.abs(a[ok] - b[ok])) <= tol


@pytest.mark.parametrize("name,code", sorted(K.UNARY_CODES.items()))
@pytest.mark.parametrize("window", [2, 5, 21])
def test_unary(name, code, window):
    for ties in (False, True):
        x = data(ties=ties)
        same(K.ts_unary_loop(x, window, code), K.ts_unary_numpy(x, window, code), 1e-9)


@pytest.mark.parametrize("name,code", sorted(K.BINARY_CODES.items()))
@pytest.mark.parametrize("window", [3, 10])
def test_binary(name, code, window):
    x, y = data(), data()
    same(K.ts_binary_loop(x, y, window, code), K.ts_binary_numpy(x, y, window, code), 1e-8)


def test_macd_rsi_rank():
    x = data(ties=True)
    same(K.ts_macd_loop(x, 3, 8), K.ts_macd_numpy(x, 3, 8), 1e-12)
    same(K.ta_rsi_loop(x, 6), K.ta_rsi_numpy(x, 6), 1e-9)
    same(K.cs_rank_loop(x), K.cs_rank_numpy(x), 0)
