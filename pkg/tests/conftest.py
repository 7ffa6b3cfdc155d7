import numpy as np
import pytest

from alphaforge.backtest import split_sample
from alphaforge.panel import PanelSet, SyntheticConfig, TradingCalendar, business_days, generate_synthetic


def make_panel(fields, groups=None, start="2020-01-01", symbols=None):
    """PanelSet from a dict of equally shaped arrays."""
    first = next(iter(fields.values()))
    n, m = np.shape(first)
    symbols = symbols or tuple(f"s{j}" for j in range(m))
    cal = TradingCalendar(business_days(start, n))
    return PanelSet(cal, tuple(symbols), {k: np.asarray(v, dtype=float) for k, v in fields.items()}, groups)


def random_panel(seed, n=20, m=10, missing=0.1, groups=True):
    rng = np.random.default_rng(seed)
    fields = {"x": rng.normal(size=(n, m)), "y": rng.normal(size=(n, m)), "z": np.exp(rng.normal(size=(n, m)))}
    for f in fields.values():
        f[rng.random((n, m)) < missing] = np.nan
    g = {f"s{j}": f"g{j % 3}" for j in range(m)} if groups else None
    return make_panel(fields, g)


@pytest.fixture(scope="session")
def planted():
    return generate_synthetic(SyntheticConfig(seed=0, n_symbols=50, n_days=1500, signal_strength=0.3))


@pytest.fixture(scope="session")
def planted_split(planted):
    return split_sample(planted.calendar)


@pytest.fixture(scope="session")
def small_planted():
    return generate_synthetic(SyntheticConfig(seed=3, n_symbols=20, n_days=300, signal_strength=0.3))


@pytest.fixture(scope="session")
def small_archive(small_planted):
    from alphaforge.search import SearchConfig, hill_climb

    split = split_sample(small_planted.calendar)
    cfg = SearchConfig(seed=5, eval_budget=300, n_restarts=30, sharpe_threshold=1.0, max_depth=3)
    return hill_climb(cfg, small_planted, split), split


# ------------------------------------------------------------ acceptance report

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    prev = _ACCEPTANCE.get(n, (title, True))
    ok = prev[1] and not rep.failed
    if rep.when == "setup" and rep.passed:
        ok = prev[1]
    _ACCEPTANCE[n] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
