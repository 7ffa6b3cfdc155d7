import json
import math

import numpy as np
import pytest

from alphaforge.errors import InvalidConfig, NoData, ZeroExpected
from alphaforge.panel import PanelField
from alphaforge.quality import (QualityConfig, evaluate_field, evaluate_series, moment_skew_kurt,
                                recommend_windows)

NAN = float("nan")


def test_coverage():
    q = evaluate_series(np.array([1, 2, NAN, 4, 5, 6, NAN, 8, 9, 10.0]))
    assert q.coverage_ratio == 0.8 and q.missing_ratio == pytest.approx(0.2)


def test_constant_series():
    q = evaluate_series(np.array([5.0] * 5))
    assert q.frequency_ratio == 0 and q.duplicate_ratio == 1


def test_outlier_ratio():
    q = evaluate_series(np.array([1, 2, 3, 100.0]), QualityConfig(outlier_threshold=50))
    assert q.outlier_ratio == 0.25


def test_outlier_skipped_without_threshold():
    assert evaluate_series(np.array([1, 2, 3, 100.0])).outlier_ratio is None


def test_deviation_from_expected():
    q = evaluate_series(np.array([100, 110, 120.0]), QualityConfig(expected_median=100))
    assert q.deviation_from_expected == pytest.approx(0.10, abs=1e-15)


def test_max_gap():
    x = np.full(6, NAN)
    x[[0, 1, 5]] = 1.0
    assert evaluate_series(x).max_gap == 3
    assert evaluate_series(np.arange(6.0)).max_gap == 0


def test_errors():
    with pytest.raises(NoData):
        evaluate_series(np.full(4, NAN))
    with pytest.raises(ZeroExpected):
        evaluate_series(np.array([1.0, 2.0]), QualityConfig(expected_median=0))
    with pytest.raises(InvalidConfig):
        QualityConfig(outlier_threshold=-1)


def test_symmetric_moments():
    skew, kurt = moment_skew_kurt(np.array([-2, -1, 0, 1, 2.0]))
    assert abs(skew) < 1e-12
    # m2 = 2, m4 = (16+1+0+1+16)/5 = 6.8 -> 6.8/4 - 3
    assert kurt == pytest.approx(6.8 / 4 - 3, abs=1e-12)


def test_recommend_windows_table():
    assert recommend_windows(0.01) == {63, 252}
    assert recommend_windows(0.95) == {5, 10, 21, 63}
    assert recommend_windows(0.1) == {21, 63}
    assert recommend_windows(0.02) == {63, 252}
    assert recommend_windows(0.2) == {21, 63}


def test_pooled_invariant_to_empty_symbols():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(50, 3))
    v[rng.random(v.shape) < 0.2] = NAN
    a = evaluate_field(PanelField("x", v))
    b = evaluate_field(PanelField("x", np.column_stack([v, np.full(50, NAN)])))
    assert a.pooled == b.pooled


def test_self_concatenation_keeps_coverage():
    x = np.array([1, NAN, 3, 4, NAN, 6.0])
    assert evaluate_series(np.concatenate([x, x])).coverage_ratio == evaluate_series(x).coverage_ratio


def test_report_json_has_pooled_and_symbols(small_planted):
    rep = evaluate_field(PanelField("close", small_planted.fields["close"]))
    recs = json.loads(rep.to_json())
    assert len(recs) == small_planted.shape[1] + 1
    assert recs[-1]["symbol"] == "__pooled__"
    assert rep.frequency_ratio == pytest.approx(1.0)


def test_ratios_in_unit_interval():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.integers(0, 3, size=30).astype(float)
        x[rng.random(30) < 0.3] = NAN
        if np.isnan(x).all():
            continue
        q = evaluate_series(x, QualityConfig(outlier_threshold=1.5))
        for v in (q.coverage_ratio, q.missing_ratio, q.outlier_ratio, q.duplicate_ratio, q.frequency_ratio):
            assert 0 <= v <= 1
        assert math.isclose(q.coverage_ratio + q.missing_ratio, 1.0)
