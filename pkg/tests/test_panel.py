import datetime as dt

import numpy as np
import pytest

from alphaforge.errors import DuplicateRecord, EmptyInput, InvalidConfig, MalformedRow, UnknownField
from alphaforge.panel import (SyntheticConfig, TradingCalendar, generate_synthetic, get_field, ingest_csv,
                              write_long_csv)


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


FIXTURE = "date,symbol,field,value\n2020-01-02,A,close,10\n2020-01-03,A,close,11\n2020-01-02,B,close,5\n"


def test_long_csv_alignment(tmp_path):
    p = ingest_csv(write(tmp_path, FIXTURE))
    close = get_field(p, "close").values
    assert p.symbols == ("A", "B")
    assert p.calendar.dates == (dt.date(2020, 1, 2), dt.date(2020, 1, 3))
    assert close[0, 0] == 10 and close[1, 0] == 11 and close[0, 1] == 5
    assert np.isnan(close[1, 1])


def test_returns_derived_with_missing_first_row(tmp_path):
    p = ingest_csv(write(tmp_path, FIXTURE))
    r = get_field(p, "returns").values
    assert np.isnan(r[0]).all()
    assert r[1, 0] == pytest.approx(0.1)
    assert np.isnan(r[1, 1])


def test_duplicate_record(tmp_path):
    with pytest.raises(DuplicateRecord):
        ingest_csv(write(tmp_path, FIXTURE + "2020-01-02,A,close,12\n"))


def test_malformed_and_empty(tmp_path):
    with pytest.raises(MalformedRow):
        ingest_csv(write(tmp_path, "date,symbol,field,value\n2020-13-45,A,close,1\n"))
    with pytest.raises(MalformedRow):
        ingest_csv(write(tmp_path, "date,symbol,field,value\n2020-01-02,A,close,abc\n"))
    with pytest.raises(EmptyInput):
        ingest_csv(write(tmp_path, "date,symbol,field,value\n"))


def test_order_insensitive(tmp_path):
    lines = FIXTURE.strip().split("\n")
    shuffled = "\n".join([lines[0]] + lines[1:][::-1]) + "\n"
    a = ingest_csv(write(tmp_path, FIXTURE, "a.csv"))
    b = ingest_csv(write(tmp_path, shuffled, "b.csv"))
    assert a.equals(b)


def test_wide_layout(tmp_path):
    text = ("date,symbol,open,high,low,close,volume\n"
            "2020-01-03,A,1,2,0.5,1.5,100\n2020-01-02,A,1,2,0.5,1.0,200\n")
    p = ingest_csv(write(tmp_path, text), layout="wide_ohlcv")
    assert set(p.field_names) >= {"open", "high", "low", "close", "volume", "returns"}
    assert get_field(p, "close").values[:, 0].tolist() == [1.0, 1.5]


def test_groups_file(tmp_path):
    g = write(tmp_path, "symbol,group\nA,tech\nB,energy\n", "g.csv")
    p = ingest_csv(write(tmp_path, FIXTURE), groups_path=g)
    assert p.has_groups and p.groups["A"] == "tech"


def test_get_field_unknown(tmp_path):
    p = ingest_csv(write(tmp_path, FIXTURE))
    with pytest.raises(UnknownField):
        get_field(p, "nope")


def test_fields_read_only(tmp_path):
    p = ingest_csv(write(tmp_path, FIXTURE))
    with pytest.raises(ValueError):
        get_field(p, "close").values[0, 0] = 1.0


def test_calendar_must_increase():
    with pytest.raises(InvalidConfig):
        TradingCalendar((dt.date(2020, 1, 3), dt.date(2020, 1, 2)))


def test_long_csv_roundtrip(tmp_path, small_planted):
    path = tmp_path / "p.csv"
    write_long_csv(small_planted, path)
    back = ingest_csv(path)
    for name in small_planted.field_names:
        np.testing.assert_array_equal(back.fields[name], small_planted.fields[name])


def test_synthetic_deterministic_and_seed_sensitive():
    cfg = SyntheticConfig(seed=4, n_symbols=5, n_days=40)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    assert a.equals(b)
    c = generate_synthetic(SyntheticConfig(seed=5, n_symbols=5, n_days=40))
    assert not np.array_equal(a.fields["close"], c.fields["close"])
    assert np.isnan(get_field(a, "returns").values[0]).all()
    shapes = {f.shape for f in a.fields.values()}
    assert shapes == {(40, 5)}


def test_synthetic_config_validation():
    for bad in (dict(n_days=10), dict(n_symbols=2), dict(signal_strength=1.5), dict(noise_vol=0)):
        with pytest.raises(InvalidConfig):
            generate_synthetic(SyntheticConfig(**bad))


def _naive_rank(values):
    return [sum(1 for w in values if w < v) + (sum(1 for w in values if w == v) - 1) / 2 for v in values]


def _naive_ic(sig, ret):
    """Mean daily Spearman correlation by explicit loops."""
    ics = []
    for t in range(sig.shape[0] - 1):
        a = _naive_rank(list(sig[t]))
        b = _naive_rank(list(ret[t + 1]))
        ma, mb = sum(a) / len(a), sum(b) / len(b)
        cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
        va = sum((x - ma) ** 2 for x in a)
        vb = sum((y - mb) ** 2 for y in b)
        ics.append(cov / (va * vb) ** 0.5)
    return sum(ics) / len(ics)


def test_planted_rank_ic(planted):
    ic = _naive_ic(planted.fields["sig"], planted.fields["returns"])
    assert abs(ic - 0.29) <= 0.05


def test_null_signal_uncorrelated():
    p = generate_synthetic(SyntheticConfig(seed=2, n_symbols=50, n_days=600, signal_strength=0.0))
    sig, ret = p.fields["sig"], p.fields["returns"]
    corr = [np.corrcoef(sig[t], ret[t + 1])[0, 1] for t in range(599)]
    assert abs(np.mean(corr)) < 3 / np.sqrt(600)
