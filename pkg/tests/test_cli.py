import csv
import json

import numpy as np
import pytest

from alphaforge.backtest import split_sample, signal_to_weights
from alphaforge.cli import load_config, main
from alphaforge.errors import InvalidConfig
from alphaforge.panel import SyntheticConfig, generate_synthetic

SMALL = {
    "data": {"synthetic": {"n_symbols": 20, "n_days": 400, "signal_strength": 0.3}},
    "search": {"eval_budget": 300, "n_restarts": 20, "sharpe_threshold": 1.0},
    "ensemble": {"n_trials": 12, "budget": 6, "max_train_rows": 2000},
    "allocation": {"n_books": 5, "mvo_steps": 500},
}


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    cfg = write_config(d / "cfg.json", SMALL)
    assert main(["run-all", "--config", cfg, "--seed", "7", "--out", str(d / "out")]) == 0
    return d


def test_run_all_outputs(run_dir):
    out = run_dir / "out"
    for name in ("archive.jsonl", "study.jsonl", "best_ensemble.json", "best_ensemble_test_pnl.csv",
                 "ensemble_search.json", "quality/close.json", "quality/windows.json",
                 "allocation/comparison.csv", "allocation/weights.json"):
        assert (out / name).exists(), name
    study = [json.loads(line) for line in (out / "study.jsonl").read_text().splitlines()]
    assert len(study) == 12


def test_test_pnl_one_row_per_test_date(run_dir):
    panel = generate_synthetic(SyntheticConfig(n_symbols=20, n_days=400, signal_strength=0.3, seed=7))
    split = split_sample(panel.calendar)
    rows = (run_dir / "out" / "best_ensemble_test_pnl.csv").read_text().splitlines()
    assert len(rows) - 1 == split.test[1] - split.test[0]
    assert rows[1].split(",")[0] == panel.calendar.iso()[split.test[0]]


def test_synthetic_close_frequency(run_dir):
    recs = json.loads((run_dir / "out" / "quality" / "close.json").read_text())
    pooled = [r for r in recs if r["symbol"] == "__pooled__"][0]
    assert pooled["frequency_ratio"] == pytest.approx(1.0, abs=0.01)


def test_weights_sum_to_one(run_dir):
    weights = json.loads((run_dir / "out" / "allocation" / "weights.json").read_text())
    assert len(weights) == 15
    for scheme, body in weights.items():
        w = np.array(body["weights"])
        assert (w >= 0).all() and abs(w.sum() - 1) <= 1e-9, scheme


def test_quality_fixture_csv(tmp_path, capsys):
    lines = ["date,symbol,field,value"]
    for i in range(10):
        d = f"2020-01-{i + 1:02d}"
        lines.append(f"{d},AAA,close,{100 + i}")
        if i not in (3, 7):
            lines.append(f"{d},AAA,crafted,{i}")
    (tmp_path / "data.csv").write_text("\n".join(lines) + "\n")
    cfg = write_config(tmp_path / "c.json", {"data": {"path": str(tmp_path / "data.csv")}})
    assert main(["quality", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    recs = json.loads((tmp_path / "o" / "quality" / "crafted.json").read_text())
    pooled = [r for r in recs if r["symbol"] == "__pooled__"][0]
    assert pooled["coverage_ratio"] == 0.8


def test_missing_data_file_exit_3(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    cfg = write_config(tmp_path / "c.json", {"data": {"path": str(missing)}})
    assert main(["quality", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("cfg", [
    {"bogus": 1},
    {"search": {"eval_budget": 10, "colour": "red"}},
    {"search": {"seed": 3}},
    {"allocation": {"schemes": ["nope"]}},
    {"split": {"fractions": [0.5, 0.5]}},
    {"ensemble": {"horizon": 0}},
])
def test_config_errors_exit_2(tmp_path, cfg):
    path = write_config(tmp_path / "c.json", cfg)
    assert main(["search", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_config_missing_and_malformed(tmp_path):
    assert main(["search", "--config", str(tmp_path / "absent.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["search", "--config", str(tmp_path / "bad.json")]) == 2
    with pytest.raises(InvalidConfig):
        load_config(write_config(tmp_path / "c.json", {"data": {"where": "x"}}))


def test_seed_flows_to_search_and_data(tmp_path):
    cfg = load_config(write_config(tmp_path / "c.json", {"seed": 4}), seed=9)
    assert cfg.seed == 9 and cfg.search.seed == 9 and cfg.synthetic.seed == 9


def test_threshold_99_gives_empty_archive(tmp_path):
    cfg = write_config(tmp_path / "c.json", {**SMALL, "search": {"eval_budget": 50, "sharpe_threshold": 99.0}})
    assert main(["search", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "archive.jsonl").read_text() == ""


def test_search_byte_identical(tmp_path, run_dir):
    cfg = write_config(tmp_path / "c.json", SMALL)
    assert main(["search", "--config", cfg, "--seed", "7", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "archive.jsonl").read_bytes() == (run_dir / "out" / "archive.jsonl").read_bytes()


def test_archive_of_nine_exit_4(tmp_path, run_dir):
    lines = (run_dir / "out" / "archive.jsonl").read_text().splitlines()
    assert len(lines) >= 10
    (tmp_path / "nine.jsonl").write_text("\n".join(lines[:9]) + "\n")
    cfg = write_config(tmp_path / "c.json", SMALL)
    assert main(["ensemble", "--config", cfg, "--seed", "7", "--out", str(tmp_path),
                 "--archive", str(tmp_path / "nine.jsonl")]) == 4
    assert main(["ensemble", "--config", cfg, "--out", str(tmp_path),
                 "--archive", str(tmp_path / "absent.jsonl")]) == 4


def test_ensemble_study_reproducible(tmp_path, run_dir):
    cfg = write_config(tmp_path / "c.json", SMALL)
    assert main(["ensemble", "--config", cfg, "--seed", "7", "--out", str(tmp_path), "--threads", "2",
                 "--archive", str(run_dir / "out" / "archive.jsonl")]) == 0
    for name in ("study.jsonl", "best_ensemble.json", "ensemble_search.json"):
        assert (tmp_path / name).read_bytes() == (run_dir / "out" / name).read_bytes()


def _write_books(tmp_path, panel, k, drop_last_date=False):
    rng = np.random.default_rng(0)
    dates = panel.calendar.iso()
    if drop_last_date:
        dates = dates[:-1]
    paths = []
    for b in range(k):
        book = signal_to_weights(rng.normal(size=panel.shape))
        p = tmp_path / f"book{b}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "symbol", "weight"])
            for i, d in enumerate(dates):
                for j, s in enumerate(panel.symbols):
                    w.writerow([d, s, repr(float(book[i, j]))])
        paths.append(str(p))
    return paths


@pytest.fixture(scope="module")
def book_panel():
    return generate_synthetic(SyntheticConfig(n_symbols=8, n_days=120, signal_strength=0.3, seed=1))


BOOK_CFG = {"seed": 1, "data": {"synthetic": {"n_symbols": 8, "n_days": 120, "signal_strength": 0.3}},
            "allocation": {"mvo_steps": 200}}


def test_allocate_three_books(tmp_path, book_panel):
    books = _write_books(tmp_path, book_panel, 3)
    cfg = write_config(tmp_path / "c.json", {**BOOK_CFG, "allocation": {"mvo_steps": 200, "books": books}})
    assert main(["allocate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.reader(open(tmp_path / "o" / "allocation" / "comparison.csv")))
    assert len(rows) == 1 + 15
    assert [r[0] for r in rows[1:]][-4:] == ["equal", "inverse_volatility", "risk_parity", "mvo"]
    pnl = (tmp_path / "o" / "allocation" / "pnl_mvo.csv").read_text().splitlines()
    assert len(pnl) == 1 + 120


def test_allocate_single_book_exit_5(tmp_path, book_panel):
    books = _write_books(tmp_path, book_panel, 1)
    cfg = write_config(tmp_path / "c.json", {**BOOK_CFG, "allocation": {"books": books}})
    assert main(["allocate", "--config", cfg, "--out", str(tmp_path / "o")]) == 5


def test_allocate_calendar_mismatch_exit_5(tmp_path, book_panel):
    books = _write_books(tmp_path, book_panel, 2, drop_last_date=True)
    cfg = write_config(tmp_path / "c.json", {**BOOK_CFG, "allocation": {"books": books}})
    assert main(["allocate", "--config", cfg, "--out", str(tmp_path / "o")]) == 5
    p = tmp_path / "book0.csv"
    p.write_text(p.read_text() + "1999-01-01,S000,0.1\n")
    assert main(["allocate", "--config", cfg, "--out", str(tmp_path / "o")]) == 5


def test_gen_data(tmp_path):
    cfg = write_config(tmp_path / "c.json", BOOK_CFG)
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "panel.csv").read_text().startswith("date,symbol,field,value\n")
