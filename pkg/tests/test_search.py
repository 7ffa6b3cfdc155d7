import json

import numpy as np
import pytest

from alphaforge.backtest import signal_to_weights, split_reports
from alphaforge.errors import InvalidConfig, MissingReturns
from alphaforge.evaluate import evaluate
from alphaforge.lang import canonicalize, expr_hash, parse
from alphaforge.search import AlphaArchive, Scorer, SearchConfig, accept, hill_climb, mse_score

from conftest import make_panel


def test_accept_examples():
    assert accept(1.0, 2.0, 0.5, 0.5)
    assert accept(2.0, 2.0, 0.05, 0.03)
    assert not accept(2.0, 1.9, 0.1, 0.0)
    assert not accept(2.0, 2.0, 0.03, 0.05)


def test_config_validation():
    with pytest.raises(InvalidConfig):
        SearchConfig(eval_budget=0)
    with pytest.raises(InvalidConfig):
        SearchConfig(objective="profit")
    assert SearchConfig(sharpe_threshold=2.0).sharpe_threshold == 2.0


def test_archive_properties(small_archive, small_planted):
    archive, split = small_archive
    cfg = SearchConfig(seed=5, eval_budget=300, n_restarts=30, sharpe_threshold=1.0, max_depth=3)
    assert len(archive) >= 10
    assert archive.n_evaluated <= cfg.eval_budget
    keys = [e.key for e in archive.entries]
    assert len(keys) == len(set(keys))
    assert all(e.reports["validation"].sharpe >= 1.0 for e in archive.entries)
    for traj in archive.trajectories.values():
        scores = [s for s, _ in traj]
        for (s0, t0), (s1, t1) in zip(traj, traj[1:]):
            assert accept(s0, s1, t0, t1)
        assert scores == sorted(scores)


def test_archive_purity(small_archive, small_planted):
    archive, split = small_archive
    for e in archive.entries[:20]:
        sig = evaluate(parse(e.text), small_planted)
        reports = {k: v[1] for k, v in split_reports(signal_to_weights(sig), small_planted, split).items()}
        assert reports == e.reports


def test_determinism(small_planted, small_archive):
    archive, split = small_archive
    cfg = SearchConfig(seed=5, eval_budget=300, n_restarts=30, sharpe_threshold=1.0, max_depth=3)
    again = hill_climb(cfg, small_planted, split)
    assert [e.to_json() for e in again.entries] == [e.to_json() for e in archive.entries]


def test_budget_counts_evaluate_calls(small_planted, small_archive):
    _, split = small_archive
    cfg = SearchConfig(seed=9, eval_budget=57, n_restarts=10, steps_per_restart=20, patience=5)
    scorer = Scorer(small_planted, split)
    arch = hill_climb(cfg, small_planted, split, scorer=scorer)
    assert arch.n_evaluated == 57
    assert scorer.n_evaluate_calls <= 57


def test_threshold_99_is_empty(small_planted, small_archive):
    _, split = small_archive
    arch = hill_climb(SearchConfig(seed=1, eval_budget=40, sharpe_threshold=99), small_planted, split)
    assert len(arch) == 0


def test_jsonl_roundtrip(tmp_path, small_archive):
    archive, _ = small_archive
    path = tmp_path / "a.jsonl"
    archive.write_jsonl(path)
    back = AlphaArchive.read_jsonl(path)
    assert [e.text for e in back.entries] == [e.text for e in archive.entries]
    assert [e.reports for e in back.entries] == [e.reports for e in archive.entries]
    rec = json.loads(path.read_text().splitlines()[0])
    assert set(rec) == {"expr", "hash", "metrics", "restart"}


def test_canonical_dedup_hash():
    assert expr_hash(canonicalize(parse("add(volume, close)"))) == expr_hash(parse("add(close, volume)"))


def test_mse_objective(small_planted, small_archive):
    _, split = small_archive
    good = mse_score(evaluate(parse("sig"), small_planted), small_planted, split.validation)
    bad = mse_score(evaluate(parse("neg(sig)"), small_planted), small_planted, split.validation)
    assert good > bad
    arch = hill_climb(SearchConfig(seed=2, eval_budget=60, objective="negative_mse"), small_planted, split)
    assert arch.n_evaluated == 60


def test_missing_returns(small_archive):
    _, split = small_archive
    with pytest.raises(MissingReturns):
        Scorer(make_panel({"close": np.ones((100, 3))}), split)
