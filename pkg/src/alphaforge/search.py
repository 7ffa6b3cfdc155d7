"""Randomized hill climbing over expression space with a threshold archive."""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backtest import BacktestReport, signal_to_weights, split_reports
from .errors import InvalidConfig, MissingReturns
from .evaluate import cs_zscore, evaluate
from .generate import mutate, random_instantiate
from .lang import PanelSchema, canonicalize, expr_hash, parse, to_text
from .quality import QualityConfig, evaluate_field, recommend_windows
from .panel import get_field
from .seeds import derive_seed

log = logging.getLogger(__name__)

TIE_TOL = 1e-12
OBJECTIVES = ("validation_sharpe", "negative_mse")


@dataclass(frozen=True)
class SearchConfig:
    seed: int = 0
    n_restarts: int = 100
    steps_per_restart: int = 200
    patience: int = 40
    eval_budget: int = 2000
    sharpe_threshold: float = 1.5
    objective: str = "validation_sharpe"
    max_depth: int = 4
    cost_bps: float = 0.0

    def __post_init__(self):
        for name in ("n_restarts", "steps_per_restart", "patience", "eval_budget", "max_depth"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.objective not in OBJECTIVES:
            raise InvalidConfig(f"objective must be one of {OBJECTIVES}")
        if self.cost_bps < 0:
            raise InvalidConfig("cost_bps must be >= 0")


def accept(old_score: float, new_score: float, old_turnover: float, new_turnover: float) -> bool:
    """Strict improvement, or an exact tie resolved in favour of lower turnover."""
    if new_score > old_score:
        return True
    return abs(new_score - old_score) <= TIE_TOL and new_turnover < old_turnover


@dataclass
class ArchiveEntry:
    expr: object  # canonical AST
    reports: dict  # split name -> BacktestReport
    pnls: Optional[dict] = None  # split name -> PnlSeries, absent when loaded from disk
    restart: int = -1

    @property
    def text(self):
        return to_text(self.expr)

    @property
    def key(self):
        return expr_hash(self.expr)

    def to_json(self):
        return json.dumps({
            "expr": self.text,
            "hash": self.key,
            "restart": self.restart,
            "metrics": {k: v.to_dict() for k, v in self.reports.items()},
        }, sort_keys=True)


@dataclass
class AlphaArchive:
    entries: list = field(default_factory=list)
    trajectories: dict = field(default_factory=dict)  # restart -> accepted (score, turnover)
    n_evaluated: int = 0
    threshold: float = 1.5

    def __len__(self):
        return len(self.entries)

    def keys(self):
        return {e.key for e in self.entries}

    def best(self, split="validation"):
        return max(self.entries, key=lambda e: e.reports[split].sharpe, default=None)

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(e.to_json() + "\n")

    @classmethod
    def read_jsonl(cls, path):
        entries = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                reports = {k: BacktestReport(**v) for k, v in rec["metrics"].items()}
                entries.append(ArchiveEntry(parse(rec["expr"]), reports, None, rec.get("restart", -1)))
        return cls(entries)


def panel_windows(panel, cfg: QualityConfig = QualityConfig()) -> dict:
    """Recommended window menu per field, from the field's update frequency."""
    return {name: tuple(sorted(recommend_windows(evaluate_field(get_field(panel, name), cfg))))
            for name in panel.field_names}


def mse_score(signal, panel, rows) -> float:
    """Negative MSE between z-scored signal at t and z-scored return at t+1."""
    start, stop = rows
    stop = min(stop, signal.shape[0] - 1)
    if stop <= start:
        return -1e9
    zs = cs_zscore(signal[start:stop])
    zr = cs_zscore(np.asarray(panel.fields["returns"][start + 1:stop + 1]))
    d = zs - zr
    d = d[~np.isnan(d)]
    return -float(np.mean(d * d)) if d.size else -1e9


class Scorer:
    """Evaluate -> weights -> per-split reports, memoized by canonical text."""

    def __init__(self, panel, split, objective="validation_sharpe", cost_bps=0.0):
        if "returns" not in panel.fields:
            raise MissingReturns("panel has no 'returns' field")
        self.panel = panel
        self.split = split
        self.objective = objective
        self.cost_bps = cost_bps
        self.cache = {}
        self.n_evaluate_calls = 0

    def __call__(self, expr):
        key = to_text(expr)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        signal = evaluate(expr, self.panel, check=False)
        self.n_evaluate_calls += 1
        per_split = split_reports(signal_to_weights(signal), self.panel, self.split, self.cost_bps)
        reports = {k: v[1] for k, v in per_split.items()}
        pnls = {k: v[0] for k, v in per_split.items()}
        if self.objective == "validation_sharpe":
            score = reports["validation"].sharpe
        else:
            score = mse_score(signal, self.panel, self.split.validation)
        out = (score, reports, pnls)
        if len(self.cache) > 4096:
            self.cache.clear()
        self.cache[key] = out
        return out


def hill_climb(cfg: SearchConfig, panel, split, windows=None, scorer=None) -> AlphaArchive:
    """Restarted stochastic hill climbing; every threshold-clearing candidate is archived.

    Each restart draws a random expression and proposes single mutations,
    keeping a proposal only when ``accept`` says it improves the validation
    objective. ``patience`` consecutive rejections end a restart. Restart
    ``r`` uses seed ``derive_seed(cfg.seed, r)``, so restarts are
    independent of each other.
    """
    schema = PanelSchema.of(panel)
    windows = panel_windows(panel) if windows is None else windows
    scorer = scorer or Scorer(panel, split, cfg.objective, cfg.cost_bps)
    archive = AlphaArchive(threshold=cfg.sharpe_threshold)
    seen = set()
    evals = 0

    def consider(expr, score_out, restart):
        _, reports, pnls = score_out
        key = expr_hash(expr)
        if reports["validation"].sharpe >= cfg.sharpe_threshold and key not in seen:
            seen.add(key)
            archive.entries.append(ArchiveEntry(expr, reports, pnls, restart))

    for r in range(cfg.n_restarts):
        if evals >= cfg.eval_budget:
            break
        rng = random.Random(derive_seed(cfg.seed, r))
        current = canonicalize(random_instantiate(rng.getrandbits(63), schema, windows, cfg.max_depth))
        cur = scorer(current)
        evals += 1
        consider(current, cur, r)
        trajectory = [(cur[0], cur[1]["validation"].turnover)]
        rejections, steps = 0, 1
        while steps < cfg.steps_per_restart and evals < cfg.eval_budget and rejections < cfg.patience:
            cand = canonicalize(mutate(rng.getrandbits(63), current, schema, windows, cfg.max_depth))
            out = scorer(cand)
            evals += 1
            steps += 1
            consider(cand, out, r)
            if accept(cur[0], out[0], cur[1]["validation"].turnover, out[1]["validation"].turnover):
                current, cur = cand, out
                trajectory.append((cur[0], cur[1]["validation"].turnover))
                rejections = 0
            else:
                rejections += 1
        archive.trajectories[r] = trajectory
        log.debug("restart %d: best %.3f after %d steps", r, cur[0], steps)
    archive.n_evaluated = evals
    return archive
