"""Command-line driver: ``alphaforge <command> [--config PATH] [--seed N] [--threads N] [--out DIR]``.

Commands communicate through files in the output directory:

    gen-data  -> panel.csv (+ groups.csv)
    quality   -> quality/<field>.json, quality/windows.json
    search    -> archive.jsonl
    ensemble  -> study.jsonl, best_ensemble.json, best_ensemble_test_pnl.csv, ensemble_search.json
    allocate  -> allocation/comparison.csv, allocation/weights.json, allocation/pnl_<scheme>.csv
    run-all   -> quality, search, ensemble, allocate in sequence

Exit codes: 0 ok, 2 config, 3 data, 4 archive, 5 alignment.

Seeds: the global seed drives everything. The synthetic panel uses the
``data.synthetic.seed`` key when given, else the global seed; the search
uses the global seed; the study, the ensemble climb and the MVO climb use
``derive_seed(seed, k)`` with k = 2, 3, 4.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import allocation as alloc
from .backtest import SampleSplit, signal_to_weights, split_reports, split_sample, write_pnl_csv
from .ensemble import EnsembleConfig, EnsembleContext, ensemble_search, random_composition_study, write_study_jsonl
from .errors import (AlphaForgeError, ArchiveTooSmall, CalendarMismatch, InvalidConfig, MissingReturns, PanelError,
                     TooFewDates)
from .evaluate import evaluate
from .panel import SyntheticConfig, generate_synthetic, get_field, ingest_csv, write_long_csv
from .quality import QualityConfig, evaluate_field, recommend_windows
from .search import AlphaArchive, SearchConfig, hill_climb, panel_windows
from .seeds import derive_seed

log = logging.getLogger("alphaforge")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ARCHIVE, EXIT_ALIGN = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ config


@dataclasses.dataclass(frozen=True)
class AllocationConfig:
    schemes: tuple = alloc.SCHEMES
    n_books: int = 20
    books: tuple = ()  # optional CSV paths (date,symbol,weight); overrides the archive
    cost_bps: float = 0.0
    mvo_cardinality: int | None = None
    mvo_steps: int = 10_000
    mvo_step_size: float = 0.05

    def __post_init__(self):
        unknown = set(self.schemes) - set(alloc.SCHEMES)
        if unknown:
            raise InvalidConfig(f"unknown schemes {sorted(unknown)}")
        if self.n_books < 1 or self.mvo_steps < 0 or self.mvo_step_size <= 0 or self.cost_bps < 0:
            raise InvalidConfig("allocation settings out of range")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data_path: str | None = None
    layout: str = "long"
    groups_path: str | None = None
    synthetic: SyntheticConfig = SyntheticConfig()
    fractions: tuple = (0.6, 0.2, 0.2)
    quality: QualityConfig = QualityConfig()
    search: SearchConfig = SearchConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    allocation: AllocationConfig = AllocationConfig()
    out: str = "out"


_SECTIONS = {"seed", "data", "split", "quality", "search", "ensemble", "allocation", "out"}


def _build(cls, raw, where, drop=()):
    if not isinstance(raw, dict):
        raise InvalidConfig(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)} - set(drop)
    unknown = set(raw) - names
    if unknown:
        raise InvalidConfig(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
    except TypeError as exc:
        raise InvalidConfig(f"{where}: {exc}") from None


def load_config(path=None, seed=None, out=None) -> RunConfig:
    """Parse and fully validate a JSON run config; unknown keys are errors."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise InvalidConfig(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise InvalidConfig("config must be a JSON object")
    unknown = set(raw) - _SECTIONS
    if unknown:
        raise InvalidConfig(f"unknown top-level keys: {sorted(unknown)}")
    g_seed = int(seed if seed is not None else raw.get("seed", 0))

    data = dict(raw.get("data", {}))
    bad = set(data) - {"path", "layout", "groups_path", "synthetic"}
    if bad:
        raise InvalidConfig(f"unknown keys in data: {sorted(bad)}")
    syn_raw = dict(data.get("synthetic", {}))
    syn_raw.setdefault("seed", g_seed)
    synthetic = _build(SyntheticConfig, syn_raw, "data.synthetic")
    synthetic.validate()
    if data.get("layout", "long") not in ("long", "wide_ohlcv"):
        raise InvalidConfig(f"unknown layout {data.get('layout')!r}")

    split = dict(raw.get("split", {}))
    if set(split) - {"fractions"}:
        raise InvalidConfig(f"unknown keys in split: {sorted(set(split) - {'fractions'})}")
    fractions = tuple(split.get("fractions", (0.6, 0.2, 0.2)))
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise InvalidConfig("split.fractions must be three positive numbers summing to 1")

    search_raw = dict(raw.get("search", {}))
    if "seed" in search_raw:
        raise InvalidConfig("search.seed is set by the global seed")
    search = _build(SearchConfig, {**search_raw, "seed": g_seed}, "search")

    return RunConfig(
        seed=g_seed,
        data_path=data.get("path"),
        layout=data.get("layout", "long"),
        groups_path=data.get("groups_path"),
        synthetic=synthetic,
        fractions=fractions,
        quality=_build(QualityConfig, raw.get("quality", {}), "quality"),
        search=search,
        ensemble=_build(EnsembleConfig, raw.get("ensemble", {}), "ensemble"),
        allocation=_build(AllocationConfig, raw.get("allocation", {}), "allocation"),
        out=str(out if out is not None else raw.get("out", "out")),
    )


# -------------------------------------------------------------------- data


def load_panel(cfg: RunConfig):
    if cfg.data_path is None:
        return generate_synthetic(cfg.synthetic)
    if not Path(cfg.data_path).exists():
        raise CliError(f"data file not found: {cfg.data_path}", EXIT_DATA)
    if cfg.groups_path is not None and not Path(cfg.groups_path).exists():
        raise CliError(f"groups file not found: {cfg.groups_path}", EXIT_DATA)
    return ingest_csv(cfg.data_path, cfg.layout, cfg.groups_path)


def _split(cfg, panel) -> SampleSplit:
    return split_sample(panel.calendar, cfg.fractions)


def _out(cfg, *parts) -> Path:
    p = Path(cfg.out, *parts)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _load_archive(cfg, archive_path):
    path = Path(archive_path) if archive_path else Path(cfg.out, "archive.jsonl")
    if not path.exists():
        raise CliError(f"archive not found: {path}", EXIT_ARCHIVE)
    try:
        return AlphaArchive.read_jsonl(path)
    except (ValueError, KeyError, AlphaForgeError) as exc:
        raise CliError(f"{path}: unreadable archive ({exc})", EXIT_ARCHIVE) from None


# ---------------------------------------------------------------- commands


def cmd_gen_data(cfg: RunConfig, args):
    panel = generate_synthetic(cfg.synthetic)
    path = _out(cfg, "panel.csv")
    write_long_csv(panel, path)
    if panel.has_groups:
        with open(_out(cfg, "groups.csv"), "w") as fh:
            fh.write("symbol,group\n")
            for s in panel.symbols:
                fh.write(f"{s},{panel.groups[s]}\n")
    print(f"wrote {path} ({panel.shape[0]} dates x {panel.shape[1]} symbols)")


def cmd_quality(cfg: RunConfig, args, panel=None):
    panel = panel or load_panel(cfg)
    windows = {}
    for name in panel.field_names:
        rep = evaluate_field(get_field(panel, name), cfg.quality)
        _out(cfg, "quality", f"{name}.json").write_text(rep.to_json() + "\n")
        windows[name] = sorted(recommend_windows(rep))
    _out(cfg, "quality", "windows.json").write_text(json.dumps(windows, sort_keys=True, indent=1) + "\n")
    print(f"quality reports for {len(windows)} fields in {Path(cfg.out, 'quality')}")


def cmd_search(cfg: RunConfig, args, panel=None):
    panel = panel or load_panel(cfg)
    split = _split(cfg, panel)
    archive = hill_climb(cfg.search, panel, split, panel_windows(panel, cfg.quality))
    path = _out(cfg, "archive.jsonl")
    archive.write_jsonl(path)
    best = archive.best()
    best_s = f"{best.reports['validation'].sharpe:.4f}" if best else "n/a"
    print(f"evaluated {archive.n_evaluated}, archived {len(archive)}, best validation sharpe {best_s}")
    return archive


def cmd_ensemble(cfg: RunConfig, args, panel=None, archive=None):
    archive = archive if archive is not None else _load_archive(cfg, getattr(args, "archive", None))
    panel = panel or load_panel(cfg)
    split = _split(cfg, panel)
    try:
        ctx = EnsembleContext(archive, panel, split, cfg.ensemble)
        trials = random_composition_study(derive_seed(cfg.seed, 2), archive, panel, split, cfg.ensemble.n_trials,
                                          cfg.ensemble, getattr(args, "threads", 1), ctx)
    except ArchiveTooSmall as exc:
        raise CliError(str(exc), EXIT_ARCHIVE) from None
    write_study_jsonl(trials, _out(cfg, "study.jsonl"), archive)
    top = trials[0]
    signal, _ = ctx.signal(top.spec, top.seed, ("test",))
    per = split_reports(signal_to_weights(signal), panel, split, cfg.ensemble.cost_bps)
    start, stop = split.test
    write_pnl_csv(per["test"][0], panel.calendar.iso()[start:stop], _out(cfg, "best_ensemble_test_pnl.csv"))
    _out(cfg, "best_ensemble.json").write_text(top.to_json(archive) + "\n")
    res = ensemble_search(derive_seed(cfg.seed, 3), archive, panel, split, cfg.ensemble.budget, cfg.ensemble, ctx)
    _out(cfg, "ensemble_search.json").write_text(json.dumps({
        "spec": res.spec.to_dict(archive), "validation": res.report.to_dict(),
        "trajectory": res.trajectory, "n_evaluated": res.n_evaluated}, sort_keys=True) + "\n")
    print(f"study: {len(trials)} trials, top validation sharpe {top.validation.sharpe:.4f}, "
          f"test sharpe {top.test.sharpe:.4f}; climb: {res.report.sharpe:.4f}")


def _read_book(path, panel):
    p = Path(path)
    if not p.exists():
        raise CliError(f"book file not found: {path}", EXIT_DATA)
    dates = {d: i for i, d in enumerate(panel.calendar.iso())}
    syms = {s: j for j, s in enumerate(panel.symbols)}
    book = np.zeros(panel.shape)
    seen = set()
    with open(p) as fh:
        header = fh.readline().strip().split(",")
        if header != ["date", "symbol", "weight"]:
            raise CliError(f"{path}: expected header date,symbol,weight", EXIT_DATA)
        for line in fh:
            if not line.strip():
                continue
            d, s, w = line.strip().split(",")
            if d not in dates or s not in syms:
                raise CliError(f"{path}: {d},{s} is not on the panel calendar", EXIT_ALIGN)
            seen.add(d)
            book[dates[d], syms[s]] = float(w)
    if len(seen) != len(dates):
        raise CliError(f"{path}: book covers {len(seen)} of {len(dates)} dates", EXIT_ALIGN)
    return book


def cmd_allocate(cfg: RunConfig, args, panel=None, archive=None):
    panel = panel or load_panel(cfg)
    if "returns" not in panel.fields:
        raise MissingReturns("panel has no 'returns' field")
    split = _split(cfg, panel)
    ac = cfg.allocation
    if ac.books:
        books = [_read_book(p, panel) for p in ac.books]
        labels = list(ac.books)
    else:
        archive = archive if archive is not None else _load_archive(cfg, getattr(args, "archive", None))
        order = sorted(range(len(archive)), key=lambda i: (-archive.entries[i].reports["validation"].sharpe, i))
        chosen = order[:ac.n_books]
        books = [signal_to_weights(evaluate(archive.entries[i].expr, panel, check=False)) for i in chosen]
        labels = [archive.entries[i].text for i in chosen]
    if len(books) < 2:
        raise CliError(f"allocation needs at least two books, got {len(books)}", EXIT_ALIGN)
    in_rows = (split.train[0], split.validation[1])
    mvo = {"cardinality": ac.mvo_cardinality, "n_steps": ac.mvo_steps, "step_size": ac.mvo_step_size}
    try:
        rows = alloc.compare_schemes(books, np.asarray(panel.fields["returns"]), in_rows, split.test,
                                     derive_seed(cfg.seed, 4), ac.schemes, alloc.BASELINES, mvo, ac.cost_bps)
    except alloc.ZeroVolatilityAsset as exc:
        raise CliError(f"allocation: {exc}", EXIT_DATA) from None
    alloc.write_comparison_csv(rows, _out(cfg, "allocation", "comparison.csv"))
    _out(cfg, "allocation", "weights.json").write_text(alloc.weights_json(rows, labels) + "\n")
    dates = panel.calendar.iso()
    for r in rows:
        write_pnl_csv(r.pnl, dates, _out(cfg, "allocation", f"pnl_{r.scheme}.csv"))
    best = max(rows, key=lambda r: r.in_sample.sharpe)
    print(f"allocated {len(books)} books with {len(rows)} schemes; best in-sample: {best.scheme} "
          f"(in {best.in_sample.sharpe:.4f}, out {best.out_sample.sharpe:.4f})")


def cmd_run_all(cfg: RunConfig, args):
    panel = load_panel(cfg)
    cmd_quality(cfg, args, panel)
    archive = cmd_search(cfg, args, panel)
    cmd_ensemble(cfg, args, panel, archive)
    cmd_allocate(cfg, args, panel, archive)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "quality": cmd_quality,
    "search": cmd_search,
    "ensemble": cmd_ensemble,
    "allocate": cmd_allocate,
    "run-all": cmd_run_all,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="alphaforge", description="Alpha mining, ensembling and allocation.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int, help="global seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("ensemble", "allocate"):
            p.add_argument("--archive", help="archive JSONL (default: <out>/archive.jsonl)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise InvalidConfig("--threads must be >= 1")
        cfg = load_config(args.config, args.seed, args.out)
        COMMANDS[args.command](cfg, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalendarMismatch as exc:
        print(f"alignment error: {exc}", file=sys.stderr)
        return EXIT_ALIGN
    except ArchiveTooSmall as exc:
        print(f"archive error: {exc}", file=sys.stderr)
        return EXIT_ARCHIVE
    except (PanelError, MissingReturns, TooFewDates, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
