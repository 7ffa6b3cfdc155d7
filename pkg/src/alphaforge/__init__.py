"""Symbolic alpha mining, model ensembling and capital allocation on equity panels."""
from .allocation import (AlphaStats, MvoInputs, baseline_allocate, combine_books, compute_alpha_stats,
                         mvo_hill_climb, scheme_weight)
from .backtest import (BacktestReport, PnlSeries, SampleSplit, run_backtest, signal_to_weights, simulate,
                       split_sample)
from .ensemble import (EnsembleConfig, EnsembleSpec, SupervisedDataset, build_dataset, combine, ensemble_search,
                       fit_predict, random_composition_study)
from .evaluate import evaluate
from .generate import mutate, random_instantiate
from .lang import PanelSchema, canonicalize, expr_hash, parse, to_text, validate
from .models import ModelSpec, register_model
from .panel import PanelSet, SyntheticConfig, TradingCalendar, generate_synthetic, get_field, ingest_csv
from .quality import QualityConfig, evaluate_field, recommend_windows
from .reference import reference_evaluate
from .search import AlphaArchive, SearchConfig, accept, hill_climb

__version__ = "0.1.0"
