"""Transformer-based hyper-relational knowledge graph completion on a small numpy autodiff core."""
from .hkg import HkgGraph, Statement, Vocabulary, degree, intern, neighbors, qualifier_ratio
from .data import (
    DatasetBundle, DatasetStats, add_inverse_relations, build_filter_index, compute_stats,
    load_bundle, parse_statement_file, slice_fixed_percentage, slice_fixed_qualifier, slice_low_degree,
)
from .composition import CompositionKind, compose
from .model import HyperFormerModel, ModelConfig, count_model_params
from .config import TrainConfig, load_config
from .train import AdamW, fit, lr_schedule
from .evaluation import RankingReport, evaluate, hits_at, mrr, rank_target

__version__ = "0.1.0"
