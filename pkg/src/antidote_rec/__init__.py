"""Antidote rating data for matrix-factorization recommenders.

Optimize a small block of synthetic user rows so that retraining the
factorization jointly with them improves a social objective (polarization,
individual fairness, group fairness) of the system's predictions, and measure
the effect.
"""

from ._kernels import BACKEND as kernel_backend
from .antidote import (
    AntidoteMatrix,
    Budget,
    GdOptions,
    antidote_gradient,
    baseline_max,
    baseline_min,
    heuristic1,
    heuristic2,
    load_antidote_csv,
    optimize_antidote,
    random_antidote,
    save_antidote_csv,
)
from .config import ExperimentConfig
from .data import (
    GroupAssignment,
    RatingDataset,
    SplitPair,
    filter_top_items,
    filter_users,
    holdout_split,
    load_genre_groups,
    load_groups_csv,
    load_movielens,
    load_ratings_csv,
    save_groups_csv,
    save_ratings_csv,
)
from .errors import (
    AntidoteRecError,
    ConfigError,
    DataError,
    NumericalError,
    ParseError,
)
from .evaluation import (
    ExperimentReport,
    per_item_variance,
    rmse,
    run_experiment,
    topk_jaccard,
)
from .factorization import (
    AlsOptions,
    FactorModel,
    als_factorize,
    als_factorize_joint,
    factorization_objective,
    load_factors,
    predict,
    save_factors,
    validation_rmse_grid,
)
from .objectives import (
    ObjectiveSpec,
    gradient,
    group_unfairness,
    individual_unfairness,
    polarization,
)

__version__ = "0.1.0"

__all__ = [
    "AlsOptions",
    "AntidoteMatrix",
    "AntidoteRecError",
    "Budget",
    "ConfigError",
    "DataError",
    "ExperimentConfig",
    "ExperimentReport",
    "FactorModel",
    "GdOptions",
    "GroupAssignment",
    "NumericalError",
    "ObjectiveSpec",
    "ParseError",
    "RatingDataset",
    "SplitPair",
    "als_factorize",
    "als_factorize_joint",
    "antidote_gradient",
    "baseline_max",
    "baseline_min",
    "factorization_objective",
    "filter_top_items",
    "filter_users",
    "gradient",
    "group_unfairness",
    "heuristic1",
    "heuristic2",
    "holdout_split",
    "individual_unfairness",
    "kernel_backend",
    "load_antidote_csv",
    "load_factors",
    "load_genre_groups",
    "load_groups_csv",
    "load_movielens",
    "load_ratings_csv",
    "optimize_antidote",
    "per_item_variance",
    "polarization",
    "predict",
    "random_antidote",
    "rmse",
    "run_experiment",
    "save_antidote_csv",
    "save_factors",
    "save_groups_csv",
    "save_ratings_csv",
    "topk_jaccard",
    "validation_rmse_grid",
]
