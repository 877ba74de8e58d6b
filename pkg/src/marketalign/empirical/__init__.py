"""Fitting the alignment conditions to survey answer distributions."""

from .dataset import OpinionDataset, Question, load_dataset, save_dataset
from .fitting import (
    StrongFit,
    WeakFit,
    baselines,
    fit_strong_provider,
    fit_weak_user,
    make_folds,
    single_provider_transfer,
    subset_analysis,
    transfer_curve,
    transfer_factors,
    user_count_tradeoff,
    weak_curve,
)
from .report import REPORT_SCHEMA_VERSION, FitReport
from .scores import LOG_FLOOR, SCORES, score_transform
from .synthetic import planted_dataset
