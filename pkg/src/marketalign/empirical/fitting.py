"""Cross-validated NNLS fits of the alignment conditions on survey data.

Weak fits regress a group's answer distribution on the models' scores.
Strong fits sample answer profiles from the groups' marginals and regress
a model's averaged score on the groups' own probabilities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import InsufficientData, SearchSpaceTooLarge
from ..nnls import LeastSquaresProblem, nnls_solve
from .dataset import OpinionDataset
from .scores import score_transform

TRANSFER_FLOOR = 1e-12
DEFAULT_SAMPLES = 64
DEFAULT_FOLDS = 5


def make_folds(dataset: OpinionDataset, n_folds: int = DEFAULT_FOLDS, seed: int = 0) -> list[np.ndarray]:
    """Question-level folds, stratified by wave.

    Within each wave (taken in sorted order) questions are sorted by id,
    shuffled with a seeded generator and dealt round-robin, continuing the
    deal across waves. The result depends only on the ids, waves and seed.
    """
    if n_folds < 2:
        raise InsufficientData("need at least two folds")
    rng = np.random.default_rng(seed)
    by_wave: dict[str, list[int]] = {}
    for q, question in enumerate(dataset.questions):
        by_wave.setdefault(question.wave, []).append(q)
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    slot = 0
    for wave in sorted(by_wave):
        members = sorted(by_wave[wave], key=lambda q: dataset.questions[q].id)
        for q in rng.permutation(members):
            folds[slot % n_folds].append(int(q))
            slot += 1
    if min(len(f) for f in folds) < 2:
        raise InsufficientData(f"{dataset.n_questions} questions cannot fill {n_folds} folds of at least 2")
    return [np.array(sorted(f), dtype=int) for f in folds]


def _split(folds, k):
    test = folds[k]
    train = np.concatenate([f for b, f in enumerate(folds) if b != k])
    return np.sort(train), test


def _rmse(A, b, w, c):
    return float(np.sqrt(np.mean((A @ w + c - b) ** 2))) if b.size else 0.0


def _sem(values):
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0


# weak -------------------------------------------------------------------------------


def weak_design(dataset: OpinionDataset, user_idx: int, providers: Sequence[int], score: str, questions=None):
    """Rows are (question, answer) pairs; columns the providers' scores; target the group's probability."""
    qs = range(dataset.n_questions) if questions is None else questions
    cols, target = [], []
    for q in qs:
        cols.append(np.column_stack([score_transform(dataset.models[q][j], score) for j in providers]))
        target.append(dataset.groups[q][user_idx])
    if not cols:
        return np.zeros((0, len(providers))), np.zeros(0)
    return np.vstack(cols), np.concatenate(target)


@dataclass
class WeakFit:
    user: int
    providers: list[int]
    weights: np.ndarray
    intercept: float
    in_sample_rmse: float
    train_rmse: list[float]
    test_rmse: list[float]

    @property
    def mean_test_rmse(self) -> float:
        return float(np.mean(self.test_rmse)) if self.test_rmse else float("nan")

    @property
    def se_test_rmse(self) -> float:
        return _sem(self.test_rmse)

    def to_dict(self) -> dict:
        return {
            "user": self.user,
            "providers": self.providers,
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "in_sample_rmse": self.in_sample_rmse,
            "train_rmse": self.train_rmse,
            "test_rmse": self.test_rmse,
            "epsilon_proxy_rmse": self.mean_test_rmse,
            "epsilon_proxy_rmse_se": self.se_test_rmse,
        }


def fit_weak_user(
    dataset: OpinionDataset,
    user_idx: int,
    providers: Sequence[int] | None = None,
    score: str = "linear",
    folds: int | list[np.ndarray] = DEFAULT_FOLDS,
    seed: int = 0,
) -> WeakFit:
    """NNLS with intercept of one group's distribution on the providers' scores.

    Weights come from the full data; fold RMSEs come from refits on each
    training split.
    """
    providers = list(range(dataset.n_models)) if providers is None else list(providers)
    fold_list = make_folds(dataset, folds, seed) if isinstance(folds, int) else folds
    train_rmse, test_rmse = [], []
    for k in range(len(fold_list)):
        tr, te = _split(fold_list, k)
        A, b = weak_design(dataset, user_idx, providers, score, tr)
        w, c, r = nnls_solve(LeastSquaresProblem(A, b, True))
        At, bt = weak_design(dataset, user_idx, providers, score, te)
        train_rmse.append(r)
        test_rmse.append(_rmse(At, bt, w, c))
    A, b = weak_design(dataset, user_idx, providers, score)
    w, c, r = nnls_solve(LeastSquaresProblem(A, b, True))
    return WeakFit(user_idx, providers, w, c, r, train_rmse, test_rmse)


def baselines(
    dataset: OpinionDataset, user_idx: int, score: str = "linear", providers: Sequence[int] | None = None
) -> tuple[float, float]:
    """In-sample RMSE of (best single provider, equal weights), each with a fitted intercept."""
    providers = list(range(dataset.n_models)) if providers is None else list(providers)
    A, b = weak_design(dataset, user_idx, providers, score)
    singles = []
    for col in range(A.shape[1]):
        c = float(np.mean(b - A[:, col]))
        singles.append(_rmse(A[:, [col]], b, np.ones(1), c))
    avg = A.mean(axis=1)
    c = float(np.mean(b - avg))
    return float(min(singles)), _rmse(avg[:, None], b, np.ones(1), c)


# strong ------------------------------------------------------------------------------


def sample_profiles(dataset: OpinionDataset, q: int, users: Sequence[int], samples: int, seed: int, stream: int) -> np.ndarray:
    """``(samples, len(users))`` answers drawn independently from each group's marginal.

    The generator is keyed by ``(seed, question index, stream)`` so every
    provider, fold and subset sees the same draws.
    """
    rng = np.random.default_rng([seed, q, stream])
    p = dataset.groups[q]
    n_opt = p.shape[1]
    draws = np.empty((samples, len(users)), dtype=int)
    all_draws = np.column_stack([rng.choice(n_opt, size=samples, p=p[i]) for i in range(dataset.n_groups)])
    for b, i in enumerate(users):
        draws[:, b] = all_draws[:, i]
    return draws


def strong_design(dataset, provider_idx, users, score, questions, samples, seed, stream):
    rows, target = [], []
    for q in questions:
        prof = sample_profiles(dataset, q, users, samples, seed, stream)
        v = score_transform(dataset.models[q][provider_idx], score)
        p = dataset.groups[q]
        rows.append(np.column_stack([p[i][prof[:, b]] for b, i in enumerate(users)]))
        target.append(v[prof].mean(axis=1))
    if not rows:
        return np.zeros((0, len(users))), np.zeros(0)
    return np.vstack(rows), np.concatenate(target)


@dataclass
class StrongFit:
    provider: int
    users: list[int]
    lam: np.ndarray
    intercept: float
    in_sample_rmse: float
    train_rmse: list[float]
    test_rmse: list[float]

    @property
    def mean_test_rmse(self) -> float:
        return float(np.mean(self.test_rmse)) if self.test_rmse else float("nan")

    def to_dict(self) -> dict:
        return {
            "provider": self.provider,
            "users": self.users,
            "lam": self.lam.tolist(),
            "intercept": self.intercept,
            "in_sample_rmse": self.in_sample_rmse,
            "train_rmse": self.train_rmse,
            "test_rmse": self.test_rmse,
            "epsilon_proxy_rmse": self.mean_test_rmse,
            "epsilon_proxy_rmse_se": _sem(self.test_rmse),
        }


def fit_strong_provider(
    dataset: OpinionDataset,
    provider_idx: int,
    users: Sequence[int] | None = None,
    score: str = "linear",
    samples: int = DEFAULT_SAMPLES,
    folds: int | list[np.ndarray] | None = DEFAULT_FOLDS,
    seed: int = 0,
) -> StrongFit:
    """NNLS with intercept of a provider's averaged score on the groups' probabilities.

    Training profiles use sampler stream 0 and held-out evaluation uses
    stream 1. ``folds=None`` skips cross-validation.
    """
    if samples < 1:
        raise InsufficientData("need at least one sampled profile per question")
    users = list(range(dataset.n_groups)) if users is None else list(users)
    train_rmse, test_rmse = [], []
    if folds is not None:
        fold_list = make_folds(dataset, folds, seed) if isinstance(folds, int) else folds
        for k in range(len(fold_list)):
            tr, te = _split(fold_list, k)
            A, b = strong_design(dataset, provider_idx, users, score, tr, samples, seed, 0)
            w, c, r = nnls_solve(LeastSquaresProblem(A, b, True))
            At, bt = strong_design(dataset, provider_idx, users, score, te, samples, seed, 1)
            train_rmse.append(r)
            test_rmse.append(_rmse(At, bt, w, c))
    A, b = strong_design(dataset, provider_idx, users, score, range(dataset.n_questions), samples, seed, 0)
    w, c, r = nnls_solve(LeastSquaresProblem(A, b, True))
    return StrongFit(provider_idx, users, w, c, r, train_rmse, test_rmse)


def transfer_factors(lam: np.ndarray, floor: float = TRANSFER_FLOOR) -> np.ndarray:
    """``1 / max(max_j lam[j, i], floor)`` per user (columns)."""
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    return 1.0 / np.maximum(lam.max(axis=0), floor)


def fit_strong_set(dataset, providers, users=None, score="linear", samples=DEFAULT_SAMPLES, folds=None, seed=0):
    return [fit_strong_provider(dataset, j, users, score, samples, folds, seed) for j in providers]


# curves --------------------------------------------------------------------------------


def weak_curve(dataset, score="linear", K_range=None, folds=DEFAULT_FOLDS, seed=0, users=None):
    """Per K (first K providers): mean over users of fold-mean test RMSE, plus baselines."""
    K_range = list(range(1, dataset.n_models + 1)) if K_range is None else list(K_range)
    users = list(range(dataset.n_groups)) if users is None else list(users)
    fold_list = make_folds(dataset, folds, seed)
    rows, fits = [], []
    for K in K_range:
        provs = list(range(K))
        per_user = [fit_weak_user(dataset, i, provs, score, fold_list, seed) for i in users]
        base = [baselines(dataset, i, score, provs) for i in users]
        fits.extend(per_user)
        rows.append({
            "K": K,
            "epsilon_proxy_rmse": float(np.mean([f.mean_test_rmse for f in per_user])),
            "epsilon_proxy_rmse_se": float(np.mean([f.se_test_rmse for f in per_user])),
            "in_sample_rmse": float(np.mean([f.in_sample_rmse for f in per_user])),
            "best_single_rmse": float(np.mean([b[0] for b in base])),
            "equal_weight_rmse": float(np.mean([b[1] for b in base])),
        })
    return rows, fits


def transfer_curve(dataset, score="linear", K_range=None, seed=0, samples=DEFAULT_SAMPLES, users=None, folds=None):
    """Per K: strong fits for the first K providers; mean and worst user transfer factor."""
    K_range = list(range(1, dataset.n_models + 1)) if K_range is None else list(K_range)
    users = list(range(dataset.n_groups)) if users is None else list(users)
    if max(K_range) > dataset.n_models:
        raise InsufficientData(f"K={max(K_range)} exceeds the {dataset.n_models} providers")
    all_fits = fit_strong_set(dataset, range(max(K_range)), users, score, samples, folds, seed)
    rows = []
    for K in K_range:
        lam = np.vstack([f.lam for f in all_fits[:K]])
        t = transfer_factors(lam)
        rows.append({
            "K": K,
            "mean_transfer": float(np.mean(t)),
            "worst_transfer": float(np.max(t)),
            "epsilon_proxy_rmse": float(np.mean([f.in_sample_rmse if not f.test_rmse else f.mean_test_rmse for f in all_fits[:K]])),
            "lambda": lam.tolist(),
        })
    return rows, all_fits


def single_provider_transfer(dataset, score="linear", seed=0, samples=DEFAULT_SAMPLES, users=None):
    """Worst-user transfer factor of each provider alone."""
    fits = fit_strong_set(dataset, range(dataset.n_models), users, score, samples, None, seed)
    return [float(np.max(transfer_factors(f.lam[None, :]))) for f in fits], fits


def subset_analysis(dataset, score="linear", sizes=None, seed=0, samples=DEFAULT_SAMPLES, users=None, cap=10**6):
    """Per subset size: best, mean and worst (over all subsets) of the worst-user transfer factor."""
    k = dataset.n_models
    sizes = list(range(1, k + 1)) if sizes is None else list(sizes)
    total = sum(math.comb(k, s) for s in sizes)
    if total > cap:
        raise SearchSpaceTooLarge(total, cap)
    fits = fit_strong_set(dataset, range(k), users, score, samples, None, seed)
    lam_all = np.vstack([f.lam for f in fits])
    rows = []
    for s in sizes:
        worst = [float(np.max(transfer_factors(lam_all[list(T)]))) for T in itertools.combinations(range(k), s)]
        rows.append({
            "size": s,
            "n_subsets": len(worst),
            "best": float(np.min(worst)),
            "mean": float(np.mean(worst)),
            "worst": float(np.max(worst)),
        })
    return rows, fits


def user_count_tradeoff(dataset, score="linear", user_counts=None, seed=0, samples=DEFAULT_SAMPLES, providers=None, folds=DEFAULT_FOLDS):
    """Per n (first n groups in file order): mean strong-fit RMSE and worst transfer factor."""
    user_counts = list(range(1, dataset.n_groups + 1)) if user_counts is None else list(user_counts)
    if max(user_counts) > dataset.n_groups:
        raise InsufficientData(f"n={max(user_counts)} exceeds the {dataset.n_groups} groups")
    providers = list(range(dataset.n_models)) if providers is None else list(providers)
    rows, per_n = [], []
    for n in user_counts:
        fits = fit_strong_set(dataset, providers, list(range(n)), score, samples, folds, seed)
        lam = np.vstack([f.lam for f in fits])
        rmse = [f.mean_test_rmse if f.test_rmse else f.in_sample_rmse for f in fits]
        rows.append({
            "n": n,
            "epsilon_proxy_rmse": float(np.mean(rmse)),
            "worst_transfer": float(np.max(transfer_factors(lam))),
            "lambda": lam.tolist(),
        })
        per_n.append(fits)
    return rows, per_n
