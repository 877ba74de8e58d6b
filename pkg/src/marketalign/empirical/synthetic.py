"""Synthetic survey data with planted mixture weights, for recovery tests and demos."""

from __future__ import annotations

import numpy as np

from .dataset import OpinionDataset, Question


def planted_dataset(
    rng: np.random.Generator,
    n_questions: int = 20,
    n_models: int = 3,
    n_groups: int = 2,
    n_options: int | tuple[int, int] = (3, 5),
    weights: np.ndarray | None = None,
    noise: float = 0.0,
    waves: int = 2,
) -> tuple[OpinionDataset, np.ndarray]:
    """Group distributions are convex mixtures of model distributions.

    ``weights`` is ``(n_groups, n_models)`` with rows summing to one; it is
    drawn from a Dirichlet when omitted. ``noise`` adds Dirichlet jitter
    (concentration ``1/noise``) on top of the mixture.
    """
    if weights is None:
        weights = rng.dirichlet(np.ones(n_models), size=n_groups)
    weights = np.asarray(weights, dtype=float)
    questions, groups, models = [], [], []
    for q in range(n_questions):
        k = int(n_options) if np.isscalar(n_options) else int(rng.integers(n_options[0], n_options[1] + 1))
        m = rng.dirichlet(np.ones(k), size=n_models)
        g = weights @ m
        if noise > 0:
            g = np.vstack([rng.dirichlet(row / noise + 1e-9) for row in g])
        questions.append(Question(f"Q{q:03d}", f"W{q % waves}", k))
        groups.append(g)
        models.append(m)
    ds = OpinionDataset(
        questions,
        [f"group{i}" for i in range(n_groups)],
        [f"model{j}" for j in range(n_models)],
        groups,
        models,
        "synthetic",
    )
    return ds, weights
