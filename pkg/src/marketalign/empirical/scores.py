"""Turning a model's predicted answer distribution into a per-answer utility in [0, 1]."""

from __future__ import annotations

import numpy as np

LOG_FLOOR = 1e-6
SCORES = ("linear", "log", "brier")


def score_transform(q_row, rule: str) -> np.ndarray:
    """Utility of each answer under a scoring rule.

    linear: ``q(a)``. log: ``log max(q(a), tau)`` mapped affinely so that
    ``tau -> 0`` and ``1 -> 1``. brier: ``1/2 + q(a) - |q|^2 / 2``, which
    already lies in ``[0, 1]``.
    """
    q = np.asarray(q_row, dtype=float)
    if rule == "linear":
        return q.copy()
    if rule == "log":
        v = (np.log(np.maximum(q, LOG_FLOOR)) - np.log(LOG_FLOOR)) / (-np.log(LOG_FLOOR))
        return np.clip(v, 0.0, 1.0)
    if rule == "brier":
        return 0.5 + q - 0.5 * np.dot(q, q)
    raise ValueError(f"unknown score {rule!r}; expected one of {SCORES}")
