"""Nonnegative least squares with an optional free intercept.

Lawson-Hanson active set method. Columns outside ``nonneg`` are never
clamped; the intercept is handled by centering the problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput

INNER_TOL = 1e-12


@dataclass
class LeastSquaresProblem:
    """``min || A w + c 1 - b ||`` with ``w[k] >= 0`` wherever ``nonneg[k]``."""

    A: np.ndarray
    b: np.ndarray
    with_intercept: bool = True
    nonneg: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.A.ndim == 1:
            self.A = self.A[:, None]
        if self.A.ndim != 2 or self.b.ndim != 1:
            raise DimensionMismatch("A must be 2-d and b 1-d")
        if self.A.shape[0] != self.b.shape[0]:
            raise DimensionMismatch(f"A has {self.A.shape[0]} rows but b has {self.b.shape[0]}")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise NonFiniteInput("design and target must be finite")
        p = self.A.shape[1]
        self.nonneg = np.ones(p, dtype=bool) if self.nonneg is None else np.asarray(self.nonneg, dtype=bool)
        if self.nonneg.shape != (p,):
            raise DimensionMismatch("nonneg mask needs one entry per column")

    @property
    def scale(self) -> float:
        return max(1.0, float(np.linalg.norm(self.A) * np.linalg.norm(self.b)))


@dataclass
class NNLSResult:
    weights: np.ndarray
    intercept: float
    rmse: float
    iterations: int = 0
    converged: bool = True
    degenerate: bool = False
    info: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.weights
        yield self.intercept
        yield self.rmse


def _lstsq(A, b, cols):
    out = np.zeros(A.shape[1])
    if cols.any():
        out[cols] = np.linalg.lstsq(A[:, cols], b, rcond=None)[0]
    return out


def active_set_nnls(A: np.ndarray, b: np.ndarray, nonneg: np.ndarray, max_iter: int | None = None):
    """Lawson-Hanson on ``min ||A x - b||`` with ``x[nonneg] >= 0``.

    Returns ``(x, iterations, converged)``.
    """
    m, p = A.shape
    max_iter = 3 * p if max_iter is None else max_iter
    if p == 0:
        return np.zeros(0), 0, True
    passive = ~nonneg.copy()
    x = _lstsq(A, b, passive)
    tol = INNER_TOL * max(1.0, np.linalg.norm(A, 1) * np.linalg.norm(b, np.inf))
    it = 0
    while True:
        grad = A.T @ (b - A @ x)  # negative gradient of half the squared residual
        cand = nonneg & ~passive & (grad > tol)
        if not cand.any():
            return x, it, True
        if it >= max_iter:
            return x, it, False
        it += 1
        passive[int(np.argmax(np.where(cand, grad, -np.inf)))] = True
        while True:
            z = _lstsq(A, b, passive)
            bad = passive & nonneg & (z <= 0)
            if not bad.any():
                x = z
                break
            # step back to the boundary of the feasible set
            idx = np.flatnonzero(bad)
            alpha = np.min(x[idx] / (x[idx] - z[idx]))
            x = x + alpha * (z - x)
            drop = passive & nonneg & (np.abs(x) <= tol)
            passive[drop] = False
            x[drop] = 0.0


def nnls_solve(problem: LeastSquaresProblem, max_iter: int | None = None) -> NNLSResult:
    """Solve the problem; the intercept (if any) is fitted by centering."""
    A, b = problem.A, problem.b
    m, p = A.shape
    if problem.with_intercept:
        a_mean, b_mean = A.mean(axis=0), b.mean()
        Ac, bc = A - a_mean, b - b_mean
    else:
        Ac, bc = A, b
    w, it, converged = active_set_nnls(Ac, bc, problem.nonneg, max_iter)
    w[problem.nonneg] = np.maximum(w[problem.nonneg], 0.0)
    c = float(b_mean - a_mean @ w) if problem.with_intercept else 0.0
    resid = A @ w + c - b
    rmse = float(np.sqrt(np.mean(resid**2))) if m else 0.0
    rank = np.linalg.matrix_rank(Ac) if p else 0
    return NNLSResult(w, c, rmse, it, converged, bool(rank < p))


def kkt_residuals(problem: LeastSquaresProblem, weights: np.ndarray, intercept: float) -> dict:
    """Optimality residuals of a candidate, divided by ``problem.scale``.

    ``stationarity`` is the worst ``|grad|`` over free or positive columns
    (and the intercept); ``dual`` is the most negative gradient over
    clamped columns; ``primal`` the most negative constrained weight.
    Gradients are of ``0.5 ||A w + c - b||^2``.
    """
    A, b = problem.A, problem.b
    w = np.asarray(weights, dtype=float)
    r = A @ w + intercept - b
    g = A.T @ r
    nn = problem.nonneg
    clamped = nn & (w <= 0)
    free = ~clamped
    stat = float(np.max(np.abs(g[free]))) if free.any() else 0.0
    if problem.with_intercept:
        stat = max(stat, abs(float(r.sum())))
    dual = float(np.min(g[clamped])) if clamped.any() else 0.0
    primal = float(np.min(w[nn])) if nn.any() else 0.0
    s = problem.scale
    return {"stationarity": stat / s, "dual": min(dual, 0.0) / s, "primal": min(primal, 0.0), "scale": s}


def satisfies_kkt(problem: LeastSquaresProblem, weights, intercept, tol: float = 1e-8) -> bool:
    k = kkt_residuals(problem, weights, intercept)
    return k["stationarity"] <= tol and k["dual"] >= -tol and k["primal"] >= 0


def solve_with_intercept_column(problem: LeastSquaresProblem) -> NNLSResult:
    """Same problem, intercept as an extra unconstrained column instead of centering."""
    if not problem.with_intercept:
        return nnls_solve(problem)
    m = problem.A.shape[0]
    aug = LeastSquaresProblem(
        np.hstack([problem.A, np.ones((m, 1))]), problem.b, False, np.append(problem.nonneg, False)
    )
    res = nnls_solve(aug)
    return NNLSResult(res.weights[:-1], float(res.weights[-1]), res.rmse, res.iterations, res.converged, res.degenerate)


def nnls(A, b, intercept: bool = False) -> NNLSResult:
    """Shorthand: all columns nonnegative."""
    return nnls_solve(LeastSquaresProblem(A, b, intercept))
