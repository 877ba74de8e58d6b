"""Weak and Strong Market Alignment certificates on finite instances."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import CoverageViolation, DimensionMismatch, InvalidInstance, ProfileSpaceTooLarge
from .game import DEFAULT_CAP, GameInstance


def _profile_count(instance: GameInstance) -> int:
    return int(np.prod([instance.n_actions(i) for i in range(instance.n_users)])) * instance.n_states


def _check_cap(instance, cap):
    size = _profile_count(instance)
    if size > cap:
        raise ProfileSpaceTooLarge(size, cap)


def _lift(table: np.ndarray, i: int, n: int) -> np.ndarray:
    """Broadcast an ``(A_i, Y)`` table to the ``(A_1..A_n, Y)`` profile grid."""
    idx = [np.newaxis] * n + [slice(None)]
    idx[i] = slice(None)
    return table[tuple(idx)]


@dataclass(eq=False)
class WeakAlignmentCert:
    """Provider-separability and user-alignment data for a provider set ``providers``.

    Row ``t`` of ``lam``/``w`` and ``components[t]`` belong to provider
    ``providers[t]``. ``users`` lists the users whose alignment is certified
    (all users by default).
    """

    providers: list[int]
    components: list[list[np.ndarray]]
    lam: np.ndarray
    provider_const: np.ndarray
    w: np.ndarray
    user_const: np.ndarray
    eps_P: float = 0.0
    eps_U: float = 0.0
    users: list[int] | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.providers = [int(j) for j in self.providers]
        self.components = [[np.asarray(f, dtype=float) for f in row] for row in self.components]
        self.lam = np.asarray(self.lam, dtype=float)
        self.provider_const = np.asarray(self.provider_const, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        self.user_const = np.asarray(self.user_const, dtype=float)
        t, n = self.lam.shape
        if len(self.providers) != t or self.w.shape != (t, n) or len(self.components) != t:
            raise DimensionMismatch("weak certificate tables disagree on (|T|, n)")
        if self.users is None:
            self.users = list(range(n))

    def validate(self) -> None:
        if np.any(self.lam < 0) or np.any(self.w < 0) or self.eps_P < 0 or self.eps_U < 0:
            raise InvalidInstance("weights and radii must be nonnegative")
        if any(np.any(f < 0) for row in self.components for f in row):
            raise InvalidInstance("components F must be nonnegative")
        if np.any((self.w > 0) & ~(self.lam > 0)):
            raise InvalidInstance("w[j, i] > 0 requires lam[j, i] > 0")
        for i in self.users:
            if not np.any((self.lam[:, i] > 0) & (self.w[:, i] > 0)):
                raise CoverageViolation(f"no provider covers user {i}")

    def mu(self, i: int) -> float:
        """``sum_{j: w_ji > 0} w_ji / lam_ji``."""
        mask = self.w[:, i] > 0
        return float(np.sum(self.w[mask, i] / self.lam[mask, i]))

    def to_dict(self) -> dict:
        return {
            "type": "weak",
            "providers": self.providers,
            "components": [[f.tolist() for f in row] for row in self.components],
            "lam": self.lam.tolist(),
            "provider_const": self.provider_const.tolist(),
            "w": self.w.tolist(),
            "user_const": self.user_const.tolist(),
            "eps_P": self.eps_P,
            "eps_U": self.eps_U,
            "users": self.users,
        }


@dataclass(eq=False)
class StrongAlignmentCert:
    """``u^P_j ~ sum_i lam[t, i] u_i + const[t]`` for each ``j = providers[t]``."""

    providers: list[int]
    lam: np.ndarray
    const: np.ndarray
    eps: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.providers = [int(j) for j in self.providers]
        self.lam = np.asarray(self.lam, dtype=float)
        self.const = np.asarray(self.const, dtype=float)
        if self.lam.shape[0] != len(self.providers) or self.const.shape != (len(self.providers),):
            raise DimensionMismatch("strong certificate tables disagree on |T|")

    def covers(self) -> bool:
        return bool(np.all(np.any(self.lam > 0, axis=0)))

    def validate(self) -> None:
        if np.any(self.lam < 0) or self.eps < 0:
            raise InvalidInstance("weights and radius must be nonnegative")
        for i in range(self.lam.shape[1]):
            if not np.any(self.lam[:, i] > 0):
                raise CoverageViolation(f"no provider places positive weight on user {i}")

    def lambda_star(self, i: int) -> float:
        return float(self.lam[:, i].max())

    def to_dict(self) -> dict:
        return {
            "type": "strong",
            "providers": self.providers,
            "lam": self.lam.tolist(),
            "const": self.const.tolist(),
            "eps": self.eps,
        }


def cert_from_dict(d: dict):
    if d.get("type") == "weak":
        return WeakAlignmentCert(
            d["providers"], d["components"], d["lam"], d["provider_const"], d["w"], d["user_const"],
            d.get("eps_P", 0.0), d.get("eps_U", 0.0), d.get("users"),
        )
    if d.get("type") == "strong":
        return StrongAlignmentCert(d["providers"], d["lam"], d["const"], d.get("eps", 0.0))
    raise InvalidInstance("certificate type must be 'weak' or 'strong'")


def save_cert(cert, path) -> None:
    Path(path).write_text(json.dumps(cert.to_dict(), indent=1))


def load_cert(path):
    return cert_from_dict(json.loads(Path(path).read_text()))


# residuals ---------------------------------------------------------------------


def provider_residual_weak(instance: GameInstance, cert: WeakAlignmentCert, t: int) -> np.ndarray:
    j = cert.providers[t]
    n = instance.n_users
    approx = float(cert.provider_const[t])
    for i in range(n):
        approx = approx + cert.lam[t, i] * _lift(cert.components[t][i], i, n)
    return instance.provider_utils[j] - approx


def check_weak(instance: GameInstance, cert: WeakAlignmentCert, cap: int = DEFAULT_CAP) -> tuple[float, float]:
    """Achieved ``(eps_P, eps_U)``: worst residuals over every profile and state."""
    _check_cap(instance, cap)
    n = instance.n_users
    for row in cert.components:
        if len(row) != n:
            raise DimensionMismatch("components need one table per user")
    eps_p = 0.0
    for t in range(len(cert.providers)):
        eps_p = max(eps_p, float(np.abs(provider_residual_weak(instance, cert, t)).max()))
    eps_u = 0.0
    for i in cert.users:
        approx = cert.user_const[i] + sum(cert.w[t, i] * cert.components[t][i] for t in range(len(cert.providers)))
        eps_u = max(eps_u, float(np.abs(instance.user_utils[i] - approx).max()))
    return eps_p, eps_u


def strong_residual(instance: GameInstance, provider_idx: int, lam, const) -> np.ndarray:
    n = instance.n_users
    approx = float(const)
    for i in range(n):
        approx = approx + lam[i] * _lift(instance.user_utils[i], i, n)
    return instance.provider_utils[provider_idx] - approx


def check_strong(instance: GameInstance, cert: StrongAlignmentCert, cap: int = DEFAULT_CAP) -> float:
    """Achieved ``eps``: worst residual over providers in the certificate."""
    _check_cap(instance, cap)
    if cert.lam.shape[1] != instance.n_users:
        raise DimensionMismatch("lam must have one column per user")
    return max(
        float(np.abs(strong_residual(instance, j, cert.lam[t], cert.const[t])).max())
        for t, j in enumerate(cert.providers)
    )


# Chebyshev fits -----------------------------------------------------------------


def _chebyshev_nonneg(target: np.ndarray, design: np.ndarray):
    """Solve ``min_{x >= 0, c} max |target - design x - c|`` as an LP.

    Returns ``(x, c, objective)``.
    """
    m, p = design.shape
    ones = np.ones((m, 1))
    # variables: x (p, >= 0), c (free), t (>= 0); minimize t
    A_ub = np.vstack([
        np.hstack([-design, -ones, -ones]),
        np.hstack([design, ones, -ones]),
    ])
    b_ub = np.concatenate([-target, target])
    cost = np.zeros(p + 2)
    cost[-1] = 1.0
    bounds = [(0, None)] * p + [(None, None), (0, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs-ipm")
    if not res.success:
        raise RuntimeError(f"Chebyshev LP failed: {res.message}")
    x = np.maximum(res.x[:p], 0.0)
    return x, float(res.x[p]), float(res.fun)


def fit_strong_exact(
    instance: GameInstance, provider_idx: int, user_subset: Sequence[int] | None = None, cap: int = DEFAULT_CAP
) -> StrongAlignmentCert:
    """Strong certificate for one provider with the smallest worst-case ``eps``.

    Users outside ``user_subset`` get weight 0. ``cert.eps`` is the
    recomputed residual of the returned weights; the LP optimum is kept in
    ``cert.info["lp_objective"]``.
    """
    _check_cap(instance, cap)
    n = instance.n_users
    users = list(range(n)) if user_subset is None else list(user_subset)
    target = instance.provider_utils[provider_idx].ravel()
    shape = instance.provider_utils[provider_idx].shape
    design = np.column_stack([np.broadcast_to(_lift(instance.user_utils[i], i, n), shape).ravel() for i in users]) if users else np.zeros((target.size, 0))
    x, c, obj = _chebyshev_nonneg(target, design)
    lam = np.zeros((1, n))
    lam[0, users] = x
    cert = StrongAlignmentCert([provider_idx], lam, np.array([c]))
    cert.eps = check_strong(instance, cert, cap)
    cert.info["lp_objective"] = obj
    return cert


def fit_strong_set(instance: GameInstance, providers: Sequence[int], user_subset=None, cap=DEFAULT_CAP) -> StrongAlignmentCert:
    certs = [fit_strong_exact(instance, j, user_subset, cap) for j in providers]
    cert = StrongAlignmentCert(list(providers), np.vstack([c.lam for c in certs]), np.concatenate([c.const for c in certs]))
    cert.eps = max(c.eps for c in certs) if certs else 0.0
    return cert


def fit_weak_user_exact(
    instance: GameInstance, user_idx: int, components: Sequence[np.ndarray]
) -> tuple[np.ndarray, float, float]:
    """Smallest worst-case user-alignment error with the given per-provider components.

    ``components[t]`` is ``F_{j_t, i}`` for this user. Returns ``(w, c, eps_U)``.
    """
    target = instance.user_utils[user_idx].ravel()
    design = np.column_stack([np.asarray(f, dtype=float).ravel() for f in components]) if len(components) else np.zeros((target.size, 0))
    w, c, _ = _chebyshev_nonneg(target, design)
    eps = float(np.abs(target - design @ w - c).max())
    return w, c, eps


def strong_implies_weak(instance: GameInstance, cert: StrongAlignmentCert) -> WeakAlignmentCert:
    """Weak certificate with ``F_{j,i} = u_i`` and the same ``lam``.

    Users split weight evenly over providers that place positive weight on
    them; the result has radii ``(eps_P, eps_U) = (cert.eps, 0)``.
    """
    cert.validate()
    t, n = cert.lam.shape
    w = np.zeros((t, n))
    for i in range(n):
        pos = cert.lam[:, i] > 0
        w[pos, i] = 1.0 / pos.sum()
    components = [[instance.user_utils[i].copy() for i in range(n)] for _ in range(t)]
    return WeakAlignmentCert(
        cert.providers, components, cert.lam.copy(), cert.const.copy(), w, np.zeros(n), eps_P=cert.eps, eps_U=0.0
    )
