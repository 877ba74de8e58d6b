"""Finite conversation games: instances, provider rules and user strategies.

Probability tables are dense numpy arrays. The joint prior is indexed
``prior[y, xU_1, ..., xU_n, xP_1, ..., xP_k]``; user utilities are
``(n_actions_i, n_states)``; provider utilities are
``(n_actions_1, ..., n_actions_n, n_states)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyActionSet,
    InvalidInstance,
    SearchSpaceTooLarge,
)

SCHEMA_VERSION = "1.0"
PROB_TOL = 1e-12
UTIL_TOL = 1e-12
# Two expected utilities closer than this are a tie for argmax purposes.
TIE_TOL = 1e-12
DEFAULT_CAP = 10**7


def alternating_speakers(rounds: int, first: str = "P") -> str:
    other = "U" if first == "P" else "P"
    return "".join(first if t % 2 == 0 else other for t in range(rounds))


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(eq=False)
class SeparableUtility:
    """Provider utilities in the form ``sum_i lam[j, i] * F[j][i](a_i, y) + const[j]``."""

    lam: np.ndarray
    components: list[list[np.ndarray]]
    const: np.ndarray

    def __post_init__(self):
        self.lam = _frozen(self.lam)
        self.const = _frozen(self.const)
        self.components = [[_frozen(f) for f in row] for row in self.components]
        if self.lam.ndim != 2 or len(self.components) != self.lam.shape[0]:
            raise DimensionMismatch("separable form: lam must be (k, n) with k component rows")
        if np.any(self.lam < 0):
            raise InvalidInstance("separable form: weights must be nonnegative")

    def expand(self, j: int) -> np.ndarray:
        """Dense ``(A_1, ..., A_n, Y)`` table for provider ``j``."""
        comps = self.components[j]
        n = len(comps)
        shape = tuple(f.shape[0] for f in comps) + (comps[0].shape[1],)
        out = np.full(shape, float(self.const[j]))
        for i, f in enumerate(comps):
            idx = [np.newaxis] * n + [slice(None)]
            idx[i] = slice(None)
            out = out + self.lam[j, i] * f[tuple(idx)]
        return out

    def to_dict(self):
        return {
            "lam": self.lam.tolist(),
            "components": [[f.tolist() for f in row] for row in self.components],
            "const": self.const.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            lam=np.asarray(d["lam"], dtype=float),
            components=[[np.asarray(f, dtype=float) for f in row] for row in d["components"]],
            const=np.asarray(d["const"], dtype=float),
        )


@dataclass(eq=False)
class GameInstance:
    """Finite description of the provider/user conversation game.

    Either ``provider_utils`` (dense) or ``separable`` must be given; when
    both are present they must agree to within ``1e-12``.
    """

    states: list[str]
    user_features: list[list[str]]
    provider_features: list[list[str]]
    prior: np.ndarray
    action_sets: list[list[str]]
    user_utils: list[np.ndarray]
    provider_utils: list[np.ndarray] | None
    messages: list[str]
    rounds: int = 1
    speakers: str | None = None
    action_order: list[list[int]] | None = None
    provider_order: list[int] | None = None
    separable: SeparableUtility | None = None
    name: str = ""
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.states = [str(s) for s in self.states]
        self.user_features = [[str(x) for x in xs] for xs in self.user_features]
        self.provider_features = [[str(x) for x in xs] for xs in self.provider_features]
        self.action_sets = [[str(a) for a in acts] for acts in self.action_sets]
        self.messages = [str(m) for m in self.messages]
        self.rounds = int(self.rounds)
        if self.rounds < 1:
            raise InvalidInstance("rounds must be >= 1")
        if self.speakers is None:
            self.speakers = alternating_speakers(self.rounds)
        if len(self.speakers) != self.rounds or set(self.speakers) - {"P", "U"}:
            raise DimensionMismatch("speakers must be a P/U string of length rounds")
        if not self.messages:
            raise InvalidInstance("message space is empty")
        for acts in self.action_sets:
            if not acts:
                raise EmptyActionSet("every user needs at least one action")
        n, k = len(self.user_features), len(self.provider_features)
        if len(self.action_sets) != n or len(self.user_utils) != n:
            raise DimensionMismatch("per-user lists must all have length n")

        self.prior = _frozen(self.prior)
        expected = (len(self.states),) + tuple(map(len, self.user_features)) + tuple(
            map(len, self.provider_features)
        )
        if self.prior.shape != expected:
            raise DimensionMismatch(f"prior has shape {self.prior.shape}, expected {expected}")
        if np.any(self.prior < 0) or abs(self.prior.sum() - 1.0) > PROB_TOL:
            raise InvalidInstance("prior must be nonnegative and sum to 1")

        self.user_utils = [_frozen(u) for u in self.user_utils]
        for i, u in enumerate(self.user_utils):
            if u.shape != (len(self.action_sets[i]), len(self.states)):
                raise DimensionMismatch(f"user {i} utility has shape {u.shape}")
            _check_unit(u, f"user {i} utility")

        profile_shape = tuple(map(len, self.action_sets)) + (len(self.states),)
        if self.separable is not None and not isinstance(self.separable, SeparableUtility):
            self.separable = SeparableUtility(**self.separable)
        if self.provider_utils is None:
            if self.separable is None:
                raise InvalidInstance("need dense or separable provider utilities")
            self.provider_utils = [self.separable.expand(j) for j in range(k)]
        self.provider_utils = [_frozen(u) for u in self.provider_utils]
        if len(self.provider_utils) != k:
            raise DimensionMismatch("one provider utility table per provider")
        for j, u in enumerate(self.provider_utils):
            if u.shape != profile_shape:
                raise DimensionMismatch(f"provider {j} utility has shape {u.shape}, expected {profile_shape}")
            _check_unit(u, f"provider {j} utility")
        if self.separable is not None:
            if self.separable.lam.shape != (k, n):
                raise DimensionMismatch("separable lam must be (k, n)")
            for j in range(k):
                gap = np.max(np.abs(self.separable.expand(j) - self.provider_utils[j]))
                if gap > UTIL_TOL:
                    raise InvalidInstance(f"separable form of provider {j} differs from dense table by {gap:.3g}")

        if self.action_order is None:
            self.action_order = [list(range(len(a))) for a in self.action_sets]
        if self.provider_order is None:
            self.provider_order = list(range(k))
        for i, order in enumerate(self.action_order):
            if sorted(order) != list(range(len(self.action_sets[i]))):
                raise InvalidInstance(f"action_order[{i}] is not a permutation")
        if sorted(self.provider_order) != list(range(k)):
            raise InvalidInstance("provider_order is not a permutation")
        self.action_order = [list(map(int, o)) for o in self.action_order]
        self.provider_order = list(map(int, self.provider_order))

    # sizes ---------------------------------------------------------------
    @property
    def n_users(self) -> int:
        return len(self.user_features)

    @property
    def n_providers(self) -> int:
        return len(self.provider_features)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_messages(self) -> int:
        return len(self.messages)

    def n_actions(self, i: int) -> int:
        return len(self.action_sets[i])

    # marginals -----------------------------------------------------------
    def state_marginal(self) -> np.ndarray:
        return self.prior.reshape(self.n_states, -1).sum(axis=1)

    def pair_marginal(self, i: int, j: int) -> np.ndarray:
        """Joint law of ``(y, xU_i, xP_j)`` as a ``(Y, XU_i, XP_j)`` array."""
        key = ("pair", i, j)
        if key not in self._cache:
            n = self.n_users
            keep = (0, 1 + i, 1 + n + j)
            drop = tuple(ax for ax in range(self.prior.ndim) if ax not in keep)
            m = self.prior.sum(axis=drop)
            m.setflags(write=False)
            self._cache[key] = m
        return self._cache[key]

    def provider_marginal(self, j: int) -> np.ndarray:
        """Joint law of ``(y, xP_j)``."""
        keep = (0, 1 + self.n_users + j)
        return self.prior.sum(axis=tuple(ax for ax in range(self.prior.ndim) if ax not in keep))

    def provider_prefixes(self) -> list[tuple[int, ...]]:
        """Every transcript prefix at which a provider speaks."""
        out = []
        for t, who in enumerate(self.speakers):
            if who == "P":
                out.extend(itertools.product(range(self.n_messages), repeat=t))
        return out

    def user_prefixes(self) -> list[tuple[int, ...]]:
        out = []
        for t, who in enumerate(self.speakers):
            if who == "U":
                out.extend(itertools.product(range(self.n_messages), repeat=t))
        return out

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "states": self.states,
            "user_features": self.user_features,
            "provider_features": self.provider_features,
            "prior": self.prior.tolist(),
            "action_sets": self.action_sets,
            "user_utils": [u.tolist() for u in self.user_utils],
            "provider_utils": [u.tolist() for u in self.provider_utils],
            "message_space": self.messages,
            "rounds": self.rounds,
            "speakers": self.speakers,
            "tie_break": {"actions": self.action_order, "providers": self.provider_order},
        }
        if self.separable is not None:
            d["provider_utils_separable"] = self.separable.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GameInstance":
        validate_schema(d, "game_instance")
        tie = d.get("tie_break", {})
        sep = d.get("provider_utils_separable")
        return cls(
            states=d["states"],
            user_features=d["user_features"],
            provider_features=d["provider_features"],
            prior=np.asarray(d["prior"], dtype=float),
            action_sets=d["action_sets"],
            user_utils=[np.asarray(u, dtype=float) for u in d["user_utils"]],
            provider_utils=(
                [np.asarray(u, dtype=float) for u in d["provider_utils"]]
                if d.get("provider_utils") is not None
                else None
            ),
            messages=d["message_space"],
            rounds=d["rounds"],
            speakers=d.get("speakers"),
            action_order=tie.get("actions"),
            provider_order=tie.get("providers"),
            separable=SeparableUtility.from_dict(sep) if sep else None,
            name=d.get("name", ""),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "GameInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_unit(u, what):
    if not np.all(np.isfinite(u)) or u.min() < -UTIL_TOL or u.max() > 1 + UTIL_TOL:
        raise InvalidInstance(f"{what} must lie in [0, 1]")


def validate_schema(doc: dict, name: str) -> None:
    import jsonschema
    from importlib import resources

    schema = json.loads(resources.files("marketalign.schemas").joinpath(f"{name}.schema.json").read_text())
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        raise InvalidInstance(f"{name} document fails schema: {exc.message}") from exc


def _check_prob_rows(table, what):
    if table.ndim != 2:
        raise DimensionMismatch(f"{what} must be a 2-d table")
    if np.any(table < -PROB_TOL) or np.any(np.abs(table.sum(axis=1) - 1.0) > PROB_TOL):
        raise InvalidInstance(f"{what} rows must be probability vectors")


@dataclass(eq=False)
class ProviderRule:
    """Tabular provider conversation rule.

    ``tables[prefix]`` is an ``(n_features, n_messages)`` row-stochastic array
    giving the next-message distribution after ``prefix``. ``default``, when
    set, is used for any prefix without an explicit table.
    """

    tables: dict[tuple[int, ...], np.ndarray]
    default: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        self.tables = {tuple(int(m) for m in p): _frozen(t) for p, t in self.tables.items()}
        for p, t in self.tables.items():
            _check_prob_rows(t, f"rule table at prefix {p}")
        if self.default is not None:
            self.default = _frozen(self.default)
            _check_prob_rows(self.default, "default rule table")

    def table(self, prefix: tuple[int, ...]) -> np.ndarray | None:
        return self.tables.get(prefix, self.default)

    @property
    def deterministic(self) -> bool:
        tabs = list(self.tables.values()) + ([self.default] if self.default is not None else [])
        return all(np.all((t == 0) | (t == 1)) for t in tabs)

    @property
    def key(self) -> bytes:
        parts = []
        for p in sorted(self.tables):
            parts.append(repr(p).encode() + self.tables[p].tobytes())
        if self.default is not None:
            parts.append(b"default" + self.default.tobytes())
        return b"|".join(parts)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "tables": [{"prefix": list(p), "probs": t.tolist()} for p, t in sorted(self.tables.items())],
            "default": None if self.default is None else self.default.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProviderRule":
        return cls(
            tables={tuple(e["prefix"]): np.asarray(e["probs"], dtype=float) for e in d["tables"]},
            default=None if d.get("default") is None else np.asarray(d["default"], dtype=float),
            label=d.get("label", ""),
        )


@dataclass(eq=False)
class UserStrategy:
    """User conversation and decision tables.

    ``conversation[prefix]`` is ``(n_user_features, n_messages)``;
    ``decision[transcript]`` is ``(n_user_features, n_actions)``.
    """

    conversation: dict[tuple[int, ...], np.ndarray]
    decision: dict[tuple[int, ...], np.ndarray]

    def __post_init__(self):
        for p, t in self.conversation.items():
            _check_prob_rows(np.asarray(t), f"user conversation table at {p}")
        for p, t in self.decision.items():
            _check_prob_rows(np.asarray(t), f"user decision table at {p}")

    def to_dict(self) -> dict:
        return {
            "conversation": [{"prefix": list(p), "probs": np.asarray(t).tolist()} for p, t in sorted(self.conversation.items())],
            "decision": [{"transcript": list(p), "probs": np.asarray(t).tolist()} for p, t in sorted(self.decision.items())],
        }


@dataclass
class InducedDistribution:
    """Exact law over ``(a_i, y)`` (form ``"single"``) or ``(a_1..a_n, y)`` (``"joint"``)."""

    table: np.ndarray
    form: str = "single"

    def state_marginal(self) -> np.ndarray:
        return self.table.reshape(-1, self.table.shape[-1]).sum(axis=0)

    def action_marginal(self, i: int = 0) -> np.ndarray:
        if self.form == "single":
            return self.table.sum(axis=-1)
        axes = tuple(ax for ax in range(self.table.ndim) if ax != i)
        return self.table.sum(axis=axes)

    def user_marginal(self, i: int) -> np.ndarray:
        """``(a_i, y)`` table; identity for the single-user form."""
        if self.form == "single":
            return self.table
        axes = tuple(ax for ax in range(self.table.ndim - 1) if ax != i)
        return self.table.sum(axis=axes)

    def expect(self, utility: np.ndarray) -> float:
        return float(np.sum(self.table * utility))

    def check(self, prior_y: np.ndarray, tol: float = 1e-10) -> None:
        if np.any(self.table < -tol):
            raise InvalidInstance("induced distribution has negative entries")
        if abs(self.table.sum() - 1.0) > tol:
            raise InvalidInstance("induced distribution does not sum to 1")
        if np.max(np.abs(self.state_marginal() - prior_y)) > tol:
            raise InvalidInstance("induced state marginal differs from the prior")


# rule builders -------------------------------------------------------------


def one_hot(index: Sequence[int], width: int) -> np.ndarray:
    out = np.zeros((len(index), width))
    out[np.arange(len(index)), np.asarray(index, dtype=int)] = 1.0
    return out


def constant_rule(instance: GameInstance, provider_idx: int, message: int = 0, label="constant") -> ProviderRule:
    """Rule sending the same message at every provider turn (no information)."""
    nx = len(instance.provider_features[provider_idx])
    return ProviderRule({}, default=one_hot([message] * nx, instance.n_messages), label=label)


def signal_rule(instance: GameInstance, signal: Sequence[int], label="") -> ProviderRule:
    """Deterministic rule mapping feature index ``x`` to ``signal[x]`` at the first provider turn.

    Later provider turns send message 0.
    """
    first = instance.speakers.index("P")
    tables = {p: one_hot(signal, instance.n_messages) for p in itertools.product(range(instance.n_messages), repeat=first)}
    return ProviderRule(tables, default=one_hot([0] * len(signal), instance.n_messages), label=label)


def count_deterministic_rules(instance: GameInstance, provider_idx: int) -> int:
    nx = len(instance.provider_features[provider_idx])
    return instance.n_messages ** (nx * len(instance.provider_prefixes()))


def enumerate_deterministic_rules(
    instance: GameInstance, provider_idx: int, cap: int = DEFAULT_CAP
) -> Iterator[ProviderRule]:
    """All deterministic rules readable from the provider's features, in lexicographic order."""
    total = count_deterministic_rules(instance, provider_idx)
    if total > cap:
        raise SearchSpaceTooLarge(total, cap)
    nx = len(instance.provider_features[provider_idx])
    prefixes = instance.provider_prefixes()
    nm = instance.n_messages
    eye = np.eye(nm)
    for flat in itertools.product(range(nm), repeat=nx * len(prefixes)):
        choice = np.asarray(flat, dtype=int).reshape(len(prefixes), nx)
        yield ProviderRule({p: eye[choice[b]] for b, p in enumerate(prefixes)}, label="det:" + "".join(map(str, flat)))
