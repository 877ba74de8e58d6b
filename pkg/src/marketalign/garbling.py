"""Common garblings, shared conversation rules and the shared-rule benchmark."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidInstance, MessageSpaceTooSmall, SearchSpaceTooLarge
from .game import DEFAULT_CAP, GameInstance, ProviderRule, one_hot
from .interaction import evaluate_user


@dataclass(eq=False)
class GarblingSpec:
    """A variable ``z`` every provider in ``maps`` can simulate from its own features.

    ``maps[j]`` is an ``(n_features_j, n_z)`` row-stochastic table ``f_j``;
    ``reference[y, z]`` is ``Pr(z | y)``.
    """

    labels: list[str]
    maps: dict[int, np.ndarray]
    reference: np.ndarray

    def __post_init__(self):
        self.labels = [str(z) for z in self.labels]
        self.maps = {int(j): np.asarray(f, dtype=float) for j, f in self.maps.items()}
        self.reference = np.asarray(self.reference, dtype=float)
        nz = len(self.labels)
        for j, f in self.maps.items():
            if f.ndim != 2 or f.shape[1] != nz:
                raise DimensionMismatch(f"garbling map for provider {j} must have {nz} columns")
            if np.any(f < 0) or np.any(np.abs(f.sum(axis=1) - 1) > 1e-12):
                raise InvalidInstance(f"garbling map for provider {j} is not row-stochastic")
        if self.reference.ndim != 2 or self.reference.shape[1] != nz:
            raise DimensionMismatch("reference table must be (n_states, n_z)")

    @property
    def n_z(self) -> int:
        return len(self.labels)

    @property
    def providers(self) -> list[int]:
        return sorted(self.maps)

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "maps": {str(j): f.tolist() for j, f in sorted(self.maps.items())},
            "reference": self.reference.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "GarblingSpec":
        return cls(d["labels"], {int(j): np.asarray(f) for j, f in d["maps"].items()}, np.asarray(d["reference"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _provider_conditional(instance, j, f):
    """``E[f_j(xP_j) = z | y]`` as a ``(Y, Z)`` table (rows of zero-probability states are 0)."""
    pyx = instance.provider_marginal(j)  # (Y, XP)
    py = pyx.sum(axis=1, keepdims=True)
    cond = np.divide(pyx, py, out=np.zeros_like(pyx), where=py > 0)
    return cond @ f


def validate_garbling(instance: GameInstance, providers: Sequence[int], garbling: GarblingSpec):
    """Check the defining equality for each provider; returns ``(passed, max_violation)``."""
    py = instance.state_marginal()
    if garbling.reference.shape[0] != instance.n_states:
        raise DimensionMismatch("reference table has the wrong number of states")
    worst = 0.0
    for j in providers:
        if j not in garbling.maps:
            return False, float("inf")
        f = garbling.maps[j]
        if f.shape[0] != len(instance.provider_features[j]):
            raise DimensionMismatch(f"garbling map for provider {j} has wrong row count")
        gap = np.abs(_provider_conditional(instance, j, f) - garbling.reference)[py > 0]
        worst = max(worst, float(gap.max(initial=0.0)))
    return worst <= 1e-9, worst


def trivial_garbling(instance: GameInstance, providers: Sequence[int]) -> GarblingSpec:
    """A constant ``z``: always a common garbling, carries no information."""
    maps = {j: np.ones((len(instance.provider_features[j]), 1)) for j in providers}
    return GarblingSpec(["*"], maps, np.ones((instance.n_states, 1)))


def identical_features_garbling(instance: GameInstance, providers: Sequence[int]) -> GarblingSpec:
    """``z`` equal to a feature every provider in ``providers`` observes identically.

    Requires the providers' feature variables to coincide almost surely
    (same label set, equal index with probability one).
    """
    providers = list(providers)
    j0 = providers[0]
    labels = instance.provider_features[j0]
    n = instance.n_users
    for j in providers[1:]:
        if instance.provider_features[j] != labels:
            raise InvalidInstance(f"providers {j0} and {j} have different feature labels")
        axes = tuple(ax for ax in range(instance.prior.ndim) if ax not in (1 + n + j0, 1 + n + j))
        pair = instance.prior.sum(axis=axes)
        if j < j0:
            pair = pair.T
        if np.abs(pair - np.diag(np.diag(pair))).max() > 1e-12:
            raise InvalidInstance(f"providers {j0} and {j} do not observe the same feature")
    eye = np.eye(len(labels))
    reference = _provider_conditional(instance, j0, eye)
    return GarblingSpec(list(labels), {j: eye.copy() for j in providers}, reference)


def coordinate_subset_garbling(
    instance: GameInstance,
    providers: Sequence[int],
    coord_sizes: Sequence[int],
    provider_coords: dict[int, Sequence[int]],
) -> GarblingSpec:
    """Garbling for states that are tuples of independent coordinates.

    State ``y`` is indexed in C order over ``coord_sizes``; provider ``j``
    observes the coordinates ``provider_coords[j]`` (its features indexed in
    C order over those coordinates). ``z`` is the intersection of the
    observed coordinate sets.
    """
    providers = list(providers)
    common = sorted(set.intersection(*(set(provider_coords[j]) for j in providers)))
    z_sizes = [coord_sizes[c] for c in common]
    z_tuples = list(itertools.product(*(range(s) for s in z_sizes)))
    z_index = {zt: b for b, zt in enumerate(z_tuples)}
    labels = ["(" + ",".join(map(str, zt)) + ")" for zt in z_tuples]
    maps = {}
    for j in providers:
        coords = list(provider_coords[j])
        x_tuples = list(itertools.product(*(range(coord_sizes[c]) for c in coords)))
        if len(x_tuples) != len(instance.provider_features[j]):
            raise DimensionMismatch(f"provider {j} features do not match its coordinates")
        pick = [coords.index(c) for c in common]
        rows = [z_index[tuple(xt[p] for p in pick)] for xt in x_tuples]
        maps[j] = one_hot(rows, len(z_tuples))
    y_tuples = list(itertools.product(*(range(s) for s in coord_sizes)))
    if len(y_tuples) != instance.n_states:
        raise DimensionMismatch("coordinate sizes do not match the state space")
    reference = one_hot([z_index[tuple(yt[c] for c in common)] for yt in y_tuples], len(z_tuples))
    return GarblingSpec(labels, maps, reference)


# shared rules -----------------------------------------------------------------


def _sub_speakers(instance: GameInstance, rounds: int) -> str:
    if rounds < 0 or rounds > instance.rounds:
        raise ValueError(f"rounds must be in [0, {instance.rounds}]")
    return instance.speakers[instance.rounds - rounds :]


def compose_shared_rule(
    instance: GameInstance,
    provider_idx: int,
    garbling: GarblingSpec,
    shared: dict[tuple[int, ...], np.ndarray],
    offset: int = 0,
    branch_prefix: tuple[int, ...] = (),
) -> dict[tuple[int, ...], np.ndarray]:
    """Provider-feature tables implementing a shared rule on ``z``.

    ``shared[h]`` is ``(n_z, n_messages)`` for relative transcript ``h``.
    The provider draws ``z ~ f_j(xP)`` once; later turns condition on the
    provider's own earlier messages, so randomized garblings stay coherent
    across rounds. Returned keys are absolute prefixes starting with
    ``branch_prefix`` (of length ``offset``).
    """
    f = garbling.maps[provider_idx]
    nm = instance.n_messages
    out = {}
    for t in range(offset, instance.rounds):
        if instance.speakers[t] != "P":
            continue
        for rel in itertools.product(range(nm), repeat=t - offset):
            h = branch_prefix + rel
            post = f.copy()  # (XP, Z), unnormalized P(z, own messages | xP)
            for s in range(len(rel)):
                if instance.speakers[offset + s] == "P":
                    post = post * shared[rel[:s]][:, rel[s]][None, :]
            mass = post.sum(axis=1, keepdims=True)
            table = np.divide(post, mass, out=np.full_like(post, 1.0 / post.shape[1]), where=mass > 0) @ shared[rel]
            out[h] = table
    return out


def shared_rule_as_provider_rule(
    instance: GameInstance, provider_idx: int, garbling: GarblingSpec, shared: dict, label="shared"
) -> ProviderRule:
    return ProviderRule(compose_shared_rule(instance, provider_idx, garbling, shared), label=label)


def revelation_shared_rule(instance: GameInstance, garbling: GarblingSpec, rounds: int | None = None) -> dict:
    """Shared tables revealing ``z`` at the first provider turn of the last ``rounds`` rounds."""
    rounds = instance.rounds if rounds is None else rounds
    sp = _sub_speakers(instance, rounds)
    if "P" not in sp:
        raise MessageSpaceTooSmall("no provider turn in which to reveal z")
    if instance.n_messages < garbling.n_z:
        raise MessageSpaceTooSmall(f"|M|={instance.n_messages} < |Z|={garbling.n_z}")
    first = sp.index("P")
    nm, nz = instance.n_messages, garbling.n_z
    tables = {}
    for t, who in enumerate(sp):
        if who != "P":
            continue
        for h in itertools.product(range(nm), repeat=t):
            tables[h] = one_hot(range(nz), nm) if t == first else one_hot([0] * nz, nm)
    return tables


def enumerate_shared_rules(
    instance: GameInstance, garbling: GarblingSpec, rounds: int | None = None, cap: int = DEFAULT_CAP
) -> Iterator[dict]:
    """All deterministic shared rules on ``z`` over the last ``rounds`` rounds."""
    rounds = instance.rounds if rounds is None else rounds
    sp = _sub_speakers(instance, rounds)
    nm, nz = instance.n_messages, garbling.n_z
    prefixes = [h for t, who in enumerate(sp) if who == "P" for h in itertools.product(range(nm), repeat=t)]
    total = nm ** (nz * len(prefixes))
    if total > cap:
        raise SearchSpaceTooLarge(total, cap)
    eye = np.eye(nm)
    for flat in itertools.product(range(nm), repeat=nz * len(prefixes)):
        c = np.asarray(flat, dtype=int).reshape(len(prefixes), nz)
        yield {h: eye[c[b]] for b, h in enumerate(prefixes)}


def _revelation_value(instance, user_idx, provider_idx, garbling):
    """``E_{z,xU}[max_a E[u(a, y) | z, xU]]`` with ``z`` drawn through provider j's map."""
    joint = instance.pair_marginal(user_idx, provider_idx)  # (Y, XU, XP)
    pz = np.einsum("yux,xz->uzy", joint, garbling.maps[provider_idx])
    eu = np.einsum("ay,uzy->uza", instance.user_utils[user_idx], pz)
    return float(eu.max(axis=-1).sum())


def _subgame(instance: GameInstance, rounds: int) -> GameInstance:
    """Same instance restricted to its last ``rounds`` rounds (rounds >= 1)."""
    if rounds == instance.rounds:
        return instance
    return GameInstance(
        states=instance.states,
        user_features=instance.user_features,
        provider_features=instance.provider_features,
        prior=instance.prior,
        action_sets=instance.action_sets,
        user_utils=instance.user_utils,
        provider_utils=instance.provider_utils,
        messages=instance.messages,
        rounds=rounds,
        speakers=_sub_speakers(instance, rounds),
        action_order=instance.action_order,
        provider_order=instance.provider_order,
        name=instance.name,
    )


def no_information_value(instance: GameInstance, user_idx: int) -> float:
    """Utility from acting on the prior and the user's own feature alone."""
    joint = instance.prior.sum(axis=tuple(ax for ax in range(1, instance.prior.ndim) if ax != 1 + user_idx))
    eu = np.einsum("ay,yu->ua", instance.user_utils[user_idx], joint)
    return float(eu.max(axis=-1).sum())


def shared_rule_values(
    instance: GameInstance,
    user_idx: int,
    garbling: GarblingSpec,
    rounds: int | None = None,
    method: str = "auto",
    cap: int = DEFAULT_CAP,
) -> dict[int, float]:
    """Best shared-rule utility for the user, separately through each provider's map."""
    rounds = instance.rounds if rounds is None else rounds
    sp = _sub_speakers(instance, rounds)
    providers = garbling.providers
    if "P" not in sp:
        v = no_information_value(instance, user_idx)
        return {j: v for j in providers}
    if method not in ("auto", "revelation", "enumerate"):
        raise ValueError(f"unknown method {method!r}")
    if method != "enumerate" and instance.n_messages >= garbling.n_z:
        return {j: _revelation_value(instance, user_idx, j, garbling) for j in providers}
    if method == "revelation":
        raise MessageSpaceTooSmall(f"|M|={instance.n_messages} < |Z|={garbling.n_z}")
    sub = _subgame(instance, rounds)
    out = {}
    for j in providers:
        best = -np.inf
        for shared in enumerate_shared_rules(sub, garbling, cap=cap):
            rule = shared_rule_as_provider_rule(sub, j, garbling, shared)
            best = max(best, evaluate_user(sub, user_idx, rule, j, with_strategy=False).utility)
        out[j] = float(best)
    return out


def benchmark_shared(
    instance: GameInstance,
    user_idx: int,
    garbling: GarblingSpec,
    rounds: int | None = None,
    method: str = "auto",
    cap: int = DEFAULT_CAP,
) -> float:
    """Utility of the user's optimal shared conversation rule.

    The shared rule reads only ``z``. Revealing ``z`` is optimal for a
    best-responding user, so the value is ``E[max_a E[u(a, y) | z, xU]]``;
    when ``|M| < |Z|`` all deterministic shared rules are enumerated
    instead (``method="auto"``). ``rounds`` counts the trailing rounds of
    the conversation available to the rule (``0`` means no information).
    If providers' maps induce different joints with the user's feature,
    the minimum over providers is returned, which every provider in the
    set can guarantee.
    """
    vals = shared_rule_values(instance, user_idx, garbling, rounds, method, cap)
    return min(vals.values())


def best_shared_rule(
    instance: GameInstance, user_idx: int, garbling: GarblingSpec, rounds: int, provider_idx: int, cap: int = DEFAULT_CAP
) -> dict:
    """Shared tables attaining the benchmark for ``user_idx`` through provider ``provider_idx``."""
    try:
        return revelation_shared_rule(instance, garbling, rounds)
    except MessageSpaceTooSmall:
        if "P" not in _sub_speakers(instance, rounds):
            raise
    sub = _subgame(instance, rounds)
    best, best_val = None, -np.inf
    for shared in enumerate_shared_rules(sub, garbling, cap=cap):
        rule = shared_rule_as_provider_rule(sub, provider_idx, garbling, shared)
        v = evaluate_user(sub, user_idx, rule, provider_idx, with_strategy=False).utility
        if v > best_val + 1e-12:
            best, best_val = shared, v
    return best


__all__ = [
    "GarblingSpec",
    "validate_garbling",
    "trivial_garbling",
    "identical_features_garbling",
    "coordinate_subset_garbling",
    "compose_shared_rule",
    "shared_rule_as_provider_rule",
    "revelation_shared_rule",
    "enumerate_shared_rules",
    "benchmark_shared",
    "shared_rule_values",
    "best_shared_rule",
    "no_information_value",
]
