"""Generators for the concrete instances used throughout the test suites,
plus random instances with exact alignment and the special provider rules
(full revelation, identity elicitation)."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .alignment import StrongAlignmentCert, WeakAlignmentCert
from .errors import DimensionMismatch, MessageSpaceTooSmall, NotApplicable, ParameterViolation
from .game import GameInstance, ProviderRule, SeparableUtility, alternating_speakers, one_hot, signal_rule
from .garbling import GarblingSpec, best_shared_rule, compose_shared_rule

BOTTOM = "⊥"


def prior_from_conditionals(
    state_probs: Sequence[float],
    user_conditionals: Sequence[np.ndarray],
    provider_conditionals: Sequence[np.ndarray],
) -> np.ndarray:
    """Joint prior in which all features are independent given the state.

    Each conditional is a ``(Y, X)`` table of ``Pr(x | y)``. Deterministic
    conditionals (one-hot rows) let several parties observe the same
    function of ``y``.
    """
    p = np.asarray(state_probs, dtype=float)
    conds = [np.asarray(c, dtype=float) for c in list(user_conditionals) + list(provider_conditionals)]
    for c in conds:
        if c.shape[0] != p.size:
            raise DimensionMismatch("every conditional needs one row per state")
    letters = "abcdefghijklmnopqrstuvwxz"[: len(conds)]
    spec = ",".join(["y"] + [f"y{l}" for l in letters]) + "->y" + letters
    return np.einsum(spec, p, *conds)


def _blind(n_states: int) -> np.ndarray:
    return np.ones((n_states, 1))


# fixed constructions --------------------------------------------------------------


def make_public_example(eps: float, c: float, M: int, D: float) -> GameInstance:
    """Two providers, two users, an anonymous equilibrium that reveals nothing.

    Both providers see the state ``y`` (uniform on ``1..M``); users see
    nothing and pick from ``1..M`` or ``⊥``. Each provider gets a small
    reward when its own user matches the state and a large one when the
    other user abstains, so silence is stable although revealing ``y``
    would give each user ``c``.
    """
    if not (0 < eps < c <= 1):
        raise ParameterViolation(f"need 0 < eps < c <= 1, got eps={eps}, c={c}")
    if int(M) != M or M <= c / eps:
        raise ParameterViolation(f"need an integer M > c/eps = {c / eps:g}, got {M}")
    if not D > 1:
        raise ParameterViolation(f"need D > 1, got {D}")
    M = int(M)
    states = [str(s) for s in range(1, M + 1)]
    actions = states + [BOTTOM]
    match = np.vstack([np.eye(M), np.zeros((1, M))])  # 1[a = y]
    abstain = np.zeros((M + 1, M))
    abstain[M] = 1.0  # 1[a = ⊥]
    user = c * match + eps * abstain
    small, large = 1.0 / (D + 1), D / (D + 1)
    sep = SeparableUtility(
        lam=np.array([[small, large], [large, small]]),
        components=[[match, abstain], [abstain, match]],
        const=np.zeros(2),
    )
    eye = np.eye(M)
    prior = prior_from_conditionals(np.full(M, 1.0 / M), [_blind(M), _blind(M)], [eye, eye])
    return GameInstance(
        states=states,
        user_features=[["-"], ["-"]],
        provider_features=[states, states],
        prior=prior,
        action_sets=[actions, actions],
        user_utils=[user, user.copy()],
        provider_utils=None,
        messages=states,
        rounds=1,
        separable=sep,
        name=f"public-example(eps={eps:g},c={c:g},M={M},D={D:g})",
    )


def public_example_weak_cert(instance: GameInstance, eps: float, c: float) -> WeakAlignmentCert:
    """Exact weak certificate read off the separable form of :func:`make_public_example`."""
    sep = instance.separable
    # u_i = c * F_{i,i} + eps * F_{other,i}
    w = np.array([[c, eps], [eps, c]])
    return WeakAlignmentCert([0, 1], sep.components, sep.lam, sep.const, w, np.zeros(2))


def make_strict_separation() -> GameInstance:
    """Finite instance that is exactly weakly aligned but far from strongly aligned.

    Two users with actions ``{0, 1}``, two equally likely states
    ``(1,0)`` and ``(0,1)``. Provider ``j`` is paid ``a_i * y_j / 2`` per
    user; every user is paid ``a_i / 4``.
    """
    states = ["(1,0)", "(0,1)"]
    a = np.array([0.0, 1.0])
    coord = np.eye(2)  # coord[j, y] = y_j
    comps = [[np.outer(a, coord[j]) / 2 for _ in range(2)] for j in range(2)]
    user = 0.5 * comps[0][0] + 0.5 * comps[1][0]
    sep = SeparableUtility(lam=np.ones((2, 2)), components=comps, const=np.zeros(2))
    eye = np.eye(2)
    prior = prior_from_conditionals([0.5, 0.5], [_blind(2), _blind(2)], [eye, eye])
    return GameInstance(
        states=states,
        user_features=[["-"], ["-"]],
        provider_features=[states, states],
        prior=prior,
        action_sets=[["0", "1"], ["0", "1"]],
        user_utils=[user, user.copy()],
        provider_utils=None,
        messages=["m0", "m1"],
        separable=sep,
        name="strict-separation",
    )


def strict_separation_weak_cert(instance: GameInstance) -> WeakAlignmentCert:
    sep = instance.separable
    return WeakAlignmentCert([0, 1], sep.components, sep.lam, sep.const, np.full((2, 2), 0.5), np.zeros(2))


def make_adding_users_base() -> GameInstance:
    """One provider who sees the state and one blind user; exactly strongly aligned."""
    states = ["y1", "y2"]
    match = np.vstack([np.eye(2), np.zeros((1, 2))])
    abstain = np.zeros((3, 2))
    abstain[2] = 1.0
    user = match + (2.0 / 3.0) * abstain
    provider = 0.5 * match + (1.0 / 3.0) * abstain
    prior = prior_from_conditionals([0.5, 0.5], [_blind(2)], [np.eye(2)])
    return GameInstance(
        states=states,
        user_features=[["-"]],
        provider_features=[states],
        prior=prior,
        action_sets=[states + [BOTTOM]],
        user_utils=[user],
        provider_utils=None,
        messages=["m1", "m2"],
        separable=SeparableUtility(np.array([[0.5]]), [[user]], np.zeros(1)),
        name="adding-users-base",
    )


def make_public_adding_users() -> GameInstance:
    """The base game above plus a second, identical user whose abstention pays the provider."""
    base = make_adding_users_base()
    new_user = base.user_utils[0].copy()
    abstain = np.zeros((3, 2))
    abstain[2] = 1.0
    spec = AugmentedGameSpec(
        actions=list(base.action_sets[0]),
        utility=new_user,
        beta=[0.5],
        perturbation=abstain,
    )
    out = augment(base, spec)
    out.name = "public-adding-users"
    return out


# augmentation ---------------------------------------------------------------------


@dataclass
class AugmentedGameSpec:
    """A new user entering an existing market.

    ``feature_given_state`` is ``Pr(x | y)`` for the newcomer's private
    feature (independent of everything else given ``y``); the default is
    a single uninformative feature. ``perturbation`` is one ``(A_new, Y)``
    table shared by all providers, or a list with one table per provider.
    """

    actions: list[str]
    utility: np.ndarray
    beta: Sequence[float]
    perturbation: np.ndarray | list[np.ndarray]
    feature_labels: list[str] = field(default_factory=lambda: ["-"])
    feature_given_state: np.ndarray | None = None

    def perturbations(self, k: int) -> list[np.ndarray]:
        if isinstance(self.perturbation, (list, tuple)):
            fs = [np.asarray(f, dtype=float) for f in self.perturbation]
        else:
            fs = [np.asarray(self.perturbation, dtype=float)] * k
        if len(fs) != k:
            raise DimensionMismatch("need one perturbation per provider")
        return fs


def augment(instance: GameInstance, spec: AugmentedGameSpec) -> GameInstance:
    """Add user ``n`` and mix each provider's utility with the newcomer's perturbation.

    Provider ``j`` gets ``(1 - beta_j) * u_j(a_1..a_n, y) + beta_j * f_j(a_new, y)``;
    the original users' tables are copied unchanged.
    """
    n, k, ny = instance.n_users, instance.n_providers, instance.n_states
    beta = np.asarray(spec.beta, dtype=float)
    if beta.shape != (k,) or np.any(beta <= 0) or np.any(beta >= 1):
        raise ParameterViolation("every beta_j must lie strictly between 0 and 1")
    fs = spec.perturbations(k)
    na = len(spec.actions)
    for f in fs:
        if f.shape != (na, ny):
            raise DimensionMismatch(f"perturbation has shape {f.shape}, expected {(na, ny)}")
        if np.any(f < 0) or np.any(f > 1):
            raise ParameterViolation("perturbation values must lie in [0, 1]")
    cond = _blind(ny) if spec.feature_given_state is None else np.asarray(spec.feature_given_state, dtype=float)
    if cond.shape != (ny, len(spec.feature_labels)):
        raise DimensionMismatch("feature_given_state must be (Y, X_new)")

    # new user's feature axis goes after the existing user axes
    prior = np.expand_dims(instance.prior, axis=1 + n)
    shape = [1] * prior.ndim
    shape[0], shape[1 + n] = ny, cond.shape[1]
    prior = prior * cond.reshape(shape)

    dense = []
    for j in range(k):
        base = np.expand_dims(instance.provider_utils[j], axis=n)
        dense.append((1 - beta[j]) * base + beta[j] * fs[j].reshape((1,) * n + fs[j].shape))
    sep = None
    if instance.separable is not None:
        old = instance.separable
        lam = np.hstack([(1 - beta)[:, None] * old.lam, beta[:, None]])
        comps = [list(old.components[j]) + [fs[j]] for j in range(k)]
        sep = SeparableUtility(lam, comps, (1 - beta) * old.const)

    return GameInstance(
        states=instance.states,
        user_features=instance.user_features + [list(spec.feature_labels)],
        provider_features=instance.provider_features,
        prior=prior,
        action_sets=instance.action_sets + [list(spec.actions)],
        user_utils=list(instance.user_utils) + [np.asarray(spec.utility, dtype=float)],
        provider_utils=dense,
        messages=instance.messages,
        rounds=instance.rounds,
        speakers=instance.speakers,
        action_order=instance.action_order + [list(range(na))],
        provider_order=instance.provider_order,
        separable=sep,
        name=f"{instance.name}+user" if instance.name else "augmented",
    )


def augment_weak_cert(cert: WeakAlignmentCert, spec: AugmentedGameSpec, n_actions_new: int | None = None) -> WeakAlignmentCert:
    """Carry a weak certificate into the augmented game.

    The newcomer becomes one more separable component with weight
    ``beta_j``; original weights shrink by ``1 - beta_j``. Guarantees stay
    restricted to the original users.
    """
    beta = np.asarray(spec.beta, dtype=float)
    sel = beta[cert.providers]
    fs = spec.perturbations(len(beta))
    lam = np.hstack([(1 - sel)[:, None] * cert.lam, sel[:, None]])
    comps = [list(row) + [fs[j]] for row, j in zip(cert.components, cert.providers)]
    w = np.hstack([cert.w, np.zeros((len(cert.providers), 1))])
    return WeakAlignmentCert(
        cert.providers,
        comps,
        lam,
        (1 - sel) * cert.provider_const,
        w,
        np.append(cert.user_const, 0.0),
        eps_P=float(np.max((1 - sel) * cert.eps_P)) if len(sel) else 0.0,
        eps_U=cert.eps_U,
        users=list(cert.users),
    )


# special rules --------------------------------------------------------------------


def make_full_revelation_rule(instance: GameInstance, provider_idx: int) -> ProviderRule:
    """Send the provider's feature index at the first provider turn, message 0 afterwards."""
    nx = len(instance.provider_features[provider_idx])
    if instance.n_messages < nx:
        raise MessageSpaceTooSmall(f"|M|={instance.n_messages} < |X_P|={nx}")
    return signal_rule(instance, list(range(nx)), label="full-revelation")


def make_identity_elicitation_rule(
    instance: GameInstance, provider_idx: int, garbling: GarblingSpec, cap: int | None = None
) -> ProviderRule:
    """Let the user pick a branch with the first message, then serve that user's best shared rule.

    The user's first message ``m`` selects branch ``m mod n``; the
    remaining rounds run the optimal shared rule for that user over the
    last ``R - 1`` rounds. Needs a user-first conversation.
    """
    n, R = instance.n_users, instance.rounds
    if R < 2:
        raise NotApplicable("identity elicitation consumes a round; needs R >= 2")
    if instance.n_messages < n:
        raise MessageSpaceTooSmall(f"|M|={instance.n_messages} < N={n}")
    if instance.speakers[0] != "U":
        raise NotApplicable("identity elicitation needs the user to speak first")
    kwargs = {} if cap is None else {"cap": cap}
    per_user = [best_shared_rule(instance, i, garbling, R - 1, provider_idx, **kwargs) for i in range(n)]
    tables = {}
    for m in range(instance.n_messages):
        tables.update(compose_shared_rule(instance, provider_idx, garbling, per_user[m % n], offset=1, branch_prefix=(m,)))
    nx = len(instance.provider_features[provider_idx])
    return ProviderRule(tables, default=one_hot([0] * nx, instance.n_messages), label="identity-elicitation")


# random instances -----------------------------------------------------------------


def _random_conditional(rng: np.random.Generator, ny: int, nx: int) -> np.ndarray:
    return rng.dirichlet(np.ones(nx), size=ny)


def _random_structure(rng, n, k, n_states, n_actions, n_user_features, n_provider_features):
    """Prior, action sets and labels shared by the random generators.

    All providers observe the same deterministic function of the state, so
    the identity garbling on that feature is a common garbling.
    """
    ny = n_states
    p_y = rng.dirichlet(np.ones(ny))
    signal = rng.integers(0, n_provider_features, size=ny)
    signal[: min(ny, n_provider_features)] = np.arange(min(ny, n_provider_features))
    pconds = [one_hot(signal, n_provider_features) for _ in range(k)]
    uconds = [_random_conditional(rng, ny, n_user_features) for _ in range(n)]
    prior = prior_from_conditionals(p_y, uconds, pconds)
    acts = [[f"a{b}" for b in range(n_actions)] for _ in range(n)]
    return prior, acts


def random_instance(
    rng: np.random.Generator,
    n: int = 2,
    k: int = 2,
    n_states: int = 2,
    n_actions: int = 2,
    n_user_features: int = 1,
    n_provider_features: int = 2,
    n_messages: int | None = None,
    rounds: int = 1,
    speakers: str | None = None,
) -> GameInstance:
    """Generic instance with uniform random utilities and no alignment structure."""
    prior, acts = _random_structure(rng, n, k, n_states, n_actions, n_user_features, n_provider_features)
    users = [rng.random((n_actions, n_states)) for _ in range(n)]
    providers = [rng.random((n_actions,) * n + (n_states,)) for _ in range(k)]
    nm = n_provider_features if n_messages is None else n_messages
    return GameInstance(
        states=[f"y{s}" for s in range(n_states)],
        user_features=[[f"u{x}" for x in range(n_user_features)] for _ in range(n)],
        provider_features=[[f"x{x}" for x in range(n_provider_features)] for _ in range(k)],
        prior=prior,
        action_sets=acts,
        user_utils=users,
        provider_utils=providers,
        messages=[f"m{b}" for b in range(nm)],
        rounds=rounds,
        speakers=speakers or alternating_speakers(rounds),
        name="random",
    )


def random_weak_aligned_instance(
    rng: np.random.Generator,
    n: int = 2,
    k: int = 2,
    n_states: int = 2,
    n_actions: int = 2,
    n_user_features: int = 1,
    n_provider_features: int = 2,
    n_messages: int | None = None,
    rounds: int = 1,
    speakers: str | None = None,
) -> tuple[GameInstance, WeakAlignmentCert]:
    """Random instance with an exact weak certificate over all providers.

    Components ``F`` are uniform on ``[0, 1]``. Provider weights are a
    random sub-stochastic row; user weights are a random distribution over
    the providers that weigh that user, so utilities stay in ``[0, 1]``.
    """
    base = random_instance(rng, n, k, n_states, n_actions, n_user_features, n_provider_features, n_messages, rounds, speakers)
    comps = [[rng.random((n_actions, n_states)) for _ in range(n)] for _ in range(k)]
    lam = rng.random((k, n)) * (rng.random((k, n)) < 0.8)
    for i in range(n):
        if not np.any(lam[:, i] > 0):
            lam[rng.integers(k), i] = rng.random() + 0.1
    lam = lam / lam.sum(axis=1, keepdims=True).clip(min=1.0) * rng.uniform(0.5, 1.0, size=(k, 1))
    w = np.zeros((k, n))
    for i in range(n):
        support = np.flatnonzero(lam[:, i] > 0)
        w[support, i] = rng.dirichlet(np.ones(support.size))
    const = np.zeros(k)
    sep = SeparableUtility(lam, comps, const)
    users = [sum(w[j, i] * comps[j][i] for j in range(k)) for i in range(n)]
    inst = GameInstance(
        states=base.states,
        user_features=base.user_features,
        provider_features=base.provider_features,
        prior=base.prior,
        action_sets=base.action_sets,
        user_utils=users,
        provider_utils=None,
        messages=base.messages,
        rounds=base.rounds,
        speakers=base.speakers,
        separable=sep,
        name="random-weak",
    )
    return inst, WeakAlignmentCert(list(range(k)), comps, lam, const, w, np.zeros(n))


def random_strong_aligned_instance(
    rng: np.random.Generator,
    n: int = 2,
    k: int = 2,
    n_states: int = 2,
    n_actions: int = 2,
    n_user_features: int = 1,
    n_provider_features: int = 2,
    n_messages: int | None = None,
    rounds: int = 1,
    speakers: str | None = None,
) -> tuple[GameInstance, StrongAlignmentCert]:
    """Random instance where each provider utility is an exact nonnegative mix of user utilities."""
    base = random_instance(rng, n, k, n_states, n_actions, n_user_features, n_provider_features, n_messages, rounds, speakers)
    lam = rng.random((k, n)) + 0.05
    lam = lam / lam.sum(axis=1, keepdims=True) * rng.uniform(0.5, 1.0, size=(k, 1))
    const = np.zeros(k)
    sep = SeparableUtility(lam, [list(base.user_utils) for _ in range(k)], const)
    inst = GameInstance(
        states=base.states,
        user_features=base.user_features,
        provider_features=base.provider_features,
        prior=base.prior,
        action_sets=base.action_sets,
        user_utils=base.user_utils,
        provider_utils=None,
        messages=base.messages,
        rounds=base.rounds,
        speakers=base.speakers,
        separable=sep,
        name="random-strong",
    )
    return inst, StrongAlignmentCert(list(range(k)), lam, const, 0.0)


CONSTRUCTIONS = {
    "public-example": make_public_example,
    "strict-separation": make_strict_separation,
    "public-adding-users": make_public_adding_users,
    "adding-users-base": make_adding_users_base,
}
