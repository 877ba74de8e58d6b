"""Exact evaluation of user/provider conversations.

Everything here sums over the prior and every randomization branch; nothing
is sampled. Provider and user turns follow ``instance.speakers``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyActionSet, SearchSpaceTooLarge, UndefinedRuleRow
from .game import (
    DEFAULT_CAP,
    TIE_TOL,
    GameInstance,
    InducedDistribution,
    ProviderRule,
    UserStrategy,
    one_hot,
)


def tie_break_argmax(values: np.ndarray, order: Sequence[int], tol: float = TIE_TOL) -> np.ndarray:
    """Argmax over the last axis, resolving near-ties by ``order``.

    Among entries within ``tol`` of the maximum, the one appearing first in
    ``order`` wins.
    """
    values = np.asarray(values, dtype=float)
    order = np.asarray(order, dtype=int)
    reordered = values[..., order]
    best = reordered.max(axis=-1, keepdims=True)
    first = np.argmax(reordered >= best - tol, axis=-1)
    return order[first]


def best_response_decision(instance: GameInstance, user_idx: int, posterior, feature=None) -> int:
    """Action maximizing expected utility under ``posterior`` over states.

    ``feature`` is accepted for interface symmetry; utilities do not depend on it.
    """
    if instance.n_actions(user_idx) == 0:
        raise EmptyActionSet(f"user {user_idx} has no actions")
    posterior = np.asarray(posterior, dtype=float)
    if posterior.shape != (instance.n_states,):
        raise DimensionMismatch("posterior must be a vector over states")
    eu = instance.user_utils[user_idx] @ posterior
    return int(tie_break_argmax(eu, instance.action_order[user_idx]))


def _check_rule_shape(instance, rule, provider_idx):
    nx = len(instance.provider_features[provider_idx])
    for p, t in list(rule.tables.items()) + ([((), rule.default)] if rule.default is not None else []):
        if t.shape != (nx, instance.n_messages):
            raise DimensionMismatch(
                f"rule table at {p} has shape {t.shape}, expected {(nx, instance.n_messages)}"
            )
        if len(p) >= instance.rounds:
            raise DimensionMismatch(f"rule prefix {p} is longer than the conversation")


def simulate_interaction(
    instance: GameInstance,
    provider_rule: ProviderRule,
    provider_idx: int,
    user_strategy: UserStrategy,
    user_idx: int,
) -> InducedDistribution:
    """Exact ``(a_i, y)`` distribution of one user conversing with one provider."""
    _check_rule_shape(instance, provider_rule, provider_idx)
    joint = instance.pair_marginal(user_idx, provider_idx)  # (Y, XU, XP)
    n_act = instance.n_actions(user_idx)
    out = np.zeros((n_act, instance.n_states))
    R = instance.rounds

    def walk(prefix, w, u):
        # w: (Y, XP) probability of reaching prefix together with (y, xP), given xU = u
        t = len(prefix)
        if t == R:
            d = user_strategy.decision.get(prefix)
            if d is None:
                raise UndefinedRuleRow(f"user decision undefined at transcript {prefix}")
            d = np.asarray(d)
            if d.shape[1] != n_act:
                raise DimensionMismatch("decision table width differs from action count")
            out[:] += np.outer(d[u], w.sum(axis=1))
            return
        if instance.speakers[t] == "P":
            table = provider_rule.table(prefix)
            if table is None:
                raise UndefinedRuleRow(f"provider {provider_idx} rule undefined at prefix {prefix}")
            for m in range(instance.n_messages):
                w2 = w * table[:, m][None, :]
                if w2.sum() > 0:
                    walk(prefix + (m,), w2, u)
        else:
            conv = user_strategy.conversation.get(prefix)
            if conv is None:
                raise UndefinedRuleRow(f"user conversation undefined at prefix {prefix}")
            conv = np.asarray(conv)
            if conv.shape[1] != instance.n_messages:
                raise DimensionMismatch("user conversation table width differs from |M|")
            for m in range(instance.n_messages):
                if conv[u, m] > 0:
                    walk(prefix + (m,), w * conv[u, m], u)

    for u in range(joint.shape[1]):
        w0 = joint[:, u, :]
        if w0.sum() > 0:
            walk((), w0.copy(), u)
    return InducedDistribution(out, "single")


@dataclass
class UserEvaluation:
    """Outcome of a user best-responding to one provider rule.

    ``kernel[u, x, a]`` is the probability of action ``a`` given user
    feature ``u`` and provider feature ``x``.
    """

    utility: float
    kernel: np.ndarray
    strategy: UserStrategy | None = None


def _evaluate_one_round(instance, user_idx, provider_idx, table, with_strategy):
    joint = instance.pair_marginal(user_idx, provider_idx)  # (Y, XU, XP)
    util = instance.user_utils[user_idx]  # (A, Y)
    # W[u, m, y]: probability of (xU=u, message m, state y)
    W = np.einsum("yux,xm->umy", joint, table)
    eu = np.einsum("ay,umy->uma", util, W)
    mass = W.sum(axis=2)
    order = instance.action_order[user_idx]
    reordered = eu[..., order]
    best = reordered.max(axis=-1, keepdims=True)
    dec = np.asarray(order)[np.argmax(reordered >= best - TIE_TOL * mass[..., None], axis=-1)]  # (U, M)
    value = float(np.take_along_axis(eu, dec[..., None], axis=-1).sum())
    n_act = util.shape[0]
    onehot = np.eye(n_act)[dec]  # (U, M, A)
    kernel = np.einsum("xm,uma->uxa", table, onehot)
    strategy = None
    if with_strategy:
        strategy = UserStrategy({}, {(m,): onehot[:, m, :] for m in range(instance.n_messages)})
    return UserEvaluation(value, kernel, strategy)


def evaluate_user(
    instance: GameInstance,
    user_idx: int,
    provider_rule: ProviderRule,
    provider_idx: int,
    with_strategy: bool = True,
    cap: int = DEFAULT_CAP,
) -> UserEvaluation:
    """Optimal conversation + decision for ``user_idx`` against a fixed provider rule.

    Solved by backward induction over the transcript tree, which attains the
    maximum over all deterministic user strategies; user messages and actions
    tie-break toward the lowest message index and the instance action order.
    """
    _check_rule_shape(instance, provider_rule, provider_idx)
    if instance.n_actions(user_idx) == 0:
        raise EmptyActionSet(f"user {user_idx} has no actions")
    if instance.speakers == "P":
        table = provider_rule.table(())
        if table is None:
            raise UndefinedRuleRow(f"provider {provider_idx} rule undefined at the empty prefix")
        return _evaluate_one_round(instance, user_idx, provider_idx, table, with_strategy)

    nodes = instance.n_messages ** instance.rounds
    if nodes > cap:
        raise SearchSpaceTooLarge(nodes, cap)

    joint = instance.pair_marginal(user_idx, provider_idx)
    util = instance.user_utils[user_idx]
    n_u, n_x = joint.shape[1], joint.shape[2]
    n_act, n_msg = util.shape[0], instance.n_messages
    order = instance.action_order[user_idx]
    R = instance.rounds
    conversation: dict = {}
    decision: dict = {}
    kernel = np.zeros((n_u, n_x, n_act))

    def record(store, prefix, u, choice, width):
        if prefix not in store:
            store[prefix] = one_hot([0] * n_u, width)
        store[prefix][u] = 0.0
        store[prefix][u, choice] = 1.0

    def solve(prefix, pw, base, u):
        # pw: (XP,) probability of the provider's messages so far, given xP
        w = base * pw[None, :]
        mass = w.sum()
        t = len(prefix)
        if t == R:
            eu = util @ w.sum(axis=1)
            a = int(tie_break_argmax(eu, order, TIE_TOL * max(mass, 0.0)))
            record(decision, prefix, u, a, n_act)
            k = np.zeros((n_x, n_act))
            k[:, a] = pw
            return float(eu[a]), k
        if instance.speakers[t] == "P":
            table = provider_rule.table(prefix)
            if table is None:
                raise UndefinedRuleRow(f"provider {provider_idx} rule undefined at prefix {prefix}")
            total, k = 0.0, np.zeros((n_x, n_act))
            for m in range(n_msg):
                pw2 = pw * table[:, m]
                if (base * pw2[None, :]).sum() > 0:
                    v, kk = solve(prefix + (m,), pw2, base, u)
                    total += v
                    k += kk
            return total, k
        results = [solve(prefix + (m,), pw, base, u) for m in range(n_msg)]
        vals = np.array([r[0] for r in results])
        m_best = int(np.argmax(vals >= vals.max() - TIE_TOL))
        record(conversation, prefix, u, m_best, n_msg)
        return results[m_best]

    value = 0.0
    for u in range(n_u):
        base = joint[:, u, :]
        if base.sum() > 0:
            v, k = solve((), np.ones(n_x), base, u)
            value += v
            kernel[u] = k
    strategy = UserStrategy(conversation, decision) if with_strategy else None
    return UserEvaluation(value, kernel, strategy)


def optimal_user_strategy(
    instance: GameInstance, user_idx: int, provider_rule: ProviderRule, provider_idx: int, cap: int = DEFAULT_CAP
) -> tuple[UserStrategy, float]:
    ev = evaluate_user(instance, user_idx, provider_rule, provider_idx, with_strategy=True, cap=cap)
    return ev.strategy, ev.utility


def user_utility_against(
    instance: GameInstance, user_idx: int, provider_rule: ProviderRule, provider_idx: int, cap: int = DEFAULT_CAP
) -> float:
    """Expected utility of a best-responding user against one provider rule."""
    return evaluate_user(instance, user_idx, provider_rule, provider_idx, with_strategy=False, cap=cap).utility


def count_user_strategies(instance: GameInstance, user_idx: int) -> int:
    n_u = len(instance.user_features[user_idx])
    n_conv = len(instance.user_prefixes())
    n_leaf = instance.n_messages ** instance.rounds
    return instance.n_messages ** (n_u * n_conv) * instance.n_actions(user_idx) ** (n_u * n_leaf)


def enumerate_user_strategies(instance: GameInstance, user_idx: int, cap: int = DEFAULT_CAP):
    """Every deterministic user strategy (conversation and decision tables)."""
    total = count_user_strategies(instance, user_idx)
    if total > cap:
        raise SearchSpaceTooLarge(total, cap)
    n_u = len(instance.user_features[user_idx])
    conv_prefixes = instance.user_prefixes()
    leaves = list(itertools.product(range(instance.n_messages), repeat=instance.rounds))
    n_msg, n_act = instance.n_messages, instance.n_actions(user_idx)
    for conv_choice in itertools.product(range(n_msg), repeat=n_u * len(conv_prefixes)):
        c = np.asarray(conv_choice, dtype=int).reshape(len(conv_prefixes), n_u)
        conversation = {p: one_hot(c[b], n_msg) for b, p in enumerate(conv_prefixes)}
        for dec_choice in itertools.product(range(n_act), repeat=n_u * len(leaves)):
            d = np.asarray(dec_choice, dtype=int).reshape(len(leaves), n_u)
            decision = {p: one_hot(d[b], n_act) for b, p in enumerate(leaves)}
            yield UserStrategy(conversation, decision)


def select_provider(instance: GameInstance, user_idx: int, provider_rules: Sequence[ProviderRule]) -> int:
    """Provider whose rule gives the user the highest utility (ties by provider order)."""
    if len(provider_rules) != instance.n_providers:
        raise DimensionMismatch("need one rule per provider")
    utils = [user_utility_against(instance, user_idx, r, j) for j, r in enumerate(provider_rules)]
    return choose_provider(instance, utils)


def choose_provider(instance: GameInstance, utilities: Sequence[float]) -> int:
    return int(tie_break_argmax(np.asarray(utilities, dtype=float), instance.provider_order))


def single_induced(instance: GameInstance, user_idx: int, provider_idx: int, kernel: np.ndarray) -> np.ndarray:
    """``(a_i, y)`` table from a kernel ``P(a | xU, xP)``."""
    return np.einsum("yux,uxa->ay", instance.pair_marginal(user_idx, provider_idx), kernel)


_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def joint_from_kernels(instance: GameInstance, choices: Sequence[int], kernels: Sequence[np.ndarray]) -> np.ndarray:
    """``(a_1, ..., a_n, y)`` table given each user's provider and action kernel.

    Conversations are independent given all features, so the joint is
    ``sum_x prior(y, x) prod_i K_i(a_i | xU_i, xP_{c_i})``.
    """
    n, k = instance.n_users, instance.n_providers
    if 2 * n + k + 1 > len(_LETTERS):
        raise DimensionMismatch("too many players for dense joint evaluation")
    y = _LETTERS[0]
    us = _LETTERS[1 : 1 + n]
    ps = _LETTERS[1 + n : 1 + n + k]
    acts = _LETTERS[1 + n + k : 1 + 2 * n + k]
    terms = [y + us + ps]
    for i in range(n):
        terms.append(us[i] + ps[choices[i]] + acts[i])
    expr = ",".join(terms) + "->" + acts + y
    return np.einsum(expr, instance.prior, *kernels, optimize="greedy")


@dataclass
class Outcome:
    """Best-response outcome of a provider profile."""

    choices: list[int]
    user_utilities: list[float]
    kernels: list[np.ndarray]
    provider_utilities: list[float]
    joint: np.ndarray | None = None


def provider_utilities(
    instance: GameInstance, choices: Sequence[int], kernels: Sequence[np.ndarray], dense: bool | None = None
):
    """Expected utility of every provider; returns ``(utilities, joint_or_None)``.

    With a separable form and ``dense`` not forced, utilities are computed
    from the per-user induced distributions without building the joint.
    """
    if dense is None:
        dense = instance.separable is None
    if not dense:
        sep = instance.separable
        singles = [single_induced(instance, i, choices[i], kernels[i]) for i in range(instance.n_users)]
        vals = []
        for j in range(instance.n_providers):
            v = float(sep.const[j])
            for i in range(instance.n_users):
                v += sep.lam[j, i] * float(np.sum(singles[i] * sep.components[j][i]))
            vals.append(v)
        return vals, None
    joint = joint_from_kernels(instance, choices, kernels)
    return [float(np.sum(joint * u)) for u in instance.provider_utils], joint


def _outcome(instance, per_user_evals, dense=None, want_joint=False):
    """per_user_evals[i][j] is user i's evaluation of the rule provider j shows that user."""
    choices, utils, kernels = [], [], []
    for i, evs in enumerate(per_user_evals):
        c = choose_provider(instance, [e.utility for e in evs])
        choices.append(c)
        utils.append(evs[c].utility)
        kernels.append(evs[c].kernel)
    if want_joint:
        dense = True
    pu, joint = provider_utilities(instance, choices, kernels, dense=dense)
    return Outcome(choices, utils, kernels, pu, joint)


def play_anonymous(instance: GameInstance, rules: Sequence[ProviderRule], want_joint=False) -> Outcome:
    if len(rules) != instance.n_providers:
        raise DimensionMismatch("anonymous profile needs one rule per provider")
    evals = [
        [evaluate_user(instance, i, r, j, with_strategy=False) for j, r in enumerate(rules)]
        for i in range(instance.n_users)
    ]
    return _outcome(instance, evals, want_joint=want_joint)


def play_personalized(instance: GameInstance, rules: Sequence[Sequence[ProviderRule]], want_joint=False) -> Outcome:
    """``rules[j][i]`` is provider ``j``'s rule for user ``i``."""
    if len(rules) != instance.n_providers or any(len(r) != instance.n_users for r in rules):
        raise DimensionMismatch("personalized profile must be indexed [provider][user]")
    evals = [
        [evaluate_user(instance, i, rules[j][i], j, with_strategy=False) for j in range(instance.n_providers)]
        for i in range(instance.n_users)
    ]
    return _outcome(instance, evals, want_joint=want_joint)


def induced_joint(instance: GameInstance, profile, mode: str = "anonymous") -> InducedDistribution:
    """Joint ``(a_1..a_n, y)`` law when every user best-responds to ``profile``.

    ``mode="anonymous"``: ``profile[j]`` is provider j's public rule.
    ``mode="personalized"``: ``profile[j][i]`` is provider j's rule for user i.
    """
    if mode == "anonymous":
        out = play_anonymous(instance, profile, want_joint=True)
    elif mode == "personalized":
        out = play_personalized(instance, profile, want_joint=True)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return InducedDistribution(out.joint, "joint")
