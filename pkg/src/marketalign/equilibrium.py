"""Nash-equilibrium verification over declared deviation classes, and the
per-user lower bounds that alignment certificates imply."""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .alignment import StrongAlignmentCert, WeakAlignmentCert
from .errors import CoverageViolation, NotApplicable, SearchSpaceTooLarge
from .game import DEFAULT_CAP, GameInstance, ProviderRule, count_deterministic_rules, enumerate_deterministic_rules
from .garbling import (
    GarblingSpec,
    enumerate_shared_rules,
    shared_rule_as_provider_rule,
    shared_rule_values,
)
from .interaction import (
    UserEvaluation,
    choose_provider,
    evaluate_user,
    joint_from_kernels,
    single_induced,
    tie_break_argmax,
)

DEFAULT_EPS = 1e-9


@dataclass
class EquilibriumReport:
    """Result of checking a profile against unilateral provider deviations.

    ``max_gain[j]`` is the largest payoff improvement provider ``j`` found in
    the deviation class; ``witness[j]`` records the deviation whenever that
    gain exceeds ``eps``. Passing means "eps-NE over the stated class".
    """

    mode: str
    deviation_class: str
    eps: float
    max_gain: list[float]
    witness: list[dict | None]
    n_deviations: list[int]
    user_utilities: list[float]
    provider_utilities: list[float]
    choices: list[int]

    @property
    def is_eps_ne(self) -> bool:
        return all(g <= self.eps for g in self.max_gain)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "deviation_class": self.deviation_class,
            "eps": self.eps,
            "is_eps_ne": self.is_eps_ne,
            "label": f"{self.eps:g}-NE over class {self.deviation_class}" if self.is_eps_ne else "not an equilibrium",
            "max_gain": self.max_gain,
            "witness": self.witness,
            "n_deviations": self.n_deviations,
            "user_utilities": self.user_utilities,
            "provider_utilities": self.provider_utilities,
            "choices": self.choices,
        }


# deviation classes ------------------------------------------------------------------


def _class_rules(instance, deviation_class, provider_idx, garbling, cap) -> tuple[str, Callable]:
    """Label and a factory returning a fresh iterator of the class's rules for one provider."""
    if isinstance(deviation_class, str):
        name = deviation_class.lower()
        if name in ("det", "deterministic", "deterministic-exhaustive"):
            total = count_deterministic_rules(instance, provider_idx)
            if total > cap:
                raise SearchSpaceTooLarge(total, cap)
            return "deterministic-exhaustive", lambda: enumerate_deterministic_rules(instance, provider_idx, cap)
        if name in ("shared", "shared-rules-only"):
            if garbling is None:
                raise ValueError("the shared-rules class needs a garbling")
            if provider_idx not in garbling.maps:
                return "shared-rules-only", lambda: iter(())
            return "shared-rules-only", lambda: (
                shared_rule_as_provider_rule(instance, provider_idx, garbling, s)
                for s in enumerate_shared_rules(instance, garbling, cap=cap)
            )
        raise ValueError(f"unknown deviation class {deviation_class!r}")
    if isinstance(deviation_class, Mapping):
        rules = list(deviation_class.get(provider_idx, ()))
    else:
        rules = list(deviation_class)
    return "custom", lambda: iter(rules)


def _class_size(instance, deviation_class, provider_idx, garbling, cap):
    label, factory = _class_rules(instance, deviation_class, provider_idx, garbling, cap)
    if label == "deterministic-exhaustive":
        return count_deterministic_rules(instance, provider_idx)
    if label == "shared-rules-only":
        return sum(1 for _ in factory())
    return len(list(factory()))


# payoffs ------------------------------------------------------------------------------


def _user_contrib(instance, i, c, kernel, j):
    """Separable payoff share ``lam[j, i] * E[F_{j,i}]`` when user ``i`` uses provider ``c``."""
    sep = instance.separable
    return float(sep.lam[j, i]) * float(np.sum(single_induced(instance, i, c, kernel) * sep.components[j][i]))


def _payoff(instance, j, choices, kernels, dense):
    if not dense:
        shares = [_user_contrib(instance, i, choices[i], kernels[i], j) for i in range(instance.n_users)]
        return float(instance.separable.const[j] + sum(shares))
    joint = joint_from_kernels(instance, choices, kernels)
    return float(np.sum(joint * instance.provider_utils[j]))


def _all_payoffs(instance, choices, kernels, dense):
    if not dense:
        return [_payoff(instance, j, choices, kernels, False) for j in range(instance.n_providers)]
    joint = joint_from_kernels(instance, choices, kernels)
    return [float(np.sum(joint * u)) for u in instance.provider_utils]


def _use_dense(instance, dense):
    return instance.separable is None if dense is None else dense


def _respond(instance, evals_i):
    c = choose_provider(instance, [e.utility for e in evals_i])
    return c, evals_i[c]


# verification -------------------------------------------------------------------------


def verify_anonymous_NE(
    instance: GameInstance,
    profile: Sequence[ProviderRule],
    deviation_class="deterministic",
    eps: float = DEFAULT_EPS,
    garbling: GarblingSpec | None = None,
    cap: int = DEFAULT_CAP,
    dense: bool | None = None,
) -> EquilibriumReport:
    """Check one public rule per provider against every unilateral deviation in a class.

    ``deviation_class`` is ``"deterministic"`` (all deterministic rules
    readable from the provider's features), ``"shared"`` (deterministic
    shared rules on ``garbling``), a list of rules used for every provider,
    or a mapping provider -> list of rules.
    """
    dense = _use_dense(instance, dense)
    n, k = instance.n_users, instance.n_providers
    base_evals = [[evaluate_user(instance, i, profile[j], j, with_strategy=False) for j in range(k)] for i in range(n)]
    base = [_respond(instance, base_evals[i]) for i in range(n)]
    choices = [c for c, _ in base]
    kernels = [e.kernel for _, e in base]
    base_pay = _all_payoffs(instance, choices, kernels, dense)

    max_gain, witness, counts, label = [], [], [], ""
    for j in range(k):
        label, factory = _class_rules(instance, deviation_class, j, garbling, cap)
        best, best_idx, best_rule, count = -math.inf, None, None, 0
        for idx, rule in enumerate(factory()):
            count += 1
            dev_choices, dev_kernels = [], []
            touched = False
            for i in range(n):
                ev = evaluate_user(instance, i, rule, j, with_strategy=False)
                row = list(base_evals[i])
                row[j] = ev
                c, e = _respond(instance, row)
                touched |= c == j or choices[i] == j
                dev_choices.append(c)
                dev_kernels.append(e.kernel)
            if touched:
                gain = _payoff(instance, j, dev_choices, dev_kernels, dense) - base_pay[j]
            else:
                gain = 0.0
            if gain > best:
                best, best_idx, best_rule = gain, idx, rule
        counts.append(count)
        max_gain.append(float(best) if count else 0.0)
        witness.append(
            {"index": best_idx, "gain": float(best), "rule": best_rule.to_dict()} if count and best > eps else None
        )
    return EquilibriumReport(
        "anonymous", label, eps, max_gain, witness, counts,
        [e.utility for _, e in base], base_pay, choices,
    )


def verify_personalized_NE(
    instance: GameInstance,
    profile: Sequence[Sequence[ProviderRule]],
    deviation_class="deterministic",
    eps: float = DEFAULT_EPS,
    garbling: GarblingSpec | None = None,
    cap: int = DEFAULT_CAP,
    dense: bool | None = None,
) -> EquilibriumReport:
    """Check a personalized profile ``profile[j][i]`` against deviations in a class.

    A deviation by provider ``j`` replaces the whole vector of per-user
    rules. With separable provider utilities the gain decomposes over
    users and each user's rule is optimized separately; otherwise every
    vector in ``class ** n`` is evaluated.
    """
    dense = _use_dense(instance, dense)
    n, k = instance.n_users, instance.n_providers
    base_evals = [[evaluate_user(instance, i, profile[j][i], j, with_strategy=False) for j in range(k)] for i in range(n)]
    base = [_respond(instance, base_evals[i]) for i in range(n)]
    choices = [c for c, _ in base]
    kernels = [e.kernel for _, e in base]
    base_pay = _all_payoffs(instance, choices, kernels, dense)

    max_gain, witness, counts, label = [], [], [], ""
    for j in range(k):
        label, factory = _class_rules(instance, deviation_class, j, garbling, cap)
        rules = list(factory())
        if not rules:
            max_gain.append(0.0)
            witness.append(None)
            counts.append(0)
            continue
        # per-user responses to each candidate rule
        responses = []
        for i in range(n):
            row_resp = []
            for rule in rules:
                row = list(base_evals[i])
                row[j] = evaluate_user(instance, i, rule, j, with_strategy=False)
                row_resp.append(_respond(instance, row))
            responses.append(row_resp)
        if not dense:
            best_total, picks = 0.0, []
            for i in range(n):
                base_c = _user_contrib(instance, i, choices[i], kernels[i], j)
                gains = [_user_contrib(instance, i, c, e.kernel, j) - base_c for c, e in responses[i]]
                b = int(np.argmax(gains))
                best_total += gains[b]
                picks.append(b)
            count = len(rules) ** n
            best = best_total
        else:
            count = len(rules) ** n
            if count > cap:
                raise SearchSpaceTooLarge(count, cap)
            best, picks = -math.inf, None
            for combo in itertools.product(range(len(rules)), repeat=n):
                cs = [responses[i][combo[i]][0] for i in range(n)]
                ks = [responses[i][combo[i]][1].kernel for i in range(n)]
                gain = _payoff(instance, j, cs, ks, True) - base_pay[j]
                if gain > best:
                    best, picks = gain, list(combo)
        counts.append(count)
        max_gain.append(float(best))
        witness.append(
            {"indices": picks, "gain": float(best), "rules": [rules[p].to_dict() for p in picks]} if best > eps else None
        )
    return EquilibriumReport(
        "personalized", label, eps, max_gain, witness, counts,
        [e.utility for _, e in base], base_pay, choices,
    )


# enumeration ---------------------------------------------------------------------------


@dataclass
class EquilibriumEntry:
    """One equilibrium; ``profile`` and ``report`` are built on first access.

    ``indices[j]`` is provider j's rule index (anonymous mode) or the tuple
    of its per-user rule indices (personalized mode).
    """

    indices: tuple
    user_utilities: tuple
    _build_profile: Callable = field(repr=False)
    _build_report: Callable = field(repr=False)

    @functools.cached_property
    def profile(self) -> list:
        return self._build_profile()

    @functools.cached_property
    def report(self) -> EquilibriumReport:
        return self._build_report()


def _rule_lists(instance, rule_space, garbling, cap):
    out, label = [], ""
    for j in range(instance.n_providers):
        label, factory = _class_rules(instance, rule_space, j, garbling, cap)
        out.append(list(factory()))
    return label, out


def _evaluate_space(instance, rules):
    """evals[i][j][r]: user i against rule r of provider j."""
    return [
        [[evaluate_user(instance, i, r, j, with_strategy=False) for r in rules[j]] for j in range(instance.n_providers)]
        for i in range(instance.n_users)
    ]


def _grid_choices(instance, utils_by_provider, sizes):
    """Vectorized provider choice over a profile grid.

    ``utils_by_provider[j]`` is a 1-d array over provider j's rules; returns an
    int array of shape ``sizes`` with the chosen provider per profile.
    """
    k = len(sizes)
    stacked = np.stack(
        [np.broadcast_to(u.reshape([-1 if a == j else 1 for a in range(k)]), sizes) for j, u in enumerate(utils_by_provider)],
        axis=-1,
    )
    return tie_break_argmax(stacked, instance.provider_order)


def _game_tensor(instance, evals, sizes, dense):
    """Payoff tensor ``P[r_1, ..., r_k, j]`` for the anonymous profile grid."""
    n, k = instance.n_users, instance.n_providers
    grid_choices = [_grid_choices(instance, [np.array([e.utility for e in evals[i][j]]) for j in range(k)], sizes) for i in range(n)]
    if not dense:
        sep = instance.separable
        payoff = np.broadcast_to(sep.const, tuple(sizes) + (k,)).copy()
        for i in range(n):
            # contrib[j][r, :]: payoff shares of all providers when user i uses provider j's rule r
            for jc in range(k):
                contrib = np.array(
                    [[_user_contrib(instance, i, jc, e.kernel, jp) for jp in range(k)] for e in evals[i][jc]]
                )
                mask = grid_choices[i] == jc
                idx = np.indices(sizes)[jc]
                payoff += np.where(mask[..., None], contrib[idx], 0.0)
        return payoff, grid_choices
    payoff = np.zeros(tuple(sizes) + (k,))
    for prof in itertools.product(*(range(s) for s in sizes)):
        cs = [int(grid_choices[i][prof]) for i in range(n)]
        ks = [evals[i][cs[i]][prof[cs[i]]].kernel for i in range(n)]
        payoff[prof] = _all_payoffs(instance, cs, ks, True)
    return payoff, grid_choices


def _report_from_tensor(instance, payoff, grid_choices, evals, prof, label, eps, mode):
    k = instance.n_providers
    gains, witness = [], []
    for j in range(k):
        line = list(prof)
        line[j] = slice(None)
        along = payoff[tuple(line) + (j,)]
        g = float(along.max() - payoff[prof + (j,)])
        gains.append(g)
        witness.append({"index": int(np.argmax(along)), "gain": g} if g > eps else None)
    choices = [int(grid_choices[i][prof]) for i in range(instance.n_users)]
    users = [evals[i][choices[i]][prof[choices[i]]].utility for i in range(instance.n_users)]
    return EquilibriumReport(mode, label, eps, gains, witness, [payoff.shape[j] for j in range(k)], users,
                             [float(x) for x in payoff[prof]], choices)


def enumerate_pure_equilibria(
    instance: GameInstance,
    rule_space="deterministic",
    mode: str = "anonymous",
    eps: float = DEFAULT_EPS,
    garbling: GarblingSpec | None = None,
    cap: int = DEFAULT_CAP,
    dense: bool | None = None,
) -> list[EquilibriumEntry]:
    """All pure profiles over ``rule_space`` that no provider can improve on by more than ``eps``.

    The deviation class equals ``rule_space``. In personalized mode a
    profile is ``profile[j][i]``; with separable utilities the search runs
    per user and then combines per-user equilibria.
    """
    dense = _use_dense(instance, dense)
    label, rules = _rule_lists(instance, rule_space, garbling, cap)
    sizes = [len(r) for r in rules]
    if mode == "anonymous":
        total = math.prod(sizes)
        if total > cap:
            raise SearchSpaceTooLarge(total, cap)
        evals = _evaluate_space(instance, rules)
        payoff, grid_choices = _game_tensor(instance, evals, sizes, dense)
        ok = np.ones(sizes, dtype=bool)
        for j in range(instance.n_providers):
            best = payoff[..., j].max(axis=j, keepdims=True)
            ok &= payoff[..., j] >= best - eps
        out = []
        for prof in zip(*np.nonzero(ok)):
            prof = tuple(int(p) for p in prof)
            cs = [int(grid_choices[i][prof]) for i in range(instance.n_users)]
            out.append(EquilibriumEntry(
                prof,
                tuple(evals[i][cs[i]][prof[cs[i]]].utility for i in range(instance.n_users)),
                functools.partial(lambda p: [rules[j][p[j]] for j in range(len(p))], prof),
                functools.partial(_report_from_tensor, instance, payoff, grid_choices, evals, prof, label, eps, "anonymous"),
            ))
        return out
    if mode == "personalized":
        return _enumerate_personalized(instance, rules, sizes, label, eps, cap, dense)
    raise ValueError(f"unknown mode {mode!r}")


def _enumerate_personalized(instance, rules, sizes, label, eps, cap, dense):
    n, k = instance.n_users, instance.n_providers
    evals = _evaluate_space(instance, rules)
    if dense:
        total = math.prod(sizes) ** n
        if total > cap:
            raise SearchSpaceTooLarge(total, cap)
        # axes ordered (j, i); payoff depends on the full assignment
        axes = [(j, i) for j in range(k) for i in range(n)]
        shape = [sizes[j] for j, _ in axes]
        payoff = np.zeros(shape + [k])
        choice_grid = np.zeros(shape + [n], dtype=int)
        for prof in itertools.product(*(range(s) for s in shape)):
            pick = {ax: prof[b] for b, ax in enumerate(axes)}
            cs, ks = [], []
            for i in range(n):
                c, e = _respond(instance, [evals[i][j][pick[(j, i)]] for j in range(k)])
                cs.append(c)
                ks.append(e.kernel)
            payoff[prof] = _all_payoffs(instance, cs, ks, True)
            choice_grid[prof] = cs
        out = []
        for prof in itertools.product(*(range(s) for s in shape)):
            gains = []
            for j in range(k):
                own = [b for b, ax in enumerate(axes) if ax[0] == j]
                line = list(prof)
                for b in own:
                    line[b] = slice(None)
                gains.append(float(payoff[tuple(line) + (j,)].max() - payoff[prof + (j,)]))
            if all(g <= eps for g in gains):
                pick = {ax: prof[b] for b, ax in enumerate(axes)}
                cs = [int(c) for c in choice_grid[prof]]
                users = [evals[i][cs[i]][pick[(cs[i], i)]].utility for i in range(n)]
                rep = EquilibriumReport("personalized", label, eps, gains, [None] * k, [sizes[j] ** n for j in range(k)],
                                        users, [float(x) for x in payoff[prof]], cs)
                profile = [[rules[j][pick[(j, i)]] for i in range(n)] for j in range(k)]
                nested = tuple(tuple(pick[(j, i)] for i in range(n)) for j in range(k))
                out.append(EquilibriumEntry(nested, tuple(users), functools.partial(lambda v: v, profile), functools.partial(lambda v: v, rep)))
        return out

    # separable: provider j's payoff is a sum of per-user shares
    per_user = []  # per user: list of (indices, gains (k,), shares (k,), choice, utility)
    for i in range(n):
        total = math.prod(sizes)
        if total > cap:
            raise SearchSpaceTooLarge(total, cap)
        grid_c = _grid_choices(instance, [np.array([e.utility for e in evals[i][j]]) for j in range(k)], sizes)
        shares = np.zeros(tuple(sizes) + (k,))
        for jc in range(k):
            contrib = np.array([[_user_contrib(instance, i, jc, e.kernel, jp) for jp in range(k)] for e in evals[i][jc]])
            idx = np.indices(sizes)[jc]
            shares += np.where((grid_c == jc)[..., None], contrib[idx], 0.0)
        gains = np.zeros(tuple(sizes) + (k,))
        for j in range(k):
            gains[..., j] = shares[..., j].max(axis=j, keepdims=True) - shares[..., j]
        cand = []
        for prof in zip(*np.nonzero(np.all(gains <= eps, axis=-1))):
            prof = tuple(int(p) for p in prof)
            c = int(grid_c[prof])
            cand.append((prof, gains[prof], shares[prof], c, evals[i][c][prof[c]].utility))
        per_user.append(cand)
    total = math.prod(len(c) for c in per_user)
    if total > cap:
        raise SearchSpaceTooLarge(total, cap)
    if total == 0:
        return []
    # outer sums over users of per-user gains, shape (c_1, ..., c_n, k)
    gsum = np.zeros([len(c) for c in per_user] + [k])
    for i, cand in enumerate(per_user):
        shape = [1] * n + [k]
        shape[i] = len(cand)
        gsum = gsum + np.array([c[1] for c in cand]).reshape(shape)
    const = instance.separable.const

    def build_report(combo, gains):
        pay = const + np.sum([c[2] for c in combo], axis=0)
        return EquilibriumReport("personalized", label, eps, [float(g) for g in gains], [None] * k,
                                 [sizes[j] ** n for j in range(k)], [float(c[4]) for c in combo],
                                 [float(p) for p in pay], [c[3] for c in combo])

    def build_profile(combo):
        return [[rules[j][combo[i][0][j]] for i in range(n)] for j in range(k)]

    out = []
    for pos in zip(*np.nonzero(np.all(gsum <= eps, axis=-1))):
        combo = tuple(per_user[i][int(p)] for i, p in enumerate(pos))
        out.append(EquilibriumEntry(
            tuple(tuple(combo[i][0][j] for i in range(n)) for j in range(k)),
            tuple(float(c[4]) for c in combo),
            functools.partial(build_profile, combo),
            functools.partial(build_report, combo, gsum[pos]),
        ))
    return out


# bounds -----------------------------------------------------------------------------------


def delta_R(
    instance: GameInstance,
    provider_idx: int,
    garbling: GarblingSpec,
    rule_space="deterministic",
    cap: int = DEFAULT_CAP,
    providers: Sequence[int] | None = None,
) -> float:
    """Largest per-user gain of provider j's best rule over the one-round-shorter shared benchmark.

    ``rule_space`` may be ``"deterministic"``, a list of rules, or
    ``"revelation"`` (uses the full-revelation rule, which is optimal for
    every user when it fits in the message space).
    """
    from .constructions import make_full_revelation_rule

    if isinstance(rule_space, str) and rule_space == "revelation":
        rules = [make_full_revelation_rule(instance, provider_idx)]
    else:
        _, factory = _class_rules(instance, rule_space, provider_idx, garbling, cap)
        rules = list(factory())
    best = -math.inf
    for i in range(instance.n_users):
        top = max(evaluate_user(instance, i, r, provider_idx, with_strategy=False).utility for r in rules)
        bench = _benchmark(instance, i, garbling, providers, instance.rounds - 1)
        best = max(best, top - bench)
    return float(best)


def _benchmark(instance, i, garbling, providers, rounds):
    vals = shared_rule_values(instance, i, garbling, rounds)
    if providers is not None:
        vals = {j: v for j, v in vals.items() if j in providers}
    return min(vals.values())


def mu(w: np.ndarray, lam: np.ndarray, i: int) -> float:
    """``mu_i = sum_{j: w_ji > 0} w_ji / lam_ji`` (rows are providers)."""
    mask = w[:, i] > 0
    if np.any(lam[mask, i] <= 0):
        raise CoverageViolation(f"user {i}: positive w with zero lam")
    return float(np.sum(w[mask, i] / lam[mask, i]))


def lambda_star(lam: np.ndarray, i: int) -> float:
    return float(np.max(lam[:, i]))


def anonymous_slack(eps: float, lam_star: float) -> float:
    """``2 eps / lambda*_i``."""
    if lam_star <= 0:
        raise CoverageViolation("lambda* must be positive")
    return 2.0 * eps / lam_star


def delta_i(lam: np.ndarray, eps: float, deltas: Sequence[float], i: int) -> float:
    """``min_{j: lam_ji > 0} (Delta_R(j) * sum_{i' != i} lam_ji' / lam_ji + 2 eps / lam_ji)``."""
    vals = []
    for t in range(lam.shape[0]):
        if lam[t, i] > 0:
            others = lam[t].sum() - lam[t, i]
            vals.append(deltas[t] * others / lam[t, i] + 2.0 * eps / lam[t, i])
    if not vals:
        raise CoverageViolation(f"no provider places positive weight on user {i}")
    return float(min(vals))


@dataclass
class BoundReport:
    mode: str
    bounds: list[float]
    benchmarks: list[float]
    slack: list[float]
    terms: dict = field(default_factory=dict)

    def to_dict(self):
        return {"mode": self.mode, "bounds": self.bounds, "benchmarks": self.benchmarks, "slack": self.slack, **self.terms}


def theoretical_bounds(
    instance: GameInstance,
    cert,
    mode: str,
    garbling: GarblingSpec,
    deltas: Sequence[float] | None = None,
    rule_space="deterministic",
    users: Sequence[int] | None = None,
    cap: int = DEFAULT_CAP,
) -> BoundReport:
    """Per-user equilibrium utility lower bounds implied by a certificate.

    Modes
    -----
    ``personalized`` / ``augmented``
        weak certificate; ``benchmark - 2 eps_U - 2 eps_P mu_i``.
    ``anonymous-dominant``
        strong certificate with a user-dominant rule available;
        ``benchmark - 2 eps / lambda*_i``.
    ``anonymous-general``
        strong certificate; ``benchmark(R-1) - delta_i`` with ``Delta_R``
        computed per provider unless ``deltas`` is given.
    """
    T = cert.providers
    if users is None:
        users = cert.users if isinstance(cert, WeakAlignmentCert) else list(range(instance.n_users))
    if mode in ("personalized", "augmented"):
        if not isinstance(cert, WeakAlignmentCert):
            raise TypeError("personalized bounds need a weak certificate")
        cert.validate()
        benches = [_benchmark(instance, i, garbling, T, instance.rounds) for i in users]
        mus = [mu(cert.w, cert.lam, i) for i in users]
        slack = [2 * cert.eps_U + 2 * cert.eps_P * m for m in mus]
        return BoundReport(mode, [b - s for b, s in zip(benches, slack)], benches, slack, {"mu": mus})
    if not isinstance(cert, StrongAlignmentCert):
        raise TypeError("anonymous bounds need a strong certificate")
    cert.validate()
    if mode == "anonymous-dominant":
        benches = [_benchmark(instance, i, garbling, T, instance.rounds) for i in users]
        stars = [lambda_star(cert.lam, i) for i in users]
        slack = [anonymous_slack(cert.eps, s) for s in stars]
        return BoundReport(mode, [b - s for b, s in zip(benches, slack)], benches, slack, {"lambda_star": stars})
    if mode == "anonymous-general":
        if instance.rounds < 2:
            raise NotApplicable("the identity-elicitation bound needs at least two rounds")
        if instance.n_messages < instance.n_users:
            raise NotApplicable("the identity-elicitation bound needs |M| >= N")
        if deltas is None:
            deltas = [delta_R(instance, j, garbling, rule_space, cap, providers=T) for j in T]
        benches = [_benchmark(instance, i, garbling, T, instance.rounds - 1) for i in users]
        ds = [delta_i(cert.lam, cert.eps, deltas, i) for i in users]
        return BoundReport(mode, [b - d for b, d in zip(benches, ds)], benches, ds, {"delta": ds, "Delta_R": list(deltas)})
    raise ValueError(f"unknown mode {mode!r}")
