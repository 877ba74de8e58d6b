import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marketalign.alignment import fit_strong_set
from marketalign.constructions import (
    make_full_revelation_rule,
    make_public_example,
    public_example_weak_cert,
    random_instance,
    random_strong_aligned_instance,
    random_weak_aligned_instance,
)
from marketalign.equilibrium import (
    anonymous_slack,
    delta_i,
    delta_R,
    enumerate_pure_equilibria,
    lambda_star,
    mu,
    theoretical_bounds,
    verify_anonymous_NE,
    verify_personalized_NE,
)
from marketalign.errors import CoverageViolation, NotApplicable, SearchSpaceTooLarge
from marketalign.game import GameInstance, constant_rule, enumerate_deterministic_rules
from marketalign.garbling import benchmark_shared, identical_features_garbling, no_information_value
from marketalign.interaction import play_anonymous, play_personalized


def _tiny(rng, weak=False, n=2):
    kw = dict(n=n, k=2, n_states=2, n_actions=2, n_user_features=1, n_provider_features=2, n_messages=2)
    if weak:
        return random_weak_aligned_instance(rng, **kw)[0]
    return random_instance(rng, **kw)


def _oracle_anonymous(g, eps=1e-9):
    """NE by replaying every profile and every unilateral deviation through play_anonymous."""
    rules = [list(enumerate_deterministic_rules(g, j)) for j in range(g.n_providers)]
    found = set()
    for prof in itertools.product(*(range(len(r)) for r in rules)):
        base = play_anonymous(g, [rules[j][p] for j, p in enumerate(prof)]).provider_utilities
        stable = True
        for j in range(g.n_providers):
            for r in range(len(rules[j])):
                dev = list(prof)
                dev[j] = r
                pay = play_anonymous(g, [rules[jj][p] for jj, p in enumerate(dev)]).provider_utilities[j]
                if pay > base[j] + eps:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            found.add(prof)
    return found


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("weak", [False, True])
def test_anonymous_enumeration_matches_replay_oracle(seed, weak):
    g = _tiny(np.random.default_rng(seed), weak)
    got = {e.indices for e in enumerate_pure_equilibria(g)}
    assert got == _oracle_anonymous(g)


def _oracle_personalized(g, eps=1e-9):
    rules = [list(enumerate_deterministic_rules(g, j)) for j in range(g.n_providers)]
    n = g.n_users
    vectors = [list(itertools.product(range(len(r)), repeat=n)) for r in rules]
    found = set()
    for prof in itertools.product(*vectors):
        play = lambda p: play_personalized(g, [[rules[j][p[j][i]] for i in range(n)] for j in range(len(p))])
        base = play(prof).provider_utilities
        stable = all(
            play(prof[:j] + (v,) + prof[j + 1 :]).provider_utilities[j] <= base[j] + eps
            for j in range(g.n_providers)
            for v in vectors[j]
        )
        if stable:
            found.add(prof)
    return found


@pytest.mark.parametrize("seed", range(3))
def test_personalized_enumeration_matches_replay_oracle(seed):
    g = _tiny(np.random.default_rng(seed), weak=True)
    sep = enumerate_pure_equilibria(g, mode="personalized")
    dense = enumerate_pure_equilibria(g, mode="personalized", dense=True)
    oracle = _oracle_personalized(g)
    assert {e.indices for e in sep} == oracle
    assert {e.indices for e in dense} == oracle


@pytest.mark.parametrize("seed", range(4))
def test_dense_and_separable_routes_agree(seed):
    g = _tiny(np.random.default_rng(seed), weak=True)
    a = {e.indices for e in enumerate_pure_equilibria(g, dense=False)}
    b = {e.indices for e in enumerate_pure_equilibria(g, dense=True)}
    assert a == b


@pytest.mark.parametrize("seed", range(4))
def test_enumeration_agrees_with_verification(seed):
    g = _tiny(np.random.default_rng(seed))
    rules = [list(enumerate_deterministic_rules(g, j)) for j in range(2)]
    ne = {e.indices: e for e in enumerate_pure_equilibria(g)}
    for prof in itertools.product(range(len(rules[0])), range(len(rules[1]))):
        rep = verify_anonymous_NE(g, [rules[0][prof[0]], rules[1][prof[1]]])
        assert rep.is_eps_ne == (prof in ne)
        if prof in ne:
            np.testing.assert_allclose(ne[prof].report.max_gain, rep.max_gain, atol=1e-12)
            np.testing.assert_allclose(ne[prof].user_utilities, rep.user_utilities, atol=1e-15)


def test_action_independent_provider_utilities_make_everything_an_equilibrium(rng):
    g = _tiny(rng)
    flat = [np.broadcast_to(rng.random(2), (2, 2, 2)).copy() for _ in range(2)]
    h = GameInstance(
        states=g.states, user_features=g.user_features, provider_features=g.provider_features, prior=g.prior,
        action_sets=g.action_sets, user_utils=g.user_utils, provider_utils=flat, messages=g.messages,
    )
    assert len(enumerate_pure_equilibria(h)) == 16


def test_public_example_no_information_is_equilibrium(small_public):
    g = small_public
    rep = verify_anonymous_NE(g, [constant_rule(g, j) for j in range(2)])
    assert rep.is_eps_ne
    assert rep.n_deviations == [27, 27]
    assert rep.to_dict()["label"].endswith("over class deterministic-exhaustive")


def test_full_revelation_is_also_equilibrium_in_public_example(small_public):
    g = small_public
    rep = verify_anonymous_NE(g, [make_full_revelation_rule(g, j) for j in range(2)])
    assert rep.is_eps_ne
    assert rep.user_utilities == pytest.approx([0.25, 0.25])


def test_silent_provider_against_revealing_rival_is_not_equilibrium(small_public):
    g = small_public
    rep = verify_anonymous_NE(g, [constant_rule(g, 0), make_full_revelation_rule(g, 1)])
    assert not rep.is_eps_ne
    # provider 1 goes silent too: user 0 then abstains (worth 2/3) and user 1 stops matching (worth 1/3)
    assert rep.max_gain[1] == pytest.approx(1 / 3)
    assert rep.max_gain[0] == pytest.approx(0.0)
    assert rep.witness[0] is None and rep.witness[1] is not None


def test_personalized_verification_on_public_example(small_public):
    g = small_public
    prof = [[constant_rule(g, j)] * 2 for j in range(2)]
    sep = verify_personalized_NE(g, prof)
    dense = verify_personalized_NE(g, prof, dense=True)
    np.testing.assert_allclose(sep.max_gain, dense.max_gain, atol=1e-12)


def test_custom_and_shared_deviation_classes(small_public):
    g = small_public
    gb = identical_features_garbling(g, [0, 1])
    base = [constant_rule(g, j) for j in range(2)]
    shared = verify_anonymous_NE(g, base, "shared", garbling=gb)
    det = verify_anonymous_NE(g, base, "det")
    # identical features make shared rules the same set as deterministic rules
    assert shared.n_deviations == det.n_deviations
    np.testing.assert_allclose(shared.max_gain, det.max_gain, atol=1e-12)
    custom = verify_anonymous_NE(g, base, {0: [make_full_revelation_rule(g, 0)]})
    assert custom.n_deviations == [1, 0] and custom.deviation_class == "custom"
    with pytest.raises(ValueError):
        verify_anonymous_NE(g, base, "shared")


def test_deviation_cap(public_6):
    g = public_6
    with pytest.raises(SearchSpaceTooLarge):
        verify_anonymous_NE(g, [constant_rule(g, j) for j in range(2)], cap=1000)


# bounds -----------------------------------------------------------------------------


def test_slack_formulas():
    assert anonymous_slack(0.01, 0.5) == pytest.approx(0.04)
    lam = np.array([[0.5, 0.25], [0.1, 0.0]])
    assert lambda_star(lam, 1) == 0.25
    assert mu(np.array([[0.2, 1.0], [0.8, 0.0]]), lam, 0) == pytest.approx(0.2 / 0.5 + 0.8 / 0.1)
    # provider 0: 0.1 * 0.25 / 0.5 + 0.02 / 0.5, provider 1: 0.3 * 0 / 0.1 + 0.02 / 0.1
    assert delta_i(lam, 0.01, [0.1, 0.3], 0) == pytest.approx(min(0.05 + 0.04, 0.2))
    with pytest.raises(CoverageViolation):
        mu(np.array([[0.0, 1.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [1.0, 0.0]]), 1)
    with pytest.raises(CoverageViolation):
        delta_i(np.array([[1.0, 0.0]]), 0.1, [0.0], 1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_delta_i_is_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    lam = rng.random((3, 4)) + 0.01
    deltas = rng.random(3)
    perm = rng.permutation(4)
    for i in range(4):
        assert delta_i(lam[:, perm], 0.05, deltas, i) == pytest.approx(delta_i(lam, 0.05, deltas, perm[i]))
        assert mu(lam[:, perm] * 0.5, lam[:, perm], i) == pytest.approx(mu(lam * 0.5, lam, perm[i]))


def test_personalized_bound_on_public_example(public_6):
    g = public_6
    cert = public_example_weak_cert(g, 0.1, 0.5)
    rep = theoretical_bounds(g, cert, "personalized", identical_features_garbling(g, [0, 1]))
    assert rep.bounds == pytest.approx([0.5, 0.5])
    assert rep.terms["mu"] == pytest.approx([1.65, 1.65])


def test_anonymous_dominant_bound_matches_formula(rng):
    g, _ = random_strong_aligned_instance(rng, n=2, k=2, n_states=2, n_actions=2)
    cert = fit_strong_set(g, [0, 1])
    gb = identical_features_garbling(g, [0, 1])
    rep = theoretical_bounds(g, cert, "anonymous-dominant", gb)
    for i in range(2):
        expect = benchmark_shared(g, i, gb) - 2 * cert.eps / cert.lam[:, i].max()
        assert rep.bounds[i] == pytest.approx(expect)


def test_anonymous_general_needs_two_rounds_and_enough_messages(small_public):
    g = small_public
    cert = fit_strong_set(g, [0, 1])
    with pytest.raises(NotApplicable):
        theoretical_bounds(g, cert, "anonymous-general", identical_features_garbling(g, [0, 1]))


def test_delta_R_one_round_is_gain_over_no_information(small_public):
    g = small_public
    gb = identical_features_garbling(g, [0, 1])
    expect = max(benchmark_shared(g, i, gb) - no_information_value(g, i) for i in range(2))
    assert delta_R(g, 0, gb) == pytest.approx(expect)
    assert delta_R(g, 0, gb, rule_space="revelation") == pytest.approx(expect)


def test_anonymous_general_bound_uses_delta(rng):
    g, _ = random_strong_aligned_instance(rng, n=2, k=2, n_states=2, n_actions=2, rounds=2)
    cert = fit_strong_set(g, [0, 1])
    gb = identical_features_garbling(g, [0, 1])
    rep = theoretical_bounds(g, cert, "anonymous-general", gb, deltas=[0.1, 0.2])
    for i in range(2):
        bench = benchmark_shared(g, i, gb, rounds=1)
        assert rep.bounds[i] == pytest.approx(bench - delta_i(cert.lam, cert.eps, [0.1, 0.2], i))


@pytest.mark.parametrize("seed", range(8))
def test_personalized_equilibria_respect_weak_bound(seed):
    rng = np.random.default_rng(seed)
    g, cert = random_weak_aligned_instance(rng, n=2, k=2, n_states=2, n_actions=2, n_provider_features=2, n_messages=2)
    bound = theoretical_bounds(g, cert, "personalized", identical_features_garbling(g, [0, 1])).bounds
    entries = enumerate_pure_equilibria(g, mode="personalized")
    assert entries
    for e in entries:
        for i in range(2):
            assert e.user_utilities[i] >= bound[i] - 1e-9
