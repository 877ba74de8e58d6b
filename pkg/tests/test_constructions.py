import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marketalign.alignment import check_weak, fit_strong_exact
from marketalign.constructions import (
    BOTTOM,
    CONSTRUCTIONS,
    AugmentedGameSpec,
    augment,
    augment_weak_cert,
    make_adding_users_base,
    make_full_revelation_rule,
    make_identity_elicitation_rule,
    make_public_adding_users,
    make_public_example,
    make_strict_separation,
    prior_from_conditionals,
    public_example_weak_cert,
    random_strong_aligned_instance,
    random_weak_aligned_instance,
)
from marketalign.equilibrium import enumerate_pure_equilibria, verify_anonymous_NE
from marketalign.errors import MessageSpaceTooSmall, NotApplicable, ParameterViolation
from marketalign.game import GameInstance, SeparableUtility, constant_rule
from marketalign.garbling import benchmark_shared, identical_features_garbling
from marketalign.interaction import evaluate_user, play_anonymous


@pytest.mark.parametrize(
    "eps,c,M,D",
    [(0.1, 0.25, 2, 2), (0.1, 0.5, 5, 2), (0.0, 0.5, 10, 2), (0.5, 0.5, 10, 2), (0.1, 1.5, 20, 2), (0.1, 0.5, 6, 1)],
)
def test_public_example_rejects_bad_parameters(eps, c, M, D):
    with pytest.raises(ParameterViolation):
        make_public_example(eps, c, M, D)


def test_public_example_shape():
    g = make_public_example(0.1, 0.5, 6, 3)
    assert g.states == [str(s) for s in range(1, 7)]
    assert g.action_sets[0][-1] == BOTTOM
    np.testing.assert_allclose(g.separable.lam, [[0.25, 0.75], [0.75, 0.25]])
    np.testing.assert_allclose(g.state_marginal(), np.full(6, 1 / 6))


def test_public_example_user_prefers_abstaining_without_information(public_6):
    g = public_6
    ev = evaluate_user(g, 0, constant_rule(g, 0), 0)
    # c/M = 1/12 < eps = 0.1, so the uninformed user abstains
    assert ev.utility == pytest.approx(0.1)
    assert ev.kernel[0, 0, -1] == 1.0


def test_prior_from_conditionals_marginals(rng):
    py = rng.dirichlet(np.ones(3))
    u = rng.dirichlet(np.ones(2), size=3)
    p = rng.dirichlet(np.ones(4), size=3)
    prior = prior_from_conditionals(py, [u], [p])
    assert prior.shape == (3, 2, 4)
    np.testing.assert_allclose(prior.sum(axis=(1, 2)), py)
    np.testing.assert_allclose(prior.sum(axis=1), py[:, None] * p)


def test_strict_separation_tables():
    g = make_strict_separation()
    u0 = g.provider_utils[0]
    # F_{0,i} = a_i * y_0 / 2 with lam = 1 on both users
    assert u0[1, 1, 0] == pytest.approx(1.0)
    assert u0[1, 0, 0] == pytest.approx(0.5)
    assert u0[1, 1, 1] == pytest.approx(0.0)
    np.testing.assert_allclose(g.user_utils[0], [[0.0, 0.0], [0.25, 0.25]])


def test_public_adding_users_provider_table():
    g = make_public_adding_users()
    u = g.provider_utils[0]  # (a1, a2, y)
    for a1 in range(3):
        for a2 in range(3):
            for y in range(2):
                expect = 0.25 * (a1 == y) + (a1 == 2) / 6 + 0.5 * (a2 == 2)
                assert u[a1, a2, y] == pytest.approx(expect)


def test_adding_a_user_lowers_equilibrium_welfare():
    base = make_adding_users_base()
    base_ne = enumerate_pure_equilibria(base)
    assert base_ne and all(e.user_utilities[0] == pytest.approx(1.0) for e in base_ne)
    g = make_public_adding_users()
    ne = enumerate_pure_equilibria(g)
    assert min(e.user_utilities[0] for e in ne) == pytest.approx(2 / 3)
    silent = play_anonymous(g, [constant_rule(g, 0)])
    assert silent.provider_utilities[0] == pytest.approx(2 / 3)
    assert verify_anonymous_NE(g, [constant_rule(g, 0)]).is_eps_ne
    reveal = play_anonymous(g, [make_full_revelation_rule(g, 0)])
    assert reveal.provider_utilities[0] == pytest.approx(0.25)


def _spec(rng, g, beta, n_act=2):
    return AugmentedGameSpec(
        actions=[f"b{a}" for a in range(n_act)],
        utility=rng.random((n_act, g.n_states)),
        beta=[beta] * g.n_providers,
        perturbation=rng.random((n_act, g.n_states)),
    )


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), beta=st.floats(1e-9, 0.999))
def test_augment_keeps_base_users_and_scales_residual(seed, beta):
    rng = np.random.default_rng(seed)
    g, cert = random_weak_aligned_instance(rng, n=2, k=2, n_states=2, n_actions=2)
    # add noise so the base certificate has a nonzero provider residual
    noisy = [np.clip(u + rng.normal(0, 0.05, u.shape), 0, 1) for u in g.provider_utils]
    g = GameInstance(
        states=g.states, user_features=g.user_features, provider_features=g.provider_features, prior=g.prior,
        action_sets=g.action_sets, user_utils=g.user_utils, provider_utils=noisy, messages=g.messages,
    )
    eps_p, eps_u = check_weak(g, cert)
    cert.eps_P, cert.eps_U = eps_p, eps_u
    spec = _spec(rng, g, beta)
    h = augment(g, spec)
    for i in range(2):
        assert np.array_equal(h.user_utils[i], g.user_utils[i])
    np.testing.assert_allclose(h.prior.sum(axis=3), g.prior, atol=1e-15)
    new_cert = augment_weak_cert(cert, spec)
    new_eps_p, new_eps_u = check_weak(h, new_cert)
    assert new_eps_p == pytest.approx((1 - beta) * eps_p, abs=1e-12)
    assert new_eps_u == pytest.approx(eps_u, abs=1e-12)
    assert new_cert.users == [0, 1]


def test_augment_separable_matches_dense(rng):
    g = make_public_example(0.1, 0.5, 6, 2)
    h = augment(g, _spec(rng, g, 0.3, n_act=3))
    assert h.n_users == 3
    dense = h.provider_utils
    sep = SeparableUtility(h.separable.lam, h.separable.components, h.separable.const)
    # rebuilding from the separable form reproduces the stored dense tables
    rebuilt = GameInstance(
        states=h.states, user_features=h.user_features, provider_features=h.provider_features, prior=h.prior,
        action_sets=h.action_sets, user_utils=h.user_utils, provider_utils=None, messages=h.messages, separable=sep,
    )
    for a, b in zip(dense, rebuilt.provider_utils):
        np.testing.assert_allclose(a, b, atol=1e-15)


def test_augment_rejects_bad_beta(rng):
    g = make_adding_users_base()
    for beta in (0.0, 1.0):
        with pytest.raises(ParameterViolation):
            augment(g, _spec(rng, g, beta, n_act=3))


def test_augment_with_per_provider_perturbations(rng):
    g = make_public_example(0.1, 0.5, 6, 2)
    fs = [rng.random((2, 6)), rng.random((2, 6))]
    spec = AugmentedGameSpec(["b0", "b1"], rng.random((2, 6)), [0.2, 0.4], fs)
    h = augment(g, spec)
    np.testing.assert_allclose(h.provider_utils[1][0, 0, 1, 3], 0.6 * g.provider_utils[1][0, 0, 3] + 0.4 * fs[1][1, 3])
    cert = augment_weak_cert(public_example_weak_cert(g, 0.1, 0.5), spec)
    assert check_weak(h, cert) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_full_revelation_needs_enough_messages():
    g = make_public_example(0.1, 0.25, 3, 2)
    make_full_revelation_rule(g, 0)
    h = make_strict_separation()
    small = GameInstance(
        states=h.states, user_features=h.user_features, provider_features=h.provider_features, prior=h.prior,
        action_sets=h.action_sets, user_utils=h.user_utils, provider_utils=h.provider_utils, messages=["only"],
    )
    with pytest.raises(MessageSpaceTooSmall):
        make_full_revelation_rule(small, 0)


def _user_first(rng, n_messages=2):
    g, _ = random_strong_aligned_instance(
        rng, n=2, k=1, n_states=3, n_actions=3, n_provider_features=3, n_messages=n_messages, rounds=2, speakers="UP"
    )
    return g


@pytest.mark.parametrize("seed", range(6))
def test_identity_elicitation_gives_each_user_the_shorter_benchmark(seed):
    rng = np.random.default_rng(seed)
    g = _user_first(rng, n_messages=3)
    gb = identical_features_garbling(g, [0])
    rule = make_identity_elicitation_rule(g, 0, gb)
    for i in range(2):
        got = evaluate_user(g, i, rule, 0).utility
        assert got >= benchmark_shared(g, i, gb, rounds=1) - 1e-12


def test_identity_elicitation_preconditions(rng):
    g = _user_first(rng)
    gb = identical_features_garbling(g, [0])
    pf, _ = random_strong_aligned_instance(rng, n=2, k=1, n_states=2, n_actions=2, rounds=2)
    with pytest.raises(NotApplicable):
        make_identity_elicitation_rule(pf, 0, identical_features_garbling(pf, [0]))
    one, _ = random_strong_aligned_instance(rng, n=2, k=1, n_states=2, n_actions=2, rounds=1)
    with pytest.raises(NotApplicable):
        make_identity_elicitation_rule(one, 0, identical_features_garbling(one, [0]))
    three, _ = random_strong_aligned_instance(rng, n=3, k=1, n_states=2, n_actions=2, n_messages=2, rounds=2, speakers="UP")
    with pytest.raises(MessageSpaceTooSmall):
        make_identity_elicitation_rule(three, 0, identical_features_garbling(three, [0]))
    assert make_identity_elicitation_rule(g, 0, gb).label == "identity-elicitation"


def test_random_strong_instance_is_exactly_aligned(rng):
    g, cert = random_strong_aligned_instance(rng, n=3, k=2, n_states=2, n_actions=2)
    for t, j in enumerate(cert.providers):
        assert fit_strong_exact(g, j).eps <= 1e-7
    assert cert.covers()


def test_registry_builds_every_named_construction():
    for name, build in CONSTRUCTIONS.items():
        g = build(0.1, 0.5, 6, 2) if name == "public-example" else build()
        assert isinstance(g, GameInstance), name
