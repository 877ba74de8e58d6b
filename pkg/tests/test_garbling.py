import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marketalign.constructions import (
    make_public_adding_users,
    make_public_example,
    make_strict_separation,
    prior_from_conditionals,
    random_instance,
)
from marketalign.errors import InvalidInstance, MessageSpaceTooSmall, SearchSpaceTooLarge
from marketalign.game import GameInstance
from marketalign.garbling import (
    GarblingSpec,
    benchmark_shared,
    best_shared_rule,
    compose_shared_rule,
    coordinate_subset_garbling,
    enumerate_shared_rules,
    identical_features_garbling,
    no_information_value,
    shared_rule_as_provider_rule,
    shared_rule_values,
    trivial_garbling,
    validate_garbling,
)
from marketalign.interaction import evaluate_user


def test_public_example_benchmark_is_c():
    for c in (0.25, 0.5, 0.9):
        g = make_public_example(0.1, c, 10, 2)
        gb = identical_features_garbling(g, [0, 1])
        assert validate_garbling(g, [0, 1], gb)[0]
        for i in range(2):
            assert benchmark_shared(g, i, gb) == pytest.approx(c, abs=1e-12)


def test_adding_users_benchmark_is_one():
    g = make_public_adding_users()
    gb = identical_features_garbling(g, [0])
    assert [benchmark_shared(g, i, gb) for i in range(2)] == pytest.approx([1.0, 1.0])


def test_trivial_garbling_gives_no_information_value():
    g = make_public_adding_users()
    gb = trivial_garbling(g, [0])
    assert validate_garbling(g, [0], gb)[0]
    assert benchmark_shared(g, 0, gb) == pytest.approx(no_information_value(g, 0))
    assert no_information_value(g, 0) == pytest.approx(2 / 3)


def test_zero_rounds_means_no_information():
    g = make_public_example(0.1, 0.5, 6, 2)
    gb = identical_features_garbling(g, [0, 1])
    assert benchmark_shared(g, 0, gb, rounds=0) == pytest.approx(no_information_value(g, 0))


def test_identical_features_rejects_different_observations(rng):
    g = random_instance(rng, n=1, k=2, n_states=3, n_provider_features=2)
    # the generator shares one deterministic feature across providers
    identical_features_garbling(g, [0, 1])
    prior = g.prior.copy()
    # flip provider 1's label on half the mass
    bad = prior[..., ::-1] * 0.5 + prior * 0.5
    h = GameInstance(
        states=g.states, user_features=g.user_features, provider_features=g.provider_features, prior=bad,
        action_sets=g.action_sets, user_utils=g.user_utils, provider_utils=g.provider_utils, messages=g.messages,
    )
    with pytest.raises(InvalidInstance):
        identical_features_garbling(h, [0, 1])


def test_validate_detects_wrong_reference():
    g = make_public_example(0.1, 0.5, 6, 2)
    gb = identical_features_garbling(g, [0, 1])
    bad = GarblingSpec(gb.labels, gb.maps, np.roll(gb.reference, 1, axis=1))
    ok, gap = validate_garbling(g, [0, 1], bad)
    assert not ok and gap == pytest.approx(1.0)
    assert validate_garbling(g, [0, 1], GarblingSpec(gb.labels, {0: gb.maps[0]}, gb.reference)) == (False, float("inf"))


def test_garbling_json_round_trip(tmp_path):
    g = make_public_example(0.1, 0.5, 6, 2)
    gb = identical_features_garbling(g, [0, 1])
    gb.save(tmp_path / "z.json")
    back = GarblingSpec.load(tmp_path / "z.json")
    assert back.labels == gb.labels
    np.testing.assert_array_equal(back.reference, gb.reference)


def test_coordinate_subset_garbling_keeps_common_coordinates():
    sizes = [2, 2]
    prior = prior_from_conditionals(
        np.full(4, 0.25),
        [np.ones((4, 1))],
        [np.eye(4), np.kron(np.eye(2), np.ones((2, 1)))],
    )
    h = GameInstance(
        states=["00", "01", "10", "11"], user_features=[["-"]],
        provider_features=[["00", "01", "10", "11"], ["0", "1"]], prior=prior,
        action_sets=[["a"]], user_utils=[np.zeros((1, 4))], provider_utils=[np.zeros((1, 4))] * 2, messages=["m"],
    )
    gb = coordinate_subset_garbling(h, [0, 1], sizes, {0: [0, 1], 1: [0]})
    assert gb.labels == ["(0)", "(1)"]
    assert validate_garbling(h, [0, 1], gb)[0]


def _two_view_instance(rng, n_z=3, speakers="PP", n_messages=2):
    """Provider 0 sees (a, b), provider 1 sees a; both can simulate z ~ K[a]."""
    prior = prior_from_conditionals(
        np.full(4, 0.25), [np.ones((4, 1))], [np.eye(4), np.kron(np.eye(2), np.ones((2, 1)))]
    )
    g = GameInstance(
        states=["00", "01", "10", "11"], user_features=[["-"]],
        provider_features=[["00", "01", "10", "11"], ["0", "1"]], prior=prior,
        action_sets=[["a0", "a1"]], user_utils=[rng.random((2, 4))], provider_utils=[np.zeros((2, 4))] * 2,
        messages=[f"m{b}" for b in range(n_messages)], rounds=len(speakers), speakers=speakers,
    )
    K = rng.dirichlet(np.ones(n_z), size=2)
    gb = GarblingSpec([f"z{b}" for b in range(n_z)], {0: np.repeat(K, 2, axis=0), 1: K}, np.repeat(K, 2, axis=0))
    return g, gb, K


@pytest.mark.parametrize("seed", range(5))
def test_shared_rule_induces_same_message_law_through_every_provider(seed):
    rng = np.random.default_rng(seed)
    g, gb, K = _two_view_instance(rng)
    assert validate_garbling(g, [0, 1], gb)[0]
    nm = g.n_messages
    shared = {(): rng.dirichlet(np.ones(nm), size=3)}
    for m in range(nm):
        shared[(m,)] = rng.dirichlet(np.ones(nm), size=3)
    # law of (m1, m2) given y computed directly on z
    ref = np.einsum("yz,za,zab->yab", gb.reference, shared[()], np.stack([shared[(a,)] for a in range(nm)], axis=1))
    for j in (0, 1):
        tables = compose_shared_rule(g, j, gb, shared)
        cond = g.provider_marginal(j) / g.provider_marginal(j).sum(axis=1, keepdims=True)
        law = np.zeros((4, nm, nm))
        for a, b in itertools.product(range(nm), repeat=2):
            law[:, a, b] = cond @ (tables[()][:, a] * tables[(a,)][:, b])
        np.testing.assert_allclose(law, ref, atol=1e-12)


def _partition_oracle(instance, user_idx, garbling, provider_idx):
    """Best one-round deterministic shared rule by listing every map z -> message."""
    joint = instance.pair_marginal(user_idx, provider_idx)
    pz = np.einsum("yux,xz->uzy", joint, garbling.maps[provider_idx])
    best = -np.inf
    for assign in itertools.product(range(instance.n_messages), repeat=garbling.n_z):
        total = 0.0
        for u in range(pz.shape[0]):
            for m in range(instance.n_messages):
                mass = pz[u][np.asarray(assign) == m].sum(axis=0)
                total += (instance.user_utils[user_idx] @ mass).max()
        best = max(best, total)
    return best


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_small_message_space_enumeration_matches_partition_oracle(seed):
    rng = np.random.default_rng(seed)
    g = random_instance(rng, n=1, k=2, n_states=3, n_actions=3, n_user_features=2, n_provider_features=3, n_messages=2)
    gb = identical_features_garbling(g, [0, 1])
    v = benchmark_shared(g, 0, gb)
    oracle = min(_partition_oracle(g, 0, gb, j) for j in (0, 1))
    assert v == pytest.approx(oracle, abs=1e-12)
    with pytest.raises(MessageSpaceTooSmall):
        shared_rule_values(g, 0, gb, method="revelation")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_revelation_equals_enumeration_when_messages_suffice(seed):
    rng = np.random.default_rng(seed)
    g = random_instance(rng, n=1, k=2, n_states=2, n_actions=2, n_user_features=2, n_provider_features=2, rounds=2)
    gb = identical_features_garbling(g, [0, 1])
    rev = shared_rule_values(g, 0, gb, method="revelation")
    enum = shared_rule_values(g, 0, gb, method="enumerate")
    for j in (0, 1):
        assert rev[j] == pytest.approx(enum[j], abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_refining_the_garbling_never_lowers_the_benchmark(seed):
    rng = np.random.default_rng(seed)
    g = random_instance(rng, n=2, k=2, n_states=3, n_actions=3, n_user_features=2, n_provider_features=3)
    fine = identical_features_garbling(g, [0, 1])
    # merge the last two z values
    merge = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    coarse = GarblingSpec(["a", "b"], {j: f @ merge for j, f in fine.maps.items()}, fine.reference @ merge)
    assert validate_garbling(g, [0, 1], coarse)[0]
    triv = trivial_garbling(g, [0, 1])
    for i in range(2):
        f, c, t = (benchmark_shared(g, i, x) for x in (fine, coarse, triv))
        assert f >= c - 1e-12 >= t - 2e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_best_shared_rule_attains_benchmark(seed):
    rng = np.random.default_rng(seed)
    n_msg = int(rng.integers(2, 4))
    g = random_instance(rng, n=1, k=2, n_states=3, n_actions=3, n_user_features=2, n_provider_features=3, n_messages=n_msg)
    gb = identical_features_garbling(g, [0, 1])
    vals = shared_rule_values(g, 0, gb)
    for j in (0, 1):
        shared = best_shared_rule(g, 0, gb, g.rounds, j)
        rule = shared_rule_as_provider_rule(g, j, gb, shared)
        assert evaluate_user(g, 0, rule, j).utility == pytest.approx(vals[j], abs=1e-12)


def test_shared_rule_enumeration_cap():
    g = make_public_example(0.1, 0.5, 6, 2)
    gb = identical_features_garbling(g, [0, 1])
    with pytest.raises(SearchSpaceTooLarge):
        next(enumerate_shared_rules(g, gb, cap=1000))
    assert sum(1 for _ in enumerate_shared_rules(make_strict_separation(), trivial_garbling(make_strict_separation(), [0, 1]))) == 2
