import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marketalign.constructions import random_instance
from marketalign.errors import DimensionMismatch, EmptyActionSet, InvalidInstance, SearchSpaceTooLarge
from marketalign.game import (
    GameInstance,
    InducedDistribution,
    ProviderRule,
    SeparableUtility,
    alternating_speakers,
    constant_rule,
    count_deterministic_rules,
    enumerate_deterministic_rules,
    signal_rule,
    validate_schema,
)


def tiny(**overrides):
    kw = dict(
        states=["y0", "y1"],
        user_features=[["-"]],
        provider_features=[["x0", "x1"]],
        prior=np.array([[[0.5, 0.0]], [[0.0, 0.5]]]),
        action_sets=[["a0", "a1"]],
        user_utils=[np.eye(2)],
        provider_utils=[np.eye(2)],
        messages=["m0", "m1"],
    )
    kw.update(overrides)
    return GameInstance(**kw)


def test_default_speakers_alternate_from_provider():
    assert alternating_speakers(3) == "PUP"
    assert tiny(rounds=4).speakers == "PUPU"


def test_prior_must_sum_to_one():
    with pytest.raises(InvalidInstance):
        tiny(prior=np.array([[[0.5, 0.0]], [[0.0, 0.4]]]))


def test_prior_within_tolerance_is_accepted():
    tiny(prior=np.array([[[0.5 + 4e-13, 0.0]], [[0.0, 0.5]]]))


def test_prior_shape_checked():
    with pytest.raises(DimensionMismatch):
        tiny(prior=np.full((2, 2), 0.25))


def test_utilities_must_lie_in_unit_interval():
    with pytest.raises(InvalidInstance):
        tiny(user_utils=[np.array([[1.5, 0.0], [0.0, 1.0]])])
    with pytest.raises(InvalidInstance):
        tiny(provider_utils=[np.array([[-0.1, 0.0], [0.0, 1.0]])])


def test_empty_action_set_rejected():
    with pytest.raises(EmptyActionSet):
        tiny(action_sets=[[]], user_utils=[np.zeros((0, 2))])


def test_separable_must_match_dense():
    sep = SeparableUtility(np.array([[1.0]]), [[np.eye(2)]], np.zeros(1))
    tiny(separable=sep)
    with pytest.raises(InvalidInstance):
        tiny(separable=sep, provider_utils=[np.eye(2)[::-1]])


def test_dense_built_from_separable():
    sep = SeparableUtility(np.array([[0.5]]), [[np.eye(2)]], np.array([0.25]))
    g = tiny(separable=sep, provider_utils=None)
    np.testing.assert_allclose(g.provider_utils[0], 0.5 * np.eye(2) + 0.25)


def test_tie_break_orders_validated():
    with pytest.raises(InvalidInstance):
        tiny(action_order=[[0, 0]])
    with pytest.raises(InvalidInstance):
        tiny(provider_order=[1])


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    g = random_instance(rng, n=2, k=2, n_states=3, n_actions=2, n_user_features=2, rounds=2)
    path = tmp_path / "g.json"
    g.save(path)
    h = GameInstance.load(path)
    assert h.to_dict() == g.to_dict()
    assert h.speakers == "PU"


def test_json_schema_rejects_missing_fields():
    doc = tiny().to_dict()
    del doc["prior"]
    with pytest.raises(Exception):
        GameInstance.from_dict(doc)
    validate_schema(tiny().to_dict(), "game_instance")


def test_arrays_are_read_only():
    g = tiny()
    with pytest.raises(ValueError):
        g.prior[0, 0, 0] = 1.0


def test_pair_marginal_sums_out_other_players():
    rng = np.random.default_rng(1)
    g = random_instance(rng, n=2, k=2, n_states=3, n_user_features=2, n_provider_features=2)
    m = g.pair_marginal(1, 0)
    manual = g.prior.sum(axis=(1, 4))
    np.testing.assert_allclose(m, manual)
    np.testing.assert_allclose(g.provider_marginal(1), g.prior.sum(axis=(1, 2, 3)))


def test_provider_prefixes_follow_speakers():
    g = tiny(rounds=3)
    assert g.provider_prefixes() == [(), (0, 0), (0, 1), (1, 0), (1, 1)]
    assert g.user_prefixes() == [(0,), (1,)]


def test_rule_rows_must_be_distributions():
    with pytest.raises(InvalidInstance):
        ProviderRule({(): np.array([[0.5, 0.6], [1.0, 0.0]])})


def test_rule_default_and_determinism():
    g = tiny(rounds=3)
    r = constant_rule(g, 0, message=1)
    assert r.deterministic
    np.testing.assert_array_equal(r.table((1, 0)), [[0, 1], [0, 1]])
    s = signal_rule(g, [1, 0])
    np.testing.assert_array_equal(s.table(()), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(s.table((0, 1)), [[1, 0], [1, 0]])


def test_rule_json_round_trip():
    r = ProviderRule({(): np.array([[0.25, 0.75], [1.0, 0.0]])}, default=np.eye(2), label="x")
    back = ProviderRule.from_dict(json.loads(json.dumps(r.to_dict())))
    assert back.key == r.key and back.label == "x"


def test_deterministic_rule_enumeration_counts_and_order():
    g = tiny(rounds=2)
    assert count_deterministic_rules(g, 0) == 4
    labels = [r.label for r in enumerate_deterministic_rules(g, 0)]
    assert labels == ["det:00", "det:01", "det:10", "det:11"]
    keys = {r.key for r in enumerate_deterministic_rules(tiny(rounds=3), 0)}
    assert len(keys) == 2 ** (2 * 5)


def test_enumeration_cap():
    with pytest.raises(SearchSpaceTooLarge):
        list(enumerate_deterministic_rules(tiny(rounds=3), 0, cap=100))


def test_induced_distribution_checks():
    d = InducedDistribution(np.array([[0.25, 0.25], [0.25, 0.25]]))
    d.check(np.array([0.5, 0.5]))
    with pytest.raises(InvalidInstance):
        d.check(np.array([0.6, 0.4]))
    j = InducedDistribution(np.full((2, 3, 2), 1 / 12), "joint")
    np.testing.assert_allclose(j.user_marginal(1), np.full((3, 2), 1 / 6))
    np.testing.assert_allclose(j.action_marginal(0), [0.5, 0.5])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_random_instances_satisfy_invariants(seed):
    rng = np.random.default_rng(seed)
    g = random_instance(rng, n=2, k=2, n_states=int(rng.integers(1, 4)), n_actions=int(rng.integers(1, 4)))
    assert abs(g.prior.sum() - 1) <= 1e-12
    assert all(0 <= u.min() and u.max() <= 1 for u in g.user_utils + g.provider_utils)
