"""Small random builders shared by several test modules."""

import numpy as np

from marketalign.constructions import prior_from_conditionals
from marketalign.game import GameInstance, ProviderRule, one_hot


def two_round_instance(rng, n_states=2, n_messages=2, n_user_features=2, n_provider_features=2, n_actions=2, speakers="PU"):
    """One user, one provider, R=2, random prior and utilities."""
    uc = rng.dirichlet(np.ones(n_user_features), size=n_states)
    pc = rng.dirichlet(np.ones(n_provider_features), size=n_states)
    prior = prior_from_conditionals(rng.dirichlet(np.ones(n_states)), [uc], [pc])
    return GameInstance(
        states=[f"y{s}" for s in range(n_states)],
        user_features=[[f"u{x}" for x in range(n_user_features)]],
        provider_features=[[f"x{x}" for x in range(n_provider_features)]],
        prior=prior,
        action_sets=[[f"a{a}" for a in range(n_actions)]],
        user_utils=[rng.random((n_actions, n_states))],
        provider_utils=[rng.random((n_actions, n_states))],
        messages=[f"m{m}" for m in range(n_messages)],
        rounds=len(speakers),
        speakers=speakers,
    )


def random_rule(rng, instance, provider_idx, deterministic=False):
    nx = len(instance.provider_features[provider_idx])
    tables = {}
    for p in instance.provider_prefixes():
        if deterministic:
            tables[p] = one_hot(rng.integers(0, instance.n_messages, size=nx), instance.n_messages)
        else:
            tables[p] = rng.dirichlet(np.ones(instance.n_messages), size=nx)
    return ProviderRule(tables)
