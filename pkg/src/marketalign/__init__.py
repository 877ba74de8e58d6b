"""Finite multi-provider, multi-user conversation games and market alignment.

Providers commit to conversation rules, users pick the provider whose rule
serves them best, and everything is evaluated exactly over the prior.
"""

__version__ = "0.1.0"

from .alignment import (
    StrongAlignmentCert,
    WeakAlignmentCert,
    check_strong,
    check_weak,
    fit_strong_exact,
    fit_strong_set,
    fit_weak_user_exact,
    load_cert,
    save_cert,
    strong_implies_weak,
)
from .constructions import (
    AugmentedGameSpec,
    augment,
    augment_weak_cert,
    make_full_revelation_rule,
    make_identity_elicitation_rule,
    make_public_adding_users,
    make_public_example,
    make_strict_separation,
    random_instance,
    random_strong_aligned_instance,
    random_weak_aligned_instance,
)
from .equilibrium import (
    EquilibriumReport,
    delta_R,
    enumerate_pure_equilibria,
    theoretical_bounds,
    verify_anonymous_NE,
    verify_personalized_NE,
)
from .errors import *  # noqa: F401,F403
from .game import (
    SCHEMA_VERSION,
    GameInstance,
    InducedDistribution,
    ProviderRule,
    SeparableUtility,
    UserStrategy,
    constant_rule,
    enumerate_deterministic_rules,
    signal_rule,
)
from .garbling import (
    GarblingSpec,
    benchmark_shared,
    coordinate_subset_garbling,
    identical_features_garbling,
    trivial_garbling,
    validate_garbling,
)
from .interaction import (
    best_response_decision,
    evaluate_user,
    induced_joint,
    optimal_user_strategy,
    play_anonymous,
    play_personalized,
    select_provider,
    simulate_interaction,
)
from .nnls import LeastSquaresProblem, nnls_solve
