"""Two providers who both stay silent, and why neither wants to talk.

Builds the two-user, two-provider public example, checks the silent
profile against every deterministic deviation, and compares what users get
with what a shared rule could have given them.
"""

from marketalign.constructions import make_full_revelation_rule, make_public_example
from marketalign.equilibrium import verify_anonymous_NE
from marketalign.game import constant_rule
from marketalign.garbling import benchmark_shared, identical_features_garbling


def main():
    g = make_public_example(eps=0.1, c=0.5, M=6, D=2)
    silent = [constant_rule(g, j) for j in range(g.n_providers)]
    rep = verify_anonymous_NE(g, silent)
    print(f"silent profile: {rep.to_dict()['label']}")
    print(f"  deviations checked per provider: {rep.n_deviations}")
    print(f"  user utilities {rep.user_utilities}, provider utilities {rep.provider_utilities}")

    gb = identical_features_garbling(g, [0, 1])
    print(f"shared-rule benchmark per user: {[benchmark_shared(g, i, gb) for i in range(g.n_users)]}")

    reveal = [make_full_revelation_rule(g, j) for j in range(g.n_providers)]
    rep = verify_anonymous_NE(g, reveal)
    print(f"full revelation: {rep.to_dict()['label']}, user utilities {rep.user_utilities}")


if __name__ == "__main__":
    main()
