"""A monopolist provider serving one user well, then a second user arrives.

The new user's abstention pays the provider, so its best rule no longer
informs the first user.
"""

from marketalign.alignment import fit_strong_exact
from marketalign.constructions import make_adding_users_base, make_public_adding_users
from marketalign.equilibrium import enumerate_pure_equilibria
from marketalign.garbling import benchmark_shared, identical_features_garbling


def main():
    base = make_adding_users_base()
    print("one user:", sorted({round(e.user_utilities[0], 6) for e in enumerate_pure_equilibria(base)}))

    g = make_public_adding_users()
    gb = identical_features_garbling(g, [0])
    print(f"two users: benchmark for the first user {benchmark_shared(g, 0, gb):.4f}")
    for e in enumerate_pure_equilibria(g):
        print(f"  best rule #{e.indices[0]}: first user gets {e.user_utilities[0]:.4f}")
    print(f"strong-alignment radius of the provider: {fit_strong_exact(g, 0).eps:.4f}")


if __name__ == "__main__":
    main()
