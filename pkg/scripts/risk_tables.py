#!/usr/bin/env python3
"""Print the analytic risk model across the four topologies and a grid of
attacker ratios: expected malicious neighbors, per-node risk range, and the
recommended connection threshold."""
import argparse

from voyager_sim.topology import (
    build_risk_profile,
    build_topology,
    connection_threshold_kappa_n,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--alphas", default="0.1,0.3,0.6")
    parser.add_argument("--random-p", type=float, default=0.3)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    alphas = [float(a) for a in args.alphas.split(",")]
    header = f"{'topology':>8} {'alpha':>6} {'e_bar':>6} {'E[mal]':>7} {'risk min':>9} {'risk max':>9} {'kappa_n':>8}"
    print(header)
    print("-" * len(header))
    for kind in ("ring", "star", "random", "full"):
        g = build_topology(kind, args.n, seed=args.seed, random_p=args.random_p)
        for alpha in alphas:
            profile = build_risk_profile(g, alpha)
            kappa = connection_threshold_kappa_n(args.n, alpha, profile.edges_per_node_bar)
            suffix = "*" if kappa.saturated else ""
            print(
                f"{kind:>8} {alpha:>6.2f} {profile.edges_per_node_bar:>6.2f} "
                f"{profile.expected_malicious:>7.3f} {min(profile.per_node_risk):>9.4f} "
                f"{max(profile.per_node_risk):>9.4f} {str(kappa.value) + suffix:>8}"
            )
    print("(* clamped to n-1)")


if __name__ == "__main__":
    main()
