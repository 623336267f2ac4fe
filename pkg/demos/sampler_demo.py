"""Sampling trajectory sets from an IID-cluster multitrajectory density.

Builds a three-component single-trajectory mixture (two one-step
components, one two-step component, so two thirds of drawn trajectories
have length one) with a Poisson(3) cardinality, draws a few thousand sets,
and compares empirical frequencies against the density.
"""

import numpy as np

from trajphd import (
    CardinalityPmf,
    GmTrajectoryPhd,
    TrajectoryComponent,
    sample_iid_cluster,
)

N_SAMPLES = 5000


def component(weight, birth, mean, cov):
    mean = np.asarray(mean, dtype=float)
    return TrajectoryComponent(
        weight=weight, birth_time=birth, mean=mean,
        cov=np.asarray(cov, dtype=float), state_dim=1,
    )


def main():
    mixture = GmTrajectoryPhd(
        components=(
            component(1.0, 1, [0.0], [[1.0]]),
            component(1.0, 1, [4.0], [[1.0]]),
            component(1.0, 1, [-3.0, -3.0], [[1.0, 0.5], [0.5, 1.5]]),
        ),
        time=2,
    )
    card = CardinalityPmf.poisson(3.0, n_max=30)
    rng = np.random.default_rng(7)

    sizes = np.zeros(card.n_max + 1)
    lengths = {1: 0, 2: 0}
    for _ in range(N_SAMPLES):
        drawn = sample_iid_cluster(card, mixture, rng)
        sizes[len(drawn.trajectories)] += 1
        for t in drawn.trajectories:
            lengths[len(t.states)] += 1

    print(f"{N_SAMPLES} sets drawn, {int(sizes @ np.arange(sizes.size))} "
          f"trajectories total\n")
    print("set size   empirical   Poisson(3)")
    for n in range(8):
        print(f"{n:>8}   {sizes[n] / N_SAMPLES:>9.4f}   {card.probs[n]:>10.4f}")
    total = sum(lengths.values())
    print(f"\nlength-1 fraction: {lengths[1] / total:.4f} (density says 2/3)")
    print(f"length-2 fraction: {lengths[2] / total:.4f} (density says 1/3)")


if __name__ == "__main__":
    main()
