"""Surface-code memory on a segmented chain: logical error per round versus
distance, below and above the crossing point.

Each distance d lives on s = d + 2 segments. Raising d only helps while the
two-qubit error rate sits under the threshold, which this small sweep shows.
Run time is about a minute on one core.
"""
from segchain.sweep import surface_point

TRIALS = 20_000

print(f"{'eps2':>7} " + " ".join(f"{'d=' + str(d):>10}" for d in (3, 5, 7)))
for eps2 in (0.002, 0.004, 0.010):
    rates = []
    for d in (3, 5, 7):
        # R = d rounds keeps the trial failure probability well away from 1/2
        row = surface_point(d, eps2, d, TRIALS, seed=1)
        rates.append(row["p_L_Z"])
    print(f"{eps2:7.3f} " + " ".join(f"{p:10.2e}" for p in rates))

print("\nRows that fall left to right are below threshold; rows that rise are above it.")
