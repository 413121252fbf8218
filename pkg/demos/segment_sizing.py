"""How large must a segment be?

Combines the tabulated scaling law with p_CNOT = 14 d p_L to pick the
smallest segment size s = d + 2 that meets a target logical CNOT error, then
asks how many gates a level-4 gauge code on top of it would survive.
"""
from segchain.analysis import (UnattainableError, gates_before_failure, gauge_overhead,
                               required_segment)

for target in (4e-6, 1e-15):
    print(f"target p_CNOT = {target:g}")
    for eps2 in (1e-4, 5e-4, 1e-3, 3e-3, 6e-3, 8e-3):
        try:
            s = required_segment(eps2, target)
            print(f"   eps2 = {eps2:.4f}: s = {s}")
        except UnattainableError:
            print(f"   eps2 = {eps2:.4f}: not reachable (above threshold)")

s = 21
print(f"\ns = {s}: level-4 gauge code runs ~{gates_before_failure(0.001, s, 4):.1e} gates "
      f"at eps2 = 0.1%, using {gauge_overhead(4)} segments per logical qubit")
