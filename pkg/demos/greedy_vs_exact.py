"""
Greedy segmentation against the exact optimum
=============================================

On small series the cheapest segmentation can be found by trying every
grouping and every set of boundaries. Compare it with the streaming greedy.
"""

import numpy as np

from trajflow.mdl import brute_force_segmentation, detect_change_points

# Five hours of traffic into vertex 0, then five hours out of it.
n = 6
inbound = np.zeros((n, n), dtype=int)
inbound[1:, 0] = 1
series = np.stack([inbound] * 5 + [inbound.T] * 5)

greedy = detect_change_points(series)
exact = brute_force_segmentation(series)
print("greedy:", list(greedy.change_points), f"{greedy.total_cost:.2f} bits")
print("exact: ", list(exact.change_points), f"{exact.total_cost:.2f} bits")

# Random small series built from a few structural regimes.
rng = np.random.default_rng(0)
ratios = []
for _ in range(20):
    T = int(rng.integers(2, 9))
    cut = int(rng.integers(1, T))
    A = np.zeros((T, 4, 4), dtype=int)
    for a, b in ((0, cut), (cut, T)):
        p = np.where(rng.random((4, 4)) < 0.4, 0.9, 0.05)
        A[a:b] = rng.random((b - a, 4, 4)) < p
    ratios.append(detect_change_points(A).total_cost / brute_force_segmentation(A).total_cost)

# The greedy never beats the optimum and rarely costs much more.
print("greedy / exact:", np.round(sorted(ratios), 3))
