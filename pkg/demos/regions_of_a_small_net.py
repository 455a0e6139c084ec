"""
Regions of a small ReLU network
===============================

A ReLU network cuts its input plane into convex pieces, one per activation
pattern.  We count the pieces on a grid, then walk a segment across them.
"""

import numpy as np

from relubits import NetworkSpec, grid_census, hamming, init_network, region_of, segment_walk

# three lines in the plane: x = 0, y = 0, x + y = 1
W = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
lines = NetworkSpec([2, 3, 2], [W, np.ones((2, 3))], [np.array([0.0, 0.0, -1.0]), np.zeros(2)])

for depth in range(0, 9, 2):
    print("depth", depth, "->", len(grid_census(lines, (-2, 2), depth)), "patterns")
# three lines in general position make 7 regions, and the census finds all of them

# a random two-layer net has many more patterns, but nowhere near 2**16
net = init_network([2, 8, 8, 2], seed=0)
census = grid_census(net, (-3, 3), 9)
print("random 2-8-8-2 net:", len(census), "patterns on a 513 x 513 grid")
for e in sorted(census, key=lambda e: -e.count)[:5]:
    print("  ", e.bits.hex(), e.count, e.witness)

# walk from one corner of the box to the other
a, b = np.array([-3.0, -3.0]), np.array([3.0, 3.0])
walk = segment_walk(net, a, b, delta=1e-8)
print(len(walk.transitions), "transitions,", walk.total_flips, "bit flips in total")
print("hamming distance of the endpoints:", hamming(region_of(net, a).bits, region_of(net, b).bits))
for tr in walk.transitions[:8]:
    print(f"  t = {tr.t:.6f} flips {list(tr.flipped)}")
