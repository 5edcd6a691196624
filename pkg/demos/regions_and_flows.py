"""
From trajectories to a graph of regional flows
==============================================

Generate a synthetic day of trips, carve the plane into cells, and count
region-to-region flows per hour under different speed thresholds.
"""

import numpy as np

from trajflow import synth
from trajflow.flowgraph import build_graph_series, measure_flows, sweep_table
from trajflow.ingest import build_slice_axis, filter_short
from trajflow.partition import build_voronoi, group_seed_points, seed_points

# A day of 19 hourly slices on a 20-region grid with a little random traffic.
params = synth.SynthParams(n_regions=20, schedule=synth.full_day_schedule(), noise_rate=0.02, seed=0)
ds = synth.generate(params)
print(f"{len(ds)} trips generated")

# Short hops say little about network-wide flow; keep trips longer than 3 km.
ds = filter_short(ds, 3000)
print(f"{len(ds)} trips longer than 3 km")

# Every recorded point is a seed; cells have a radius of about 3 km.
cells = group_seed_points(seed_points(ds), 3000)
print(f"{len(cells)} cells, members per cell {cells.member_count.min()}..{cells.member_count.max()}")

# The cells' Voronoi polygons tile the bounding box of the data.
polys = build_voronoi(cells)
print(f"total polygon area {sum(p.area for p in polys) / 1e6:.0f} km^2")

# Pool trips per (origin cell, destination cell, departure hour).
axis = build_slice_axis(ds, 3600)
flows = measure_flows(ds, cells, axis)
print(f"{len(flows.measures)} measured (i, j, hour) flows over {axis.T} slices")

# Edges per hour: all flows, slow ones (<= 20 km/h) and fast ones.
for method, v_c in (("all", None), ("low", 20), ("high", 20)):
    counts = build_graph_series(flows, method, v_c).edge_counts()
    print(f"{method:>4}: {counts}")

# Sweep the threshold from 5 to 80 km/h. Slow edge counts only grow with the
# threshold and fast ones only shrink.
rows = sweep_table(flows, [5.0 * k for k in range(1, 17)], ["low"])
table = np.array([r.edges for r in rows]).reshape(16, axis.T)
print("v_c  edges per hour (low speed)")
for k, line in enumerate(table, start=1):
    print(f"{5 * k:>3}  {' '.join(f'{c:3d}' for c in line)}")
