"""
Change points in a day of traffic
=================================

Segment a day of slow-flow graphs into runs that share one structure, and
look at what each run encodes.
"""

from trajflow import synth
from trajflow.flowgraph import build_graph_series, measure_flows
from trajflow.ingest import build_slice_axis, filter_short
from trajflow.mdl import blocks, detect_change_points, format_partitioned_matrix
from trajflow.partition import group_seed_points, seed_points

# A quiet first hour, an inbound morning rush with congestion everywhere, a
# light and fast midday, an outbound evening and a quiet last hour.
params = synth.SynthParams(schedule=synth.full_day_schedule(), noise_rate=0.02, seed=0)
ds = filter_short(synth.generate(params), 3000)
cells = group_seed_points(seed_points(ds), 3000)
flows = measure_flows(ds, cells, build_slice_axis(ds, params.delta_t))

# Keep only flows at or below 20 km/h.
series = build_graph_series(flows, "low", 20)
report = detect_change_points(series)
print("planted change points ", list(params.change_points))
print("detected change points", list(report.change_points))

# Bits per hour of each segment: the congested morning is the hardest to describe.
for seg in report.segments:
    print(f"slices {seg.first_slice:2d}-{seg.last_slice:2d}  k={seg.partitioning.k} "
          f"l={seg.partitioning.l}  {seg.cost_per_hour:7.1f} bits/h")

# The partitioned matrices show a vertical stripe in the morning (many origins
# into one hub) and a horizontal one in the evening (one hub out to many).
A = series.adjacency()
for seg in (report.segments[1], report.segments[3]):
    stack = A[seg.first_slice:seg.last_slice + 1]
    dense = [b for b in blocks(stack, seg.partitioning) if b.density >= 0.5]
    print()
    print(format_partitioned_matrix(stack, seg.partitioning))
    print("dense blocks:", [(b.shape, len(b.rows), len(b.cols), round(b.density, 2)) for b in dense])
