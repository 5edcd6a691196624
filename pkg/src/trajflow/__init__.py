"""Region-to-region flow graphs from trajectories, and MDL change points over a day."""

from .errors import (ConfigError, InputError, InvalidPartitioningError, InvariantError,
                     OracleLimitError, TrajflowError)
from .geo import CRS
from .ingest import (Dataset, ParseReport, Schema, SliceAxis, Trajectory, build_slice_axis,
                     dump_dataset, filter_short, load_dataset, parse_trajectories, path_length,
                     read_input)
from .partition import (CellSet, VoronoiPolygon, assign_region, build_voronoi, group_seed_points,
                        seed_points)
from .flowgraph import (EdgeMethod, FlowTable, GraphSeries, GraphSnapshot, build_graph_series,
                        build_snapshot, edie_speed, edge_count_sweep, extract_subtrajectories,
                        measure_flows, region_visit_sequence, sweep_table)
from .mdl import (ChangePointReport, Cost, Partitioning, SegmentModel, block_encoding_cost,
                  brute_force_segmentation, detect_change_points, exhaustive_partition,
                  search_partitions, segment_cost)

__version__ = "0.1.0"
