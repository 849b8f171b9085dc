"""Sliding super point detection with reversible sliding estimator arrays."""

__version__ = "0.1.0"

from .distributed import (SnapshotMeta, export_snapshot, import_snapshot, merge_rseas,
                          simulate_nodes)
from .errors import CandidateOverflow, ConfigError, SnapshotError, SSPError, TraceError
from .estimator import (DetectorParams, SlidingEstimator, WindowConfig, estimate, hot_cutoff,
                        intersect_max, merge_min, new_estimator)
from .hashing import (BitBlock, HashSeeds, RhfgConfig, assemble_ip, blocks_consistent,
                      hash_opposite, recover_block, rhfg, validate_config)
from .reconstruct import finalize_candidate, reconstruct, reconstruct_leveled, reconstruct_recursive
from .rsea import DetectionReport, HotSet, Rsea
from .workload import (AccuracyResult, CnetSpec, GroundTruth, Trace, TraceRecord, evaluate,
                       exact_counts, orient_pairs, read_trace, synth_trace, write_trace)
