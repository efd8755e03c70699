"""Invariant Bernoulli measures of exchange processes with a deterministic pair map."""

__version__ = "0.1.0"

from .checker import check_agreement, check_model_invariance, check_pair_invariance, check_rate_condition
from .conservation import conservation_laws, verify_log_measure
from .cycles import classify_points, closure, connected_components, decompose_cycles, symmetrize_cycle
from .exactgen import brute_force_families, build_generator, verify_invariant_exact
from .model import (
    PairMap,
    PairState,
    ProcessModel,
    RateTable,
    SpinMeasure,
    SpinSpace,
    two_pair_map,
    load_measure,
    load_model,
    pair_measure,
    validate_model,
)
from .partitions import (
    IbmFamily,
    SpinPartition,
    candidate_kill_sets,
    enumerate_families,
    enumerate_families_general,
    family_from_partition,
    minimal_partition_connected,
    reduce_non_bijective,
    sample_generic_measure,
)
