"""Toolkit for detecting social contagion in longitudinal network panels.

Core pieces: a panel data model with wave snapshots and geodesic
distances; a permutation clustering test by network distance; dyadic
longitudinal regression with cluster-robust inference, directional-tie
contrasts, and geographic interaction terms; seeded simulators that
generate panels with known ground truth to validate all of the above; and
deterministic exports for visualization.
"""

__version__ = "0.1.0"

from .cluster import (
    ClusterTestResult,
    DistanceResult,
    RiskRatioResult,
    cluster_test,
    decay_profile,
    dichotomize,
    permutation_null,
    reach,
    residualize_trait,
    risk_ratio_at_distance,
)
from .errors import (
    CollinearityError,
    ConvergenceError,
    DataError,
    NumericalError,
    PanelFormatError,
    SeparationError,
)
from .gee import (
    DyadRow,
    FirstDifferenceResult,
    FitResult,
    ModelSpec,
    build_dyad_rows,
    directional_contrast,
    distance_interaction,
    first_difference,
    fit_gee,
    lagged_change_model,
    lm_serial_test,
)
from .manifest import RunManifest, build_manifest
from .panel import (
    NetworkSnapshot,
    NodeInfo,
    Panel,
    TieRecord,
    classify_friendship,
    degree_stats,
    derive_neighbor_ties,
    geodesic_distances,
    geographic_distance,
    haversine_miles,
    load_panel,
    snapshot,
    write_panel,
)
from .seeds import spawn_rng
from .simulate import (
    ABMSpec,
    InfectionTrace,
    PathBiasRecord,
    SyntheticNetworkSpec,
    ValidationReport,
    abm_generate_panel,
    generate_network,
    path_bias_experiment,
    sample_network,
    simulate_spread,
    validation_harness,
)
from .viz import (
    SmoothedTrait,
    export_graph,
    geodesic_smooth,
    largest_component,
    load_graph_json,
)

__all__ = [name for name in dir() if not name.startswith("_")]
