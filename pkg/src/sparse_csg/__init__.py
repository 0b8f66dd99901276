"""Sparse episodic value estimation and exact coalition structure generation.

Two-phase pipeline: estimate a sparse coalition contribution vector from
noisy episodic payoffs (greedy pursuit, lasso, plug-in or dense least
squares), then solve the coalition structure generation problem exactly on
the inferred value function.
"""

from .errors import (
    ConfigError,
    DimensionMismatchError,
    IllPosedError,
    InsufficientDataError,
    InvalidPartitionError,
    MissingNoiseError,
    RankDeficiencyError,
    SparseCsgError,
)
from .model import (
    CoalitionStructure,
    CoalitionUniverse,
    EpisodeBatch,
    EstimateResult,
    GroundTruth,
    agents_from_mask,
    mask_from_agents,
    validate_structure,
    welfare,
    welfare_lipschitz_check,
)
from .generation import (
    DesignConfig,
    NoiseConfig,
    generate_design,
    generate_noise,
    generate_theta,
    synthesize_batch,
)
from .estimators import (
    BgcpConfig,
    BgcpIteration,
    LassoConfig,
    bgcp,
    dls,
    epc,
    kkt_residual,
    l0_map_oracle,
    lasso,
    lasso_objective,
    least_squares_on_support,
)
from .diagnostics import (
    DesignReport,
    LassoErrorReport,
    NoiseEvent,
    correlation_profile,
    design_report,
    empirical_gram,
    gram_deviation,
    lasso_error_report,
    mutual_coherence,
    noise_event_margin,
    re_certificate,
)
from .solver import (
    PipelineResult,
    ValueFunction,
    iter_partitions,
    optimal_structure_for,
    pipeline_bgcp,
    pipeline_surrogate,
    random_partition,
    solve_csg_bruteforce,
    solve_csg_dp,
)
from .harness import (
    DesignSpec,
    ExperimentConfig,
    NoiseSpec,
    RateFit,
    RunRecord,
    TruthSpec,
    UniverseSpec,
    emit_outputs,
    load_runs_csv,
    preset,
    rate_fit,
    regime_report,
    run_experiment,
)

__version__ = "0.1.0"
