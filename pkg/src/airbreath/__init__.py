"""Feature-compression breathing for over-the-air multi-view classification.

The package simulates a fleet of sensors that project their views onto a
shared low-dimensional subspace, spread the result with a pseudo-noise
sequence, and transmit simultaneously so the channel itself averages them.
Shrinking the projection depth frees chips for spreading; the breathing
optimizer picks the depth that maximizes a closed-form discriminant-gain
surrogate instead of brute-force calibration.
"""

from .gmm import (
    DgCurve,
    GmmModel,
    LabelPair,
    ModelError,
    accuracy_lower_bound,
    build_default_gmm,
    closest_pair,
    eigen_dg,
    mahalanobis_classify,
    mahalanobis_scores,
    model_from_json,
    model_to_json,
    pairwise_dg,
    q_function,
    sample_views,
)
from .phy import (
    ChannelRound,
    NormalizationStats,
    PowerPolicy,
    PowerPolicyError,
    activation_probability,
    aircomp_round,
    compress,
    denormalize_receive,
    despread,
    despread_noise_variance,
    draw_pn,
    draw_round,
    fit_normalization,
    normalize,
    reconstruct,
    solve_threshold,
    spread,
)
from .dg import (
    BreathingDecision,
    DgIncrement,
    SurrogateError,
    SurrogateParams,
    brute_force_depth,
    curve_from_csv,
    curve_to_csv,
    incremental_dg_decomposition,
    optimal_breathing_depth,
    phi_lower_bound,
    phi_tilde,
    psi_integral,
    receive_dg_diagonal,
    receive_dg_general,
    relaxed_weight,
    surrogate_params_for,
)
from .generic import (
    ClassifierOracle,
    DgMapError,
    DgTable,
    DgTables,
    GmmOracle,
    ImportanceProfile,
    accuracy_to_dg,
    combined_surrogate,
    estimate_compression_dg_curve,
    estimate_spread_dg_curve,
    feature_importance,
    inverse_q,
    isotonic_nondecreasing,
    optimal_depth_generic,
    spread_gain_grid,
)
from .harness import (
    AccuracyReport,
    ConfigError,
    ExperimentConfig,
    PointEngine,
    RoundResult,
    SchemeSpec,
    SweepResult,
    load_config,
    run_round,
    run_sweep,
    sir_to_gamma,
    tradeoff_scan,
    wilson_interval,
    write_results_csv,
)
from . import rng

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
