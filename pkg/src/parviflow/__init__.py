"""Particle-based samplers for measure-preserving dynamics, their
deterministic flow equivalents, and a grid-based density-evolution oracle."""

from .config import (
    PRESETS,
    ExperimentConfig,
    build_ensemble,
    build_sampler_config,
    build_target,
    load_preset,
    parse_config,
)
from .diagnostics import (
    MetricReport,
    compute_metrics,
    mmd,
    moment_summary,
    reference_sample,
    w2_exact,
)
from .errors import ConfigError, ConfigurationError, GridError, StepRejected
from .grid_oracle import (
    GridDensity,
    compare_lemma1,
    discretize,
    discretize_target,
    evolve_continuity,
    evolve_fokker_planck,
    kl_between,
    kl_conservation_check,
    kl_curve,
    kl_to,
)
from .recipe import (
    DynamicsSpec,
    DynamicsType,
    RegularityReport,
    SmoothFunction,
    barbour_apply,
    drift_fgh,
    drift_v,
    drift_w,
    dynamics_type,
    make_constant_spec,
    make_hmc_spec,
    make_ld_spec,
    make_sghmc_spec,
    matrix_divergence,
    validate_regularity,
)
from .samplers import (
    METHODS,
    ParticleEnsemble,
    RunTrace,
    SamplerConfig,
    init_ensemble,
    run,
    step_blob,
    step_psghmc_det,
    step_psghmc_fgh,
    step_sghmc,
)
from .smoothing import KernelConfig, blob_neg_grad_log_q, kernel_matrix, select_bandwidth
from .targets import (
    NoisyGradient,
    TargetModel,
    make_gaussian,
    make_synthetic_2d,
    make_target,
    noisy_grad,
    with_gaussian_momentum,
)
from .validation import run_validation

__version__ = "0.1.0"
