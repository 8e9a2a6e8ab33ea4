"""Numerical laboratory for the infrared-cutoff KPZ equation.

Spectral solver for h_t = Lap(h) - eps*h + lam*V(grad h) + g on the periodic
box, the stochastic-control (HJB) representation of its solutions, and the
heat-semigroup quasi-norm toolkit used to bound them.
"""

from .rates import (
    DepositionRate,
    ConvexConjugate,
    AssumptionReport,
    quadratic_rate,
    kpz_sqrt_rate,
    power_rate,
    tabulated_rate,
    custom_rate,
    rate_from_spec,
    regularize,
    conjugate,
    scaled_conjugate,
    conjugate_lower_bound,
    optimal_feedback,
    check_assumptions,
)

from .fields import (
    Grid,
    ScalarField,
    TimeField,
    gradient,
    gradient_magnitude,
    cutoff_data,
    bump_field,
    constant_field,
    sample_field,
    save_field,
    load_field,
    export_csv,
)
from .noise import NoiseSpec, gen_noise
from .solver import (
    BlowUpError,
    CflViolationError,
    ComparisonReport,
    CutoffParams,
    SolveResult,
    cole_hopf_solve,
    comparison_check,
    heat_semigroup,
    solve_kpz,
    solve_linear,
)
from .norms import (
    QuasiNormProfile,
    ProfilePair,
    StarConfig,
    exponential_profile,
    polynomial_profile,
    profile_from_spec,
    exponential_pair,
    polynomial_pair,
    star,
    sharp,
    locsup,
    locsup_time,
    hP_norm,
    hP_time_norm,
    w_norm,
    w_time_norm,
    phi_beta_kernel,
    kernel_domination_check,
    truncated_tail_check,
    growth_condition_check,
)
from .control import (
    ZeroStrategy,
    ConstantStrategy,
    OpenLoopStrategy,
    FeedbackStrategy,
    InfeasibleControlError,
    McEstimate,
    PathEnsemble,
    TailReport,
    TermBoundsReport,
    simulate_paths,
    cost_functional,
    value_from_feedback,
    tail_probability,
    term_bounds_check,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    VerdictRow,
    CampaignResult,
    EXPERIMENT_NAMES,
    run_experiment,
    run_campaign,
    run_theorem2,
    run_gradient_bound,
    run_convergence,
    run_hjb_suite,
    run_norm_lemmas,
    run_norm_consistency,
    run_smoke2d,
    verdict_csv_text,
    summary_dict,
    write_results,
)

__version__ = "0.1.0"
