"""Computable convergence bounds for Markov chains, with simulation checks.

Modules: chain (finite kernels, minorization/drift certificates, exact
propagation), bounds (explicit homogeneous and time-varying bounds),
coupling (bell-variable pair simulation and exact identities), ar
(autoregression with contraction coupling), annealing (random-walk
Metropolis with certified drift and logarithmic cooling), verify
(randomized certified-chain suites), cli (command-line front end).
"""

from .chain import (
    DegenerateMinorizationError,
    DriftCertificate,
    DriftResult,
    DriftViolationError,
    FiniteKernel,
    FiniteSignedMeasure,
    MinorizationCertificate,
    ProductKernel,
    ReducibleChainError,
    WeightFunction,
    build_product_pstar,
    delta_measure,
    extract_minorization,
    f_norm,
    pair_mean_weight,
    propagate,
    stationary,
    sup_pstar_weight,
    tv_norm,
    uniform_measure,
    unit_weight,
    verify_drift,
)
from .bounds import (
    BoundCurve,
    HomogeneousBoundInput,
    InhomogeneousSchedule,
    RateBound,
    SConditionInput,
    Theorem5Result,
    bound_curve_homog,
    bound_curve_inhom,
    bound_f_homog,
    bound_inhom,
    bound_tv_homog,
    derive_S_params,
    extremal_subset_product,
    optimize_j,
    optimize_j_inhom,
    rate_bound,
    theorem5_bounds,
)
from .coupling import (
    CoupledState,
    CouplingConfig,
    CouplingRunResult,
    MarginalReport,
    coupled_step,
    exact_uncoupled_mass,
    marginal_consistency_check,
    run_coupling,
    weighted_identity_check,
    weighted_identity_tables,
)
from .ar import (
    ARModel,
    NoiseSpec,
    ar_coupled_step,
    discretize_ar,
    eps_delta,
    gaussian_noise,
    linear_map,
    model_from_names,
    prop6_bound,
    prop6_curve,
    run_ar_coupling,
    simulate_ar_paths,
    tanh_map,
    threshold_gap_lower_bound,
)
from .annealing import (
    AnnealingResult,
    CoolingSchedule,
    DriftConstants,
    MinorizationResult,
    ObjectiveFunction,
    PiGamma,
    ProposalDensity,
    ScheduleDerivation,
    accept_prob,
    apply_rwmh_to_density,
    cooling_gamma,
    derive_drift_constants,
    derive_schedule,
    doublewell_objective,
    gaussian_proposal,
    kv_ratio,
    kv_ratio_grid,
    laplace_Z,
    minorization_gamma,
    objective_by_name,
    phi_gamma_s,
    pi_gamma,
    pi_shift_tv_bound,
    quadratic_objective,
    r_gamma_s,
    run_annealing,
    rwmh_step,
    schedule_eps_sums,
    verify_drift_inequalities,
)
from .verify import (
    CheckResult,
    SuiteInstance,
    build_suite,
    check_coupling,
    check_domination,
    check_identity,
    check_rate,
    check_s_consistency,
    run_verification,
)

__version__ = "0.1.0"
