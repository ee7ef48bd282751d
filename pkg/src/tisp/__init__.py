"""Sparse linear regression by iterative thresholding.

A family of scalar thresholding rules, the penalties they induce, a
fixed-point solver for the thresholding equation, brute-force and
coordinate-descent oracles for certification, and synthetic-data
experiment drivers.
"""

from .thresholding import (
    KINDS,
    RuleParseError,
    ThresholdRule,
    apply,
    apply_vec,
    estimate_contraction,
    inverse,
    parse_rule,
    rule_catalog,
    verify_axioms,
)
from .penalty import (
    PenaltySpec,
    energy,
    penalty_hard,
    penalty_l0,
    penalty_l1,
    penalty_theta,
    penalty_theta_quadrature,
)
from .solver import (
    ConfigurationError,
    IterateTrace,
    LambdaSchedule,
    Problem,
    SolveResult,
    SolverConfig,
    SolverError,
    gaussian_starts,
    parse_schedule,
    scale_problem,
    solve,
    spectral_norm,
    stepsize_transform,
    t_max_estimate,
    theory_threshold,
    tisp_step,
    triangle_inequality_check,
)
from .oracle import (
    RegularityProbeConfig,
    check_theta_equation,
    coordinate_descent_local_min,
    l0_global_min,
    minimax_reference,
    probe_regularity,
    regularity_slack,
)
from .simulate import (
    ExperimentSpec,
    SpecError,
    error_metrics,
    gen_beta_star,
    gen_design,
    gen_response,
    run_decay_experiment,
    run_rate_experiment,
)

__version__ = "0.1.0"
