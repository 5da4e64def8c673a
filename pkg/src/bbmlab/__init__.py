"""Barrier-avoidance probabilities of branching Brownian motion.

Three independent routes to the same number: direct particle simulation,
finite-difference evolution of the associated semilinear heat equation, and
a closed-form/shooting solution of the stationary equation. The package
exists to cross-validate them against each other at desk scale.
"""
from .offspring import (
    Criticality,
    NegativeCoefficient,
    NoConvergence,
    NotDecomposable,
    OffspringError,
    OffspringPolynomial,
    ReactionPolynomial,
    Regime,
    SumNotOne,
    classify,
    decompose_reaction,
    evaluate,
    extinction_probability,
    mean_offspring,
    recompose,
    validate,
)
from .bbm import (
    CapPollutionWarning,
    EstimateWithCI,
    ModelSpec,
    ReplicateBatch,
    SimConfig,
    SimOutcome,
    Tag,
    estimate_p,
    estimate_q,
    estimate_r,
    estimate_s,
    run_replicates,
    simulate_replicate,
)
from .pde import (
    EvolveSpec,
    Field,
    Grid1D,
    Instability,
    SteadyState,
    default_domain_length,
    evolve,
    residual,
    stable_dt_bound,
    steady_state,
    step,
)
from .stationary import (
    BracketFailure,
    ClosedForm,
    LeastSolutionReport,
    ResidualTooLarge,
    ShootingResult,
    closed_form,
    least_solution_check,
    shoot,
    verify_closed_form,
)

__version__ = "0.1.0"
