"""Certified low-dimensional abstractions of interconnected linear stochastic systems.

The toolkit constructs quadratic closeness certificates between discrete-time
linear stochastic subsystems and reduced-order candidates, composes them over
a network through a small-gain test, evaluates closed-form probabilistic
deviation bounds, and validates everything by seeded Monte Carlo simulation.
"""

from .bounds import (
    BoundQuery,
    BoundResult,
    BoxSet,
    finite_horizon_bound,
    infinite_horizon_bound,
    inflate_set,
    psi_hat,
    safety_transfer,
)
from .errors import (
    DanglingInput,
    DimensionMismatch,
    DomainError,
    Infeasible,
    PolicyDimension,
    PreconditionViolated,
    RankDeficientWarning,
    SchemaError,
    SimcertError,
    SingularGramWarning,
    UnsupportedForm,
)
from .model import (
    Edge,
    InterconnectedSystem,
    LinearSubsystem,
    Topology,
    assemble_interconnection,
    validate_subsystem,
)
from .montecarlo import (
    DeviationSample,
    RunConfig,
    SupermartingaleCheck,
    ViolationEstimate,
    empirical_supermartingale_check,
    noise_stream,
    simulate_pair,
    step,
    violation_probability,
)
from .project import ProjectFile, RunDefaults, load_project, save_project
from .smallgain import (
    CompositionCertificate,
    GainDecomposition,
    build_gains,
    compose,
    find_mu,
    spectral_radius_test,
)
from .spsf import (
    AbstractionCandidate,
    AbstractionCertificate,
    ConditionReport,
    SpsfConstants,
    check_conditions,
    compute_Rtilde,
    derive_constants,
    evaluate_V,
    expected_V_next,
    interface,
    solve_structural,
    synthesize_MK,
)

__version__ = "0.1.0"
