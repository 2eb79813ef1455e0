"""Numerical laboratory for open-loop vs closed-loop stochastic control values.

Simulates controlled path-dependent SDEs under open-loop (noise-reading),
closed-loop (state-reading), and feedback policies; probes the value gap of
the fractional-increment drift counterexample; and cross-checks the regimes
where the two values coincide (measure-change reweighting, dynamic-programming
PDE benchmarks).
"""

__version__ = "0.1.0"

from .engine import (
    ActionInterval,
    ActionPoints,
    ControlProblem,
    EngineError,
    Policy,
    PolicyKind,
    SimulatedSolution,
    payoff,
    simulate,
    simulate_augmented,
)
from .girsanov import (
    GirsanovWeight,
    LambdaSpec,
    estimate_quadratic_variation,
    piecewise_constant_projection,
    recover_brownian,
    reweighted_value,
    stochastic_exponential,
)
from .hjb import HjbGrid, HjbSolution, StateProblem, extract_policy, hamiltonian
from .hjb import solve as hjb_solve
from .mc import (
    EnvelopeResult,
    PolicyFamily,
    ValueEstimate,
    estimate_value,
    ks_uniformity_test,
    value_envelope,
)
from .paths import (
    BrownianPath,
    RngStream,
    SamplePath,
    TimeGrid,
    ValidationError,
    increment_quotient,
    make_tsirelson_grid,
    sample_brownian,
)
from .tsirelson import (
    E_k_indicator,
    RelaxedPayoffConfig,
    TsirelsonDrift,
    alpha_star,
    calibrate_epsilon,
    closed_loop_tsirelson_policy,
    consistency_check_ank,
    extend_alpha_k,
    fractional_uniformity_samples,
    make_tsirelson_problem,
    membership_integral,
    mu,
    open_loop_probe_family,
    relaxed_g,
    theta,
)

__all__ = [
    "ActionInterval",
    "ActionPoints",
    "BrownianPath",
    "ControlProblem",
    "E_k_indicator",
    "EngineError",
    "EnvelopeResult",
    "GirsanovWeight",
    "HjbGrid",
    "HjbSolution",
    "LambdaSpec",
    "Policy",
    "PolicyFamily",
    "PolicyKind",
    "RelaxedPayoffConfig",
    "RngStream",
    "SamplePath",
    "SimulatedSolution",
    "StateProblem",
    "TimeGrid",
    "TsirelsonDrift",
    "ValidationError",
    "ValueEstimate",
    "alpha_star",
    "calibrate_epsilon",
    "closed_loop_tsirelson_policy",
    "consistency_check_ank",
    "estimate_quadratic_variation",
    "estimate_value",
    "extend_alpha_k",
    "extract_policy",
    "fractional_uniformity_samples",
    "hamiltonian",
    "hjb_solve",
    "increment_quotient",
    "ks_uniformity_test",
    "make_tsirelson_grid",
    "make_tsirelson_problem",
    "membership_integral",
    "mu",
    "open_loop_probe_family",
    "payoff",
    "piecewise_constant_projection",
    "recover_brownian",
    "relaxed_g",
    "reweighted_value",
    "sample_brownian",
    "simulate",
    "simulate_augmented",
    "stochastic_exponential",
    "theta",
    "value_envelope",
    "__version__",
]
