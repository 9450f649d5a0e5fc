"""Finite-support semiparametric efficiency toolkit.

Laws on product supports, conditional-expectation operators, local
identification diagnostics, efficient influence functions and bounds for
three causal models, estimators, and a specification test.
"""

from .causal import (
    LongTermSpec,
    NegControlSpec,
    NpivSpec,
    UnconfoundedSpec,
    gen_long_term,
    gen_long_term_heteroskedastic,
    gen_negative_control,
    gen_npiv,
    gen_unconfounded,
    random_unconfounded_spec,
    solve_bridge_lt,
    solve_bridge_nc,
    solve_bridge_npiv,
    structural_from_observable_lt,
    structural_from_observable_nc,
    structural_from_observable_uc,
    uc_observable_law,
)
from .dataset import Dataset, sample
from .efficiency import lt_bound_decomposition, lt_eif, nc_eif, uc_ate_eif
from .errors import MomentLabError
from .estimators import (
    EstimateResult,
    estimate_ate_uc,
    lt_estimators,
    nc_estimators,
    npiv_asd,
)
from .inference import (
    HausmanResult,
    MonteCarloSummary,
    PowerCurve,
    hausman,
    monte_carlo,
    power_curve,
)
from .law import Axis, CellFunction, JointLaw, ScoreFunction, empirical_law
from .operators import (
    CondExpOperator,
    OperatorDiagnostics,
    build_operator,
    diagnose_identification,
)

__all__ = [
    "Axis",
    "CellFunction",
    "CondExpOperator",
    "Dataset",
    "EstimateResult",
    "HausmanResult",
    "JointLaw",
    "LongTermSpec",
    "MomentLabError",
    "MonteCarloSummary",
    "NegControlSpec",
    "NpivSpec",
    "OperatorDiagnostics",
    "PowerCurve",
    "ScoreFunction",
    "UnconfoundedSpec",
    "build_operator",
    "diagnose_identification",
    "empirical_law",
    "estimate_ate_uc",
    "gen_long_term",
    "gen_long_term_heteroskedastic",
    "gen_negative_control",
    "gen_npiv",
    "gen_unconfounded",
    "hausman",
    "lt_bound_decomposition",
    "lt_eif",
    "lt_estimators",
    "monte_carlo",
    "nc_eif",
    "nc_estimators",
    "npiv_asd",
    "power_curve",
    "random_unconfounded_spec",
    "sample",
    "solve_bridge_lt",
    "solve_bridge_nc",
    "solve_bridge_npiv",
    "structural_from_observable_lt",
    "structural_from_observable_nc",
    "structural_from_observable_uc",
    "uc_ate_eif",
    "uc_observable_law",
]
