"""Potential future exposure of a collateralized contract under MTM timing policies."""
from .model import (
    CollateralAgreement,
    Config,
    EvalMode,
    InvalidConfig,
    MarketModel,
    NumericsSpec,
    PfeResult,
    RiskSpec,
    SequentialNode,
    SequentialPolicy,
    Single,
    TwiceSequentialFirstStage,
    TwiceSimultaneous,
    make_config,
    validate_config,
)
from .numerics import BracketFailure, ConvergenceFailure
from .single_mtm import exceed_prob_single, optimize_single, pfe_single
from .twice_mtm import (
    exceed_prob_twice,
    expected_pfe_sequential,
    optimize_sequential,
    optimize_simultaneous,
    pfe_twice,
)
from .mc_oracle import McEstimate, McSpec, estimate_component, estimate_exceed_prob, estimate_pfe

__version__ = "0.1.0"
