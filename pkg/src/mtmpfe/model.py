"""Domain types and configuration validation.

Units: time in months, volatility per square-root month, money in millions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union


class InvalidConfig(ValueError):
    """Raised with one message per offending field."""

    def __init__(self, violations: dict[str, str]):
        self.violations = dict(violations)
        msg = "; ".join(f"{k}: {v}" for k, v in self.violations.items())
        super().__init__(f"invalid configuration: {msg}")


class EvalMode(str, enum.Enum):
    """How segment probabilities are composed into a lifetime exceedance probability.

    PAPER_FACTORIZED composes scenario-level joint probabilities through
    products over marginals (an independence approximation).  EXACT_CONDITIONAL
    integrates the product of segment survivals over the exact value(s) on the
    MTM date(s), which is the model probability under the Markov property.
    """

    PAPER_FACTORIZED = "paper"
    EXACT_CONDITIONAL = "exact"

    @classmethod
    def parse(cls, value: Union[str, "EvalMode"]) -> "EvalMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "paper": cls.PAPER_FACTORIZED,
            "paper_factorized": cls.PAPER_FACTORIZED,
            "paperfactorized": cls.PAPER_FACTORIZED,
            "exact": cls.EXACT_CONDITIONAL,
            "exact_conditional": cls.EXACT_CONDITIONAL,
            "exactconditional": cls.EXACT_CONDITIONAL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidConfig({"mode": f"unknown evaluation mode {value!r}"}) from None


@dataclass(frozen=True)
class MarketModel:
    v0: float
    sigma: float
    maturity: int


@dataclass(frozen=True)
class CollateralAgreement:
    alpha: float
    beta: float
    c0: Optional[float] = None  # filled in by validate_config as beta * v0


@dataclass(frozen=True)
class RiskSpec:
    q: float


@dataclass(frozen=True)
class NumericsSpec:
    quad_rel_tol: float = 1e-8
    quad_trunc_sds: float = 8.0
    root_abs_tol: float = 1e-5


@dataclass(frozen=True)
class Config:
    """A validated market/collateral/risk/numerics bundle.  Build with validate_config."""

    market: MarketModel
    collateral: CollateralAgreement
    risk: RiskSpec
    numerics: NumericsSpec = field(default_factory=NumericsSpec)

    # Shorthands used throughout the evaluators.
    @property
    def v0(self) -> float:
        return self.market.v0

    @property
    def sigma(self) -> float:
        return self.market.sigma

    @property
    def maturity(self) -> int:
        return self.market.maturity

    @property
    def alpha(self) -> float:
        return self.collateral.alpha

    @property
    def beta(self) -> float:
        return self.collateral.beta

    @property
    def c0(self) -> float:
        return self.collateral.c0

    @property
    def trigger(self) -> float:
        """Margin-call trigger level alpha * C0 on the first MTM date."""
        return self.collateral.alpha * self.collateral.c0

    @property
    def q(self) -> float:
        return self.risk.q


def _finite(x) -> bool:
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def validate_config(
    market: MarketModel,
    collateral: CollateralAgreement,
    risk: RiskSpec,
    numerics: Optional[NumericsSpec] = None,
) -> Config:
    """Check every field and return a Config with ``c0 = beta * v0`` filled in.

    Raises InvalidConfig listing all violations at once.  Re-validating the
    parts of a returned Config yields an equal Config.
    """
    numerics = numerics or NumericsSpec()
    bad: dict[str, str] = {}

    if not _finite(market.v0) or market.v0 < 0:
        bad["market.v0"] = f"must be a finite number >= 0, got {market.v0!r}"
    if not _finite(market.sigma) or market.sigma <= 0:
        bad["market.sigma"] = f"must be > 0, got {market.sigma!r}"
    if isinstance(market.maturity, bool) or not isinstance(market.maturity, int) or market.maturity < 2:
        bad["market.maturity"] = f"must be an integer number of months >= 2, got {market.maturity!r}"
    if not _finite(collateral.alpha) or collateral.alpha <= 0:
        bad["collateral.alpha"] = f"must be > 0, got {collateral.alpha!r}"
    if not _finite(collateral.beta) or collateral.beta <= 0:
        bad["collateral.beta"] = f"must be > 0, got {collateral.beta!r}"
    if not _finite(risk.q) or not 0 < risk.q < 1:
        bad["risk.q"] = f"must lie strictly between 0 and 1, got {risk.q!r}"
    for name in ("quad_rel_tol", "quad_trunc_sds", "root_abs_tol"):
        value = getattr(numerics, name)
        if not _finite(value) or value <= 0:
            bad[f"numerics.{name}"] = f"must be > 0, got {value!r}"

    if not bad:
        c0 = collateral.beta * market.v0
        if collateral.c0 is not None and collateral.c0 != c0:
            bad["collateral.c0"] = f"must equal beta * v0 = {c0!r}, got {collateral.c0!r}"
    if bad:
        raise InvalidConfig(bad)

    market = replace(market, v0=float(market.v0), sigma=float(market.sigma))
    collateral = replace(
        collateral, alpha=float(collateral.alpha), beta=float(collateral.beta), c0=c0
    )
    return Config(market, collateral, replace(risk, q=float(risk.q)), numerics)


def make_config(
    v0: float = 1.0,
    sigma: float = 0.2,
    maturity: int = 24,
    alpha: float = 0.9,
    beta: float = 1.1,
    q: float = 0.05,
    **numerics,
) -> Config:
    """Keyword shortcut for validate_config; defaults are the benchmark contract."""
    return validate_config(
        MarketModel(v0, sigma, maturity),
        CollateralAgreement(alpha, beta),
        RiskSpec(q),
        NumericsSpec(**numerics),
    )


# MTM policies -------------------------------------------------------------


@dataclass(frozen=True)
class Single:
    tau: int


@dataclass(frozen=True)
class TwiceSimultaneous:
    tau1: int
    tau2: int


@dataclass(frozen=True)
class TwiceSequentialFirstStage:
    tau1: int


MtmPolicy = Union[Single, TwiceSimultaneous, TwiceSequentialFirstStage]


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def check_policy(policy: MtmPolicy, maturity: int) -> None:
    """Raise InvalidConfig unless the MTM day(s) lie on the grid 1..T-1."""
    last = maturity - 1
    if isinstance(policy, Single):
        if not _is_int(policy.tau) or not 1 <= policy.tau <= last:
            raise InvalidConfig({"policy.tau": f"must be an integer in [1, {last}], got {policy.tau!r}"})
    elif isinstance(policy, TwiceSimultaneous):
        ok = _is_int(policy.tau1) and _is_int(policy.tau2) and 1 <= policy.tau1 < policy.tau2 <= last
        if not ok:
            raise InvalidConfig({
                "policy": f"need integers 1 <= tau1 < tau2 <= {last}, got ({policy.tau1!r}, {policy.tau2!r})"
            })
    elif isinstance(policy, TwiceSequentialFirstStage):
        if not _is_int(policy.tau1) or not 1 <= policy.tau1 <= last - 1:
            raise InvalidConfig({"policy.tau1": f"must be an integer in [1, {last - 1}], got {policy.tau1!r}"})
    else:
        raise InvalidConfig({"policy": f"unknown policy type {type(policy).__name__}"})


# Results ------------------------------------------------------------------


@dataclass(frozen=True)
class SequentialNode:
    x: float            # contract value observed on the first MTM day
    y_a: float          # PFE of the segment before the first MTM day
    tau2_star: int      # optimal second MTM month
    y_b_star: float     # optimal PFE after the first MTM day


@dataclass(frozen=True)
class SequentialPolicy:
    tau1: int
    nodes: tuple[SequentialNode, ...]

    def tau2_for(self, x: float) -> int:
        """Second MTM month for an observed first-day value (nearest tabulated node)."""
        xs = [n.x for n in self.nodes]
        i = min(range(len(xs)), key=lambda k: (abs(xs[k] - x), k))
        return self.nodes[i].tau2_star


@dataclass(frozen=True)
class PfeResult:
    """Optimal MTM day(s) and the PFE they achieve.

    ``achieved_q`` is the composed exceedance probability at ``pfe``; it is
    None for objectives that are expectations of conditional PFEs rather than
    a single quantile (sequential policies, scenario-averaged simultaneous).
    ``curve`` holds one row per candidate policy for reporting.
    """

    times: tuple[int, ...]
    pfe: float
    achieved_q: Optional[float]
    mode: EvalMode
    curve: tuple[dict, ...] = ()
    policy: Optional[SequentialPolicy] = None
