"""Single mark-to-market policy: exceedance probability, PFE inversion, timing scan.

The lifetime exposure under one MTM day ``tau`` is
``max(V_A - C0, V_B - C_tau)``, where ``V_A`` and ``V_B`` are the path maxima
before and after ``tau``, and ``C_tau`` is ``beta * V_tau`` after a margin
call (``V_tau > alpha * C0``) and ``C0`` otherwise.

All evaluators take either a validated :class:`~mtmpfe.model.Config` or a
:class:`Contract`.  The latter also describes restarted contracts (any start
value, any posted collateral, any horizon), which the twice-MTM policies
need for their second stage.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .model import Config, EvalMode, NumericsSpec, PfeResult
from .numerics import (
    bisect_decreasing,
    bisect_decreasing_batch,
    integrate_batch,
    normal_cdf,
    normal_pdf,
)
from .stochastics import (
    bridge_exceed,
    joint_max_below_and_end_above,
    joint_max_below_and_end_below,
    running_max_exceed_prob,
)

TINY = 1e-300


@dataclass(frozen=True)
class Contract:
    """Value-process and collateral terms seen from the contract's own start date."""

    v0: float
    c0: float
    sigma: float
    horizon: float
    alpha: float
    beta: float
    numerics: NumericsSpec = NumericsSpec()

    @classmethod
    def from_config(cls, cfg: Config) -> "Contract":
        return cls(cfg.v0, cfg.c0, cfg.sigma, cfg.maturity, cfg.alpha, cfg.beta, cfg.numerics)

    @property
    def trigger(self) -> float:
        return self.alpha * self.c0

    def restart(self, v0: float, c0: float, horizon: float) -> "Contract":
        return Contract(v0, c0, self.sigma, horizon, self.alpha, self.beta, self.numerics)


ContractLike = Union[Config, Contract]


def as_contract(cfg: ContractLike) -> Contract:
    return cfg if isinstance(cfg, Contract) else Contract.from_config(cfg)


def _tail_level(cfg: ContractLike, q: Optional[float]) -> float:
    if q is not None:
        return float(q)
    if isinstance(cfg, Contract):
        raise ValueError("a bare Contract carries no tail level; pass q explicitly")
    return cfg.q


def _check_tau(k: Contract, tau) -> None:
    tau = np.asarray(tau)
    if np.any(tau <= 0) or np.any(tau >= k.horizon):
        raise ValueError(f"MTM day must lie strictly inside (0, {k.horizon}), got {tau}")


# Batched kernels ----------------------------------------------------------
#
# The *_batch functions broadcast start value, collateral, MTM offset and
# risk appetite against each other and return flat arrays; sigma, alpha,
# beta and the numerics are shared across the batch.


def _post_ok_batch(k: Contract, v0, c0, tau, y, horizon):
    """Joint probabilities that the post-MTM maximum stays below the appetite.

    Returns ``(no_call, call)``: the parts with ``V_tau <= alpha*c0`` (collateral
    stays ``c0``) and with ``V_tau > alpha*c0`` (collateral reset to ``beta*V_tau``).
    """
    nm = k.numerics
    sd = k.sigma * np.sqrt(tau)
    trig = k.alpha * c0
    lo = v0 - nm.quad_trunc_sds * sd
    hi = v0 + nm.quad_trunc_sds * sd
    rest = horizon - tau
    beta = k.beta
    sigma = k.sigma
    kink_call = -y / (beta - 1.0) if beta != 1.0 else np.full_like(y, np.nan)

    def f(o, x):
        no_call = x <= trig[o]
        barrier = np.where(no_call, c0[o], beta * x) + y[o]
        surv = (1.0 - running_max_exceed_prob(x, barrier, rest[o], sigma)) * normal_pdf(x, v0[o], sd[o])
        return np.stack([np.where(no_call, surv, 0.0), np.where(no_call, 0.0, surv)])

    bps = np.stack([trig, c0 + y, kink_call], axis=1)
    out = integrate_batch(f, lo, hi, nm.quad_rel_tol, 1e-15, bps)
    return out[0], out[1]


def exceed_prob_batch(k: Contract, v0, c0, tau, y, mode: EvalMode, horizon=None) -> np.ndarray:
    """Vectorized P(E > y) for a batch of contracts sharing sigma, alpha and beta."""
    horizon = k.horizon if horizon is None else horizon
    v0, c0, tau, y, horizon = (
        np.asarray(v, dtype=float).ravel()
        for v in np.broadcast_arrays(
            np.asarray(v0, float), np.asarray(c0, float), np.asarray(tau, float),
            np.asarray(y, float), np.asarray(horizon, float),
        )
    )
    sigma = k.sigma
    sd = sigma * np.sqrt(tau)
    trig = k.alpha * c0
    barrier = y + c0

    if mode is EvalMode.PAPER_FACTORIZED:
        p_no = normal_cdf((trig - v0) / sd)
        p_call = normal_cdf((v0 - trig) / sd)
        pre_no = joint_max_below_and_end_below(v0, barrier, trig, tau, sigma)
        pre_call = joint_max_below_and_end_above(v0, barrier, trig, tau, sigma)
        post_no, post_call = _post_ok_batch(k, v0, c0, tau, y, horizon)
        t_no = np.where(p_no > TINY, pre_no * post_no / np.maximum(p_no, TINY), 0.0)
        t_call = np.where(p_call > TINY, pre_call * post_call / np.maximum(p_call, TINY), 0.0)
        q = 1.0 - t_no - t_call
    else:
        nm = k.numerics
        lo = v0 - nm.quad_trunc_sds * sd
        hi = v0 + nm.quad_trunc_sds * sd
        rest = horizon - tau
        beta = k.beta
        kink_call = -y / (beta - 1.0) if beta != 1.0 else np.full_like(y, np.nan)

        def f(o, x):
            coll = np.where(x <= trig[o], c0[o], beta * x)
            pre = 1.0 - bridge_exceed(v0[o], x, barrier[o], tau[o], sigma)
            post = 1.0 - running_max_exceed_prob(x, coll + y[o], rest[o], sigma)
            return pre * post * normal_pdf(x, v0[o], sd[o])

        bps = np.stack([trig, barrier, kink_call], axis=1)
        q = 1.0 - integrate_batch(f, lo, hi, nm.quad_rel_tol, 1e-15, bps)
    return np.clip(q, 0.0, 1.0)


def pfe_batch(k: Contract, v0, c0, tau, q: float, mode: EvalMode, tol=None, horizon=None):
    """Vectorized PFE: the smallest y >= 0 with P(E > y) <= q, per contract."""
    horizon = k.horizon if horizon is None else horizon
    v0, c0, tau, horizon = (
        np.asarray(v, dtype=float).ravel()
        for v in np.broadcast_arrays(
            np.asarray(v0, float), np.asarray(c0, float), np.asarray(tau, float), np.asarray(horizon, float)
        )
    )
    tol = k.numerics.root_abs_tol if tol is None else tol
    seed = np.maximum(v0 - c0, 0.0) + 2.0 * k.sigma * np.sqrt(horizon)

    def g(y):
        return exceed_prob_batch(k, v0, c0, tau, y, mode, horizon)

    return bisect_decreasing_batch(g, q, np.zeros_like(v0), seed, tol)


def best_timing_batch(k: Contract, v0, c0, horizon: int, q: float, mode: EvalMode, tol=None):
    """Optimal single MTM offset for each restarted contract sharing ``horizon``.

    Returns ``(tau_star, pfe_star)`` arrays; ties go to the earliest offset.
    """
    v0 = np.asarray(v0, dtype=float).ravel()
    c0 = np.broadcast_to(np.asarray(c0, dtype=float), v0.shape).ravel()
    taus = np.arange(1, int(horizon))
    vv = np.repeat(v0, len(taus))
    cc = np.repeat(c0, len(taus))
    tt = np.tile(taus, len(v0))
    y = pfe_batch(k, vv, cc, tt, q, mode, tol, horizon).reshape(len(v0), len(taus))
    best = np.argmin(y, axis=1)
    return taus[best], y[np.arange(len(v0)), best]


# Scalar API ---------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSplit:
    """The five component probabilities of the single-MTM decomposition."""

    p_no_call: float
    p_call: float
    pre_ok_no_call: float
    post_ok_no_call: float
    pre_ok_call: float
    post_ok_call: float


def prob_no_call(cfg: ContractLike, tau: int) -> float:
    k = as_contract(cfg)
    _check_tau(k, tau)
    return float(normal_cdf((k.trigger - k.v0) / (k.sigma * np.sqrt(tau))))


def prob_pre_ok_no_call(cfg: ContractLike, tau: int, y: float) -> float:
    k = as_contract(cfg)
    _check_tau(k, tau)
    return joint_max_below_and_end_below(k.v0, y + k.c0, k.trigger, tau, k.sigma)


def prob_pre_ok_call(cfg: ContractLike, tau: int, y: float) -> float:
    k = as_contract(cfg)
    _check_tau(k, tau)
    return joint_max_below_and_end_above(k.v0, y + k.c0, k.trigger, tau, k.sigma)


def _post(cfg, tau, y):
    k = as_contract(cfg)
    _check_tau(k, tau)
    no, call = _post_ok_batch(
        k, np.array([k.v0]), np.array([k.c0]), np.array([float(tau)]), np.array([float(y)]),
        np.array([float(k.horizon)]),
    )
    return float(no[0]), float(call[0])


def prob_post_ok_no_call(cfg: ContractLike, tau: int, y: float) -> float:
    return _post(cfg, tau, y)[0]


def prob_post_ok_call(cfg: ContractLike, tau: int, y: float) -> float:
    return _post(cfg, tau, y)[1]


def scenario_split(cfg: ContractLike, tau: int, y: float) -> ScenarioSplit:
    k = as_contract(cfg)
    p_no = prob_no_call(k, tau)
    post_no, post_call = _post(k, tau, y)
    return ScenarioSplit(
        p_no_call=p_no,
        p_call=float(normal_cdf((k.v0 - k.trigger) / (k.sigma * np.sqrt(tau)))),
        pre_ok_no_call=prob_pre_ok_no_call(k, tau, y),
        post_ok_no_call=post_no,
        pre_ok_call=prob_pre_ok_call(k, tau, y),
        post_ok_call=post_call,
    )


def exceed_prob_single(cfg: ContractLike, tau: int, y: float, mode=EvalMode.PAPER_FACTORIZED) -> float:
    """Probability that the lifetime maximum exposure exceeds ``y`` with MTM at ``tau``."""
    k = as_contract(cfg)
    _check_tau(k, tau)
    mode = EvalMode.parse(mode)
    return float(exceed_prob_batch(k, k.v0, k.c0, tau, y, mode)[0])


def pfe_single(cfg: ContractLike, tau: int, mode=EvalMode.PAPER_FACTORIZED, q: Optional[float] = None) -> float:
    """PFE at MTM day ``tau``: the smallest y >= 0 whose exceedance probability is q."""
    k = as_contract(cfg)
    _check_tau(k, tau)
    mode = EvalMode.parse(mode)
    q = _tail_level(cfg, q)

    def g(y):
        return exceed_prob_single(k, tau, y, mode)

    if g(0.0) <= q:
        return 0.0
    seed = max(k.v0 - k.c0, 0.0) + 2.0 * k.sigma * np.sqrt(k.horizon)
    return bisect_decreasing(g, q, 0.0, seed, k.numerics.root_abs_tol)


def optimize_single(
    cfg: ContractLike,
    mode=EvalMode.PAPER_FACTORIZED,
    q: Optional[float] = None,
    taus: Optional[Iterable[int]] = None,
) -> PfeResult:
    """Scan every MTM month and return the one with the smallest PFE.

    The full (tau, pfe, achieved_q) curve is attached for reporting; ties go
    to the earliest month.
    """
    k = as_contract(cfg)
    mode = EvalMode.parse(mode)
    q = _tail_level(cfg, q)
    taus = np.arange(1, int(k.horizon)) if taus is None else np.asarray(list(taus), dtype=int)
    for t in taus:
        _check_tau(k, t)
    pfes = pfe_batch(k, k.v0, k.c0, taus, q, mode)
    achieved = exceed_prob_batch(k, k.v0, k.c0, taus, pfes, mode)
    best = int(np.argmin(pfes))
    curve = tuple(
        {"tau": int(t), "pfe": float(p), "achieved_q": float(a)}
        for t, p, a in zip(taus, pfes, achieved)
    )
    return PfeResult(
        times=(int(taus[best]),),
        pfe=float(pfes[best]),
        achieved_q=float(achieved[best]),
        mode=mode,
        curve=curve,
    )
