"""Two mark-to-market days: simultaneous and sequential timing decisions.

Collateral after the MTM days ``tau1 < tau2`` (values ``V1``, ``V2``):

* ``C1 = beta*V1`` if ``V1 > alpha*C0`` else ``C0``;
* ``C2 = beta*V2`` if ``V2 > alpha*C1`` else ``C1``.

Lifetime exposure is the largest of ``V_A - C0``, ``V_B - C1`` and
``V_C - C2`` over the segments ``[0, tau1]``, ``[tau1, tau2]``, ``[tau2, T]``.

Simultaneous timing fixes both days up front.  In exact mode the PFE is the
quantile of that exposure, computed by iterated quadrature over ``(V1, V2)``.
In paper mode it is the scenario-weighted PFE: for each first-day scenario
(call or no call) the exposure quantile conditional on that scenario is
found, composing the pre-segment probability with the restarted single-MTM
model, and the two quantiles are averaged with the scenario probabilities.

Sequential timing picks ``tau2`` after observing ``V1 = x``; the objective is
the expected value over ``x`` of ``max(y_A(x), y_B*(x))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    Config,
    EvalMode,
    InvalidConfig,
    PfeResult,
    SequentialNode,
    SequentialPolicy,
    TwiceSimultaneous,
    check_policy,
)
from .numerics import (
    bisect_decreasing,
    bisect_decreasing_batch,
    integrate,
    integrate_batch,
    normal_cdf,
    normal_pdf,
)
from .single_mtm import TINY, Contract, best_timing_batch, exceed_prob_batch
from .stochastics import (
    bridge_exceed,
    bridge_max_quantile,
    joint_max_below_and_end_above,
    joint_max_below_and_end_below,
    running_max_exceed_prob,
)


@dataclass(frozen=True)
class CollateralPath:
    c1: np.ndarray
    c2: np.ndarray


def collateral_path(cfg: Config, v1, v2) -> CollateralPath:
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    c1 = np.where(v1 > cfg.trigger, cfg.beta * v1, cfg.c0)
    c2 = np.where(v2 > cfg.alpha * c1, cfg.beta * v2, c1)
    return CollateralPath(c1, c2)


def _check_pair(cfg: Config, tau1: int, tau2: int) -> None:
    check_policy(TwiceSimultaneous(tau1, tau2), cfg.maturity)


def _kink(y, beta):
    # Where beta*x + y crosses x; NaN when the lines are parallel.
    return -y / (beta - 1.0) if beta != 1.0 else np.full_like(y, np.nan)


# Exact conditional composition ---------------------------------------------


def _exact_survival_batch(cfg: Config, tau1: int, tau2, y) -> np.ndarray:
    """P(E <= y) for pairs (tau1, tau2[i]) at appetites y[i], by iterated quadrature."""
    tau2, y = (np.asarray(v, dtype=float).ravel() for v in np.broadcast_arrays(tau2, y))
    nm = cfg.numerics
    sig, beta, alpha = cfg.sigma, cfg.beta, cfg.alpha
    T, v0, c0, trig = cfg.maturity, cfg.v0, cfg.c0, cfg.trigger
    sd1 = sig * np.sqrt(tau1)
    dt2 = tau2 - tau1
    sd2 = sig * np.sqrt(dt2)
    rest = T - tau2

    def outer(o, v1):
        pa = (1.0 - bridge_exceed(v0, v1, y[o] + c0, tau1, sig)) * normal_pdf(v1, v0, sd1)
        out = np.zeros_like(v1)
        need = pa > 0
        if not need.any():
            return out
        oo, xx = o[need], v1[need]
        c1 = np.where(xx > trig, beta * xx, c0)
        yy = y[oo]

        def inner(j, v2):
            i = oo[j]
            cc1 = c1[j]
            cc2 = np.where(v2 > alpha * cc1, beta * v2, cc1)
            pb = 1.0 - bridge_exceed(xx[j], v2, yy[j] + cc1, dt2[i], sig)
            pc = 1.0 - running_max_exceed_prob(v2, yy[j] + cc2, rest[i], sig)
            return pb * pc * normal_pdf(v2, xx[j], sd2[i])

        half = nm.quad_trunc_sds * sd2[oo]
        bps = np.stack([alpha * c1, yy + c1, _kink(yy, beta)], axis=1)
        out[need] = pa[need] * integrate_batch(inner, xx - half, xx + half, nm.quad_rel_tol, 1e-15, bps)
        return out

    n = len(y)
    lo = np.full(n, v0 - nm.quad_trunc_sds * sd1)
    hi = np.full(n, v0 + nm.quad_trunc_sds * sd1)
    bps = np.stack([np.full(n, trig), y + c0], axis=1)
    return integrate_batch(outer, lo, hi, nm.quad_rel_tol, 1e-14, bps)


# Scenario-factorized composition -------------------------------------------


def _paper_survival_batch(cfg: Config, tau1: int, tau2, y) -> np.ndarray:
    """Four-scenario product-over-marginal composition of the segment probabilities.

    For each margin-call scenario S on (tau1, tau2) the joint probabilities
    P(A ok, S), P(B ok, S), P(C ok, S) are multiplied and divided by P(S)^2.
    """
    tau2, y = (np.asarray(v, dtype=float).ravel() for v in np.broadcast_arrays(tau2, y))
    nm = cfg.numerics
    sig, beta, alpha = cfg.sigma, cfg.beta, cfg.alpha
    T, v0, c0, trig = cfg.maturity, cfg.v0, cfg.c0, cfg.trigger
    sd1 = sig * np.sqrt(tau1)
    dt2 = tau2 - tau1
    sd2 = sig * np.sqrt(dt2)
    rest = T - tau2

    def outer(o, v1):
        # Rows: for second-day scenario s in (no call, call): P, A, B, C.
        c1 = np.where(v1 > trig, beta * v1, c0)
        yy = y[o]

        def inner(j, v2):
            i = o[j]
            cc1 = c1[j]
            call2 = v2 > alpha * cc1
            cc2 = np.where(call2, beta * v2, cc1)
            dens = normal_pdf(v2, v1[j], sd2[i])
            pb = (1.0 - bridge_exceed(v1[j], v2, yy[j] + cc1, dt2[i], sig)) * dens
            pc = (1.0 - running_max_exceed_prob(v2, yy[j] + cc2, rest[i], sig)) * dens
            z = np.zeros_like(v2)
            return np.stack([
                np.where(call2, z, dens), np.where(call2, z, pb), np.where(call2, z, pc),
                np.where(call2, dens, z), np.where(call2, pb, z), np.where(call2, pc, z),
            ])

        half = nm.quad_trunc_sds * sd2[o]
        bps = np.stack([alpha * c1, yy + c1, _kink(yy, beta)], axis=1)
        got = integrate_batch(inner, v1 - half, v1 + half, nm.quad_rel_tol, 1e-15, bps)
        d1 = normal_pdf(v1, v0, sd1)
        pa = 1.0 - bridge_exceed(v0, v1, yy + c0, tau1, sig)
        rows = []
        for s in (0, 3):
            p, b, c = got[s], got[s + 1], got[s + 2]
            rows += [d1 * p, d1 * pa * p, d1 * b, d1 * c]
        return np.stack(rows)

    n = len(y)
    lo = np.full(n, v0 - nm.quad_trunc_sds * sd1)
    hi = np.full(n, v0 + nm.quad_trunc_sds * sd1)
    mid = np.full(n, min(max(trig, lo[0]), hi[0]))
    bp_lo = np.stack([y + c0], axis=1)
    below = integrate_batch(outer, lo, mid, nm.quad_rel_tol, 1e-15, bp_lo)
    above = integrate_batch(outer, mid, hi, nm.quad_rel_tol, 1e-15, bp_lo)
    surv = np.zeros(n)
    for part in (below, above):
        for s in (0, 4):
            p, a, b, c = part[s], part[s + 1], part[s + 2], part[s + 3]
            surv += np.where(p > TINY, a * b * c / np.maximum(p, TINY) ** 2, 0.0)
    return surv


def exceed_prob_twice(cfg: Config, tau1: int, tau2: int, y: float, mode=EvalMode.EXACT_CONDITIONAL) -> float:
    """P(E > y) for MTM days fixed at (tau1, tau2)."""
    _check_pair(cfg, tau1, tau2)
    mode = EvalMode.parse(mode)
    if mode is EvalMode.EXACT_CONDITIONAL:
        surv = _exact_survival_batch(cfg, tau1, [tau2], [y])
    else:
        surv = _paper_survival_batch(cfg, tau1, [tau2], [y])
    return float(np.clip(1.0 - surv[0], 0.0, 1.0))


# Scenario-weighted PFE (paper mode, simultaneous) ---------------------------


def _scenario_exceed_batch(cfg: Config, tau1: int, tau2, y, call) -> np.ndarray:
    """P(E > y | first-day scenario) for each (tau2[i], y[i], call[i]).

    The pre-segment joint probability is closed form; the post-segment part
    averages the restarted single-MTM survival over the scenario's values of V1.
    """
    tau2, y, call = (np.asarray(v).ravel() for v in np.broadcast_arrays(tau2, y, call))
    tau2 = tau2.astype(float)
    y = y.astype(float)
    call = call.astype(bool)
    nm = cfg.numerics
    sig, beta = cfg.sigma, cfg.beta
    v0, c0, trig = cfg.v0, cfg.c0, cfg.trigger
    sd1 = sig * np.sqrt(tau1)
    k = Contract.from_config(cfg)
    horizon = cfg.maturity - tau1

    p_no = float(normal_cdf((trig - v0) / sd1))
    p_call = float(normal_cdf((v0 - trig) / sd1))
    p_s = np.where(call, p_call, p_no)
    pre = np.where(
        call,
        joint_max_below_and_end_above(v0, y + c0, trig, tau1, sig),
        joint_max_below_and_end_below(v0, y + c0, trig, tau1, sig),
    )

    def f(o, x):
        c1 = np.where(x > trig, beta * x, c0)
        q_post = exceed_prob_batch(k, x, c1, tau2[o] - tau1, y[o], EvalMode.PAPER_FACTORIZED, horizon)
        return (1.0 - q_post) * normal_pdf(x, v0, sd1)

    lo_all = v0 - nm.quad_trunc_sds * sd1
    hi_all = v0 + nm.quad_trunc_sds * sd1
    edge = min(max(trig, lo_all), hi_all)
    lo = np.where(call, edge, lo_all)
    hi = np.where(call, hi_all, edge)
    post = integrate_batch(f, lo, hi, nm.quad_rel_tol, 1e-14)
    surv = np.where(p_s > TINY, pre * post / np.maximum(p_s, TINY) ** 2, 0.0)
    return np.clip(1.0 - surv, 0.0, 1.0)


def scenario_exceed_prob_twice(cfg: Config, tau1: int, tau2: int, y: float, first_call: bool) -> float:
    """Exceedance probability conditional on whether the first MTM day triggers a call."""
    _check_pair(cfg, tau1, tau2)
    return float(_scenario_exceed_batch(cfg, tau1, [tau2], [y], [first_call])[0])


def _scenario_weighted_pfe(cfg: Config, tau1: int, tau2s) -> np.ndarray:
    tau2s = np.asarray(tau2s, dtype=float)
    n = len(tau2s)
    sd1 = cfg.sigma * np.sqrt(tau1)
    p_no = float(normal_cdf((cfg.trigger - cfg.v0) / sd1))
    p_call = float(normal_cdf((cfg.v0 - cfg.trigger) / sd1))
    t2 = np.concatenate([tau2s, tau2s])
    call = np.concatenate([np.zeros(n, bool), np.ones(n, bool)])
    weight = np.where(call, p_call, p_no)
    live = weight > TINY
    y = np.zeros(2 * n)
    if live.any():
        seed = 2.0 * cfg.sigma * np.sqrt(cfg.maturity) + max(cfg.v0 - cfg.c0, 0.0)

        def g(yy):
            return _scenario_exceed_batch(cfg, tau1, t2[live], yy, call[live])

        y[live] = bisect_decreasing_batch(g, cfg.q, np.zeros(live.sum()), seed, cfg.numerics.root_abs_tol)
    return weight[:n] * y[:n] + weight[n:] * y[n:]


# Simultaneous optimization ------------------------------------------------


def _pfe_pairs(cfg: Config, tau1: int, tau2s, mode: EvalMode):
    """PFE and achieved exceedance probability for each tau2 with tau1 fixed."""
    tau2s = np.asarray(tau2s, dtype=float)
    if mode is EvalMode.PAPER_FACTORIZED:
        return _scenario_weighted_pfe(cfg, tau1, tau2s), np.full(len(tau2s), np.nan)

    def g(y):
        return 1.0 - _exact_survival_batch(cfg, tau1, tau2s, y)

    seed = 2.0 * cfg.sigma * np.sqrt(cfg.maturity) + max(cfg.v0 - cfg.c0, 0.0)
    y = bisect_decreasing_batch(g, cfg.q, np.zeros(len(tau2s)), seed, cfg.numerics.root_abs_tol)
    return y, g(y)


def pfe_twice(cfg: Config, tau1: int, tau2: int, mode=EvalMode.EXACT_CONDITIONAL) -> float:
    """PFE with both MTM days fixed in advance."""
    _check_pair(cfg, tau1, tau2)
    return float(_pfe_pairs(cfg, tau1, [tau2], EvalMode.parse(mode))[0][0])


def optimize_simultaneous(cfg: Config, mode=EvalMode.EXACT_CONDITIONAL, tau1: Optional[int] = None) -> PfeResult:
    """Scan all ordered pairs (tau1, tau2) and return the one with the smallest PFE.

    Passing ``tau1`` restricts the scan to that first day.  Ties go to the
    lexicographically smallest pair.  The full surface is attached as the curve.
    """
    if cfg.maturity < 3:
        raise InvalidConfig({"market.maturity": "twice-MTM policies need a maturity of at least 3 months"})
    mode = EvalMode.parse(mode)
    firsts = range(1, cfg.maturity - 1) if tau1 is None else [tau1]
    rows = []
    for t1 in firsts:
        tau2s = np.arange(t1 + 1, cfg.maturity)
        _check_pair(cfg, t1, int(tau2s[0]))
        pfes, qs = _pfe_pairs(cfg, t1, tau2s, mode)
        for t2, p, a in zip(tau2s, pfes, qs):
            rows.append({
                "tau1": int(t1), "tau2": int(t2), "pfe": float(p),
                "achieved_q": None if np.isnan(a) else float(a),
            })
    best = min(range(len(rows)), key=lambda i: (rows[i]["pfe"], rows[i]["tau1"], rows[i]["tau2"]))
    top = rows[best]
    return PfeResult(
        times=(top["tau1"], top["tau2"]),
        pfe=top["pfe"],
        achieved_q=top["achieved_q"],
        mode=mode,
        curve=tuple(rows),
    )


# Sequential decision ------------------------------------------------------


def pre_segment_pfe(cfg: Config, tau1: int, x, q: Optional[float] = None):
    """PFE of the segment before the first MTM day given ``V1 = x``.

    Closed-form inversion of the bridge-maximum law, floored at zero.
    """
    q = cfg.q if q is None else q
    m = bridge_max_quantile(cfg.v0, x, tau1, cfg.sigma, q)
    y = np.maximum(m - cfg.c0, 0.0)
    return y if np.ndim(y) else float(y)


def pre_segment_pfe_after_call(cfg: Config, tau1: int, q: Optional[float] = None) -> float:
    """PFE of the pre-MTM segment conditional on the event that the first day triggers a call."""
    q = cfg.q if q is None else q
    sd1 = cfg.sigma * np.sqrt(tau1)
    p_call = float(normal_cdf((cfg.v0 - cfg.trigger) / sd1))
    if p_call <= TINY:
        return 0.0

    def g(y):
        return 1.0 - joint_max_below_and_end_above(cfg.v0, y + cfg.c0, cfg.trigger, tau1, cfg.sigma) / p_call

    if g(0.0) <= q:
        return 0.0
    return bisect_decreasing(g, q, 0.0, cfg.sigma * np.sqrt(tau1), cfg.numerics.root_abs_tol / 100)


def _stage_one_pfe(cfg: Config, tau1: int, x, mode: EvalMode):
    y_a = pre_segment_pfe(cfg, tau1, x)
    if mode is EvalMode.PAPER_FACTORIZED:
        y_a = np.where(np.asarray(x) > cfg.trigger, pre_segment_pfe_after_call(cfg, tau1), y_a)
    return y_a


def _stage_two(cfg: Config, tau1: int, x, mode: EvalMode, tol: float):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = Contract.from_config(cfg)
    c1 = np.where(x > cfg.trigger, cfg.beta * x, cfg.c0)
    offsets, y_b = best_timing_batch(k, x, c1, cfg.maturity - tau1, cfg.q, mode, tol)
    return offsets + tau1, y_b


def second_stage_opt(cfg: Config, tau1: int, x: float, mode=EvalMode.PAPER_FACTORIZED) -> tuple[int, float]:
    """Best second MTM month and its PFE after observing ``V1 = x`` on ``tau1``.

    The remaining life is treated as a fresh single-MTM contract starting at
    ``x`` with the collateral in force after the first day.
    """
    if not 1 <= tau1 <= cfg.maturity - 2:
        raise InvalidConfig({"policy.tau1": f"must lie in [1, {cfg.maturity - 2}], got {tau1}"})
    tau2, y_b = _stage_two(cfg, tau1, [x], EvalMode.parse(mode), cfg.numerics.root_abs_tol)
    return int(tau2[0]), float(y_b[0])


def expected_pfe_sequential(
    cfg: Config, tau1: int, mode=EvalMode.PAPER_FACTORIZED, with_policy: bool = False
):
    """Expected lifetime PFE when the second MTM day is chosen after seeing ``V1``.

    Integrates ``max(y_A(x), y_B*(x))`` against the law of ``V1`` with the
    no-call and call regions as separate panels.  With ``with_policy`` the
    tabulated second-stage decisions at every quadrature node are returned too.
    """
    if not 1 <= tau1 <= cfg.maturity - 2:
        raise InvalidConfig({"policy.tau1": f"must lie in [1, {cfg.maturity - 2}], got {tau1}"})
    mode = EvalMode.parse(mode)
    nm = cfg.numerics
    sd1 = cfg.sigma * np.sqrt(tau1)
    inner_tol = nm.root_abs_tol / 100
    seen: dict[float, SequentialNode] = {}

    def f(x):
        y_a = np.broadcast_to(_stage_one_pfe(cfg, tau1, x, mode), x.shape)
        tau2, y_b = _stage_two(cfg, tau1, x, mode, inner_tol)
        if with_policy:
            for xi, a, t, b in zip(x, y_a, tau2, y_b):
                seen[float(xi)] = SequentialNode(float(xi), float(a), int(t), float(b))
        return np.maximum(y_a, y_b) * normal_pdf(x, cfg.v0, sd1)

    lo = cfg.v0 - nm.quad_trunc_sds * sd1
    hi = cfg.v0 + nm.quad_trunc_sds * sd1
    value = integrate(f, lo, hi, rel_tol=nm.root_abs_tol, abs_tol=nm.root_abs_tol, breakpoints=[cfg.trigger])
    if not with_policy:
        return value
    nodes = tuple(seen[x] for x in sorted(seen))
    return value, SequentialPolicy(tau1, nodes)


def optimize_sequential(cfg: Config, mode=EvalMode.PAPER_FACTORIZED) -> PfeResult:
    """Scan the first MTM day; the second is chosen optimally per observed value."""
    if cfg.maturity < 3:
        raise InvalidConfig({"market.maturity": "twice-MTM policies need a maturity of at least 3 months"})
    mode = EvalMode.parse(mode)
    values = [expected_pfe_sequential(cfg, t1, mode) for t1 in range(1, cfg.maturity - 1)]
    best = int(np.argmin(values))
    tau1 = best + 1
    value, policy = expected_pfe_sequential(cfg, tau1, mode, with_policy=True)
    return PfeResult(
        times=(tau1,),
        pfe=float(value),
        achieved_q=None,
        mode=mode,
        curve=tuple({"tau1": t, "epfe": float(v)} for t, v in enumerate(values, start=1)),
        policy=policy,
    )
