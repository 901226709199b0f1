"""Monte Carlo oracle for lifetime maximum exposure under any MTM policy.

Paths are simulated exactly in continuous time.  The value is drawn at each
MTM date and at maturity from its Gaussian transition.  Each segment's
maximum is then drawn from the bridge-maximum law given its two endpoints.
Collateral only changes on MTM dates, so no time grid is needed and the
estimates carry no discretization bias.

Randomness comes in fixed blocks of paths.  Block ``b`` draws from its own
``SeedSequence(seed, spawn_key=(b,))`` stream, so a path's draws depend only
on its index and never on how blocks are spread over workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model import (
    Config,
    SequentialPolicy,
    Single,
    TwiceSimultaneous,
    check_policy,
)
from .stochastics import draw_segment_max

COMPONENTS = ("no_call", "pre_ok_no_call", "post_ok_no_call", "pre_ok_call", "post_ok_call")

Policy = Union[Single, TwiceSimultaneous, SequentialPolicy]


@dataclass(frozen=True)
class McSpec:
    paths: int = 1_000_000
    seed: int = 0
    antithetic: bool = True
    workers: int = 1
    block_size: int = 65_536

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.workers < 1 or self.block_size < 2:
            raise ValueError("workers must be >= 1 and block_size >= 2")


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    paths: int
    degenerate: bool = False   # set when the standard error is not meaningful (one path)


@dataclass
class PathSample:
    """Per-path MTM-date values, segment maxima and collateral.

    Column ``j`` of ``maxima``/``collateral`` belongs to the ``j``-th segment;
    ``mtm_values`` holds the value on each MTM date.  ``pair`` gives each
    path's antithetic partner index within the sample, or -1.
    """

    mtm_values: np.ndarray
    maxima: np.ndarray
    collateral: np.ndarray
    pair: np.ndarray

    @property
    def exposure(self) -> np.ndarray:
        return (self.maxima - self.collateral).max(axis=1)

    def __len__(self):
        return self.maxima.shape[0]


def _segments(policy: Policy) -> int:
    return 2 if isinstance(policy, Single) else 3


def _block_draws(mc: McSpec, block: int, n: int, k: int):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(mc.seed, spawn_key=(block,))))
    if mc.antithetic:
        half = (n + 1) // 2
        z = rng.standard_normal((half, k))
        u = 1.0 - rng.random((half, k))   # in (0, 1]
        normals = np.concatenate([z, -z])[:n]
        uniforms = np.concatenate([u, u])[:n]
        partner = np.concatenate([np.arange(half) + half, np.arange(half)])[:n]
        partner = np.where(partner < n, partner, -1)
    else:
        normals = rng.standard_normal((n, k))
        uniforms = 1.0 - rng.random((n, k))
        partner = np.full(n, -1)
    return normals, uniforms, partner


def simulate_max_exposure(cfg: Config, policy: Policy, normals, uniforms) -> PathSample:
    """Turn standard-normal and uniform draws into simulated paths.

    ``normals`` and ``uniforms`` have one row per path and one column per
    segment: the normals drive the value at each segment's end, the uniforms
    pick the segment maximum given its endpoints.
    """
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    uniforms = np.atleast_2d(np.asarray(uniforms, dtype=float))
    if isinstance(policy, SequentialPolicy):
        check_policy(TwiceSimultaneous(policy.tau1, policy.tau1 + 1), cfg.maturity)
    else:
        check_policy(policy, cfg.maturity)
    sig, T, beta, alpha = cfg.sigma, cfg.maturity, cfg.beta, cfg.alpha
    n = normals.shape[0]

    if isinstance(policy, Single):
        dates = [np.full(n, float(policy.tau))]
    elif isinstance(policy, TwiceSimultaneous):
        dates = [np.full(n, float(policy.tau1)), np.full(n, float(policy.tau2))]
    else:
        dates = [np.full(n, float(policy.tau1)), None]

    start = np.full(n, cfg.v0)
    t_prev = np.zeros(n)
    coll = np.full(n, cfg.c0)
    mtm_values, maxima, colls = [], [], []
    for j in range(normals.shape[1]):
        if j < len(dates):
            t_next = dates[j]
            if t_next is None:
                # Second sequential date chosen from the first-day value.
                t_next = _lookup_tau2(policy, mtm_values[0])
        else:
            t_next = np.full(n, float(T))
        dt = t_next - t_prev
        end = start + sig * np.sqrt(dt) * normals[:, j]
        maxima.append(draw_segment_max(start, end, dt, sig, uniforms[:, j]))
        colls.append(coll)
        if j < len(dates):
            mtm_values.append(end)
            coll = np.where(end > alpha * coll, beta * end, coll)
        start, t_prev = end, t_next
    return PathSample(
        mtm_values=np.stack(mtm_values, axis=1),
        maxima=np.stack(maxima, axis=1),
        collateral=np.stack(colls, axis=1),
        pair=np.full(n, -1),
    )


def _lookup_tau2(policy: SequentialPolicy, x: np.ndarray) -> np.ndarray:
    xs = np.array([nd.x for nd in policy.nodes])
    t2 = np.array([nd.tau2_star for nd in policy.nodes], dtype=float)
    i = np.clip(np.searchsorted(xs, x), 1, len(xs) - 1) if len(xs) > 1 else np.zeros(len(x), int)
    if len(xs) > 1:
        left = xs[i - 1]
        right = xs[i]
        i = np.where(np.abs(x - left) <= np.abs(right - x), i - 1, i)
    return t2[i]


def simulate_paths(cfg: Config, policy: Policy, mc: McSpec) -> PathSample:
    """Simulate ``mc.paths`` paths, block by block, optionally on worker threads."""
    k = _segments(policy)
    sizes = [mc.block_size] * (mc.paths // mc.block_size)
    if mc.paths % mc.block_size:
        sizes.append(mc.paths % mc.block_size)

    def run(b):
        normals, uniforms, partner = _block_draws(mc, b, sizes[b], k)
        s = simulate_max_exposure(cfg, policy, normals, uniforms)
        s.pair = partner
        return s

    if mc.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=mc.workers) as pool:
            blocks = list(pool.map(run, range(len(sizes))))
    else:
        blocks = [run(b) for b in range(len(sizes))]
    offsets = np.cumsum([0] + sizes[:-1])
    return PathSample(
        mtm_values=np.concatenate([s.mtm_values for s in blocks]),
        maxima=np.concatenate([s.maxima for s in blocks]),
        collateral=np.concatenate([s.collateral for s in blocks]),
        pair=np.concatenate([np.where(s.pair >= 0, s.pair + o, -1) for s, o in zip(blocks, offsets)]),
    )


def _frequency(hits: np.ndarray, pair: np.ndarray) -> McEstimate:
    """Frequency of a 0/1 event with its standard error.

    Antithetic partners are averaged first; the standard error then comes
    from the spread of those pair means, which accounts for the induced
    correlation.  Every reduction is an integer count, so the result does
    not depend on summation order.
    """
    n = len(hits)
    hits = hits.astype(np.int64)
    p = int(hits.sum()) / n
    if n == 1:
        return McEstimate(p, math.inf, 1, degenerate=True)
    first = (pair >= 0) & (np.arange(n) < pair)
    m = int(first.sum())
    if m > 1:
        # Pair sums are 0, 1 or 2; the variance of the pair mean uses integer moments.
        k = hits[first] + hits[pair[first]]
        s1 = int(k.sum())
        s2 = int((k * k).sum())
        var_pair_mean = max(s2 / m - (s1 / m) ** 2, 0.0) / 4.0
        se = math.sqrt(var_pair_mean / m)
    else:
        se = math.sqrt(p * (1.0 - p) / n)
    return McEstimate(p, se, n)


def estimate_exceed_prob(
    cfg: Config, policy: Policy, y: float, mc: McSpec, sample: Optional[PathSample] = None
) -> McEstimate:
    """Fraction of paths whose lifetime maximum exposure exceeds ``y``."""
    sample = simulate_paths(cfg, policy, mc) if sample is None else sample
    return _frequency(sample.exposure > y, sample.pair)


def component_events(cfg: Config, sample: PathSample, y: float) -> dict[str, np.ndarray]:
    """Indicators of the five single-MTM joint events for a Single-policy sample."""
    v_tau = sample.mtm_values[:, 0]
    v_a = sample.maxima[:, 0]
    v_b = sample.maxima[:, 1]
    no_call = v_tau <= cfg.trigger
    pre_ok = v_a - cfg.c0 <= y
    return {
        "no_call": no_call,
        "pre_ok_no_call": pre_ok & no_call,
        "post_ok_no_call": (v_b - cfg.c0 <= y) & no_call,
        "pre_ok_call": pre_ok & ~no_call,
        "post_ok_call": (v_b - cfg.beta * v_tau <= y) & ~no_call,
    }


def estimate_component(
    cfg: Config, tau: int, y: float, component: str, mc: McSpec, sample: Optional[PathSample] = None
) -> McEstimate:
    """Empirical frequency of one of the five single-MTM joint events."""
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}; expected one of {COMPONENTS}")
    sample = simulate_paths(cfg, Single(tau), mc) if sample is None else sample
    return _frequency(component_events(cfg, sample, y)[component], sample.pair)


def estimate_pfe(
    cfg: Config, policy: Policy, q: float, mc: McSpec, sample: Optional[PathSample] = None
) -> McEstimate:
    """Empirical (1 - q)-quantile of the lifetime maximum exposure.

    The standard error is read off the order statistics one binomial
    standard deviation either side of the quantile's rank.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    sample = simulate_paths(cfg, policy, mc) if sample is None else sample
    e = np.sort(sample.exposure)
    n = len(e)
    if n == 1:
        return McEstimate(float(e[0]), math.inf, 1, degenerate=True)
    rank = min(max(math.ceil(n * (1.0 - q)) - 1, 0), n - 1)
    d = max(int(math.ceil(math.sqrt(n * q * (1.0 - q)))), 1)
    lo = e[max(rank - d, 0)]
    hi = e[min(rank + d, n - 1)]
    return McEstimate(float(e[rank]), float(hi - lo) / 2.0, n)
