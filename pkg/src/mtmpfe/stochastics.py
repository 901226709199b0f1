"""Laws of the running maximum of driftless Brownian motion.

Every function is a total, vectorized map: formulas are applied on their
interior domain and clamped at the boundaries (a barrier at or below the
start or end point is crossed with probability one).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import SQRT2, erfc, normal_cdf


@dataclass(frozen=True)
class Segment:
    """A stretch of the value path between two observation dates."""

    a: float       # value at the start
    b: float       # value at the end (bridge laws only)
    dt: float      # duration, months
    sigma: float   # volatility per sqrt(month)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"segment duration must be > 0, got {self.dt}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


def bridge_exceed(a, b, m, dt, sigma):
    """P(max of the bridge from ``a`` to ``b`` over ``dt`` exceeds ``m``)."""
    a, b, m = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, m)))
    # The clamp below makes the exponent <= 0 wherever it is used.
    expo = -2.0 * np.maximum(m - a, 0.0) * np.maximum(m - b, 0.0) / (sigma * sigma * dt)
    p = np.where(m <= np.maximum(a, b), 1.0, np.exp(expo))
    return p if p.ndim else float(p)


def bridge_max_exceed_prob(seg: Segment, m):
    return bridge_exceed(seg.a, seg.b, m, seg.dt, seg.sigma)


def running_max_exceed_prob(start, c, dt, sigma):
    """P(max over ``dt`` of a path started at ``start`` exceeds ``c``), by reflection."""
    start = np.asarray(start, dtype=float)
    c = np.asarray(c, dtype=float)
    gap = np.maximum(c - start, 0.0)
    p = np.clip(erfc(gap / (sigma * SQRT2 * np.sqrt(dt))), 0.0, 1.0)
    return p if p.ndim else float(p)


def joint_max_below_and_end_below(a, m, u, dt, sigma):
    """P(max <= m and end <= u) for a path started at ``a`` and run for ``dt``."""
    a, m, u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, m, u)))
    s = sigma * np.sqrt(dt)
    cap = np.minimum(u, m)
    p = normal_cdf((cap - a) / s) - normal_cdf((cap - (2.0 * m - a)) / s)
    p = np.where(m < a, 0.0, np.clip(p, 0.0, 1.0))
    return p if p.ndim else float(p)


def joint_max_below_and_end_above(a, m, l, dt, sigma):
    """P(max <= m and end > l) for a path started at ``a`` and run for ``dt``."""
    p = joint_max_below_and_end_below(a, m, m, dt, sigma) - joint_max_below_and_end_below(
        a, m, l, dt, sigma
    )
    p = np.maximum(p, 0.0)
    return p if np.ndim(p) else float(p)


def draw_segment_max(a, b, dt, sigma, uniform):
    """Exact draw of the segment maximum given both endpoints, by inversion.

    ``uniform`` must lie in (0, 1); values near 1 give maxima near max(a, b).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a - b
    m = 0.5 * (a + b + np.sqrt(d * d - 2.0 * sigma * sigma * dt * np.log(uniform)))
    return m if np.ndim(m) else float(m)


def bridge_max_quantile(a, b, dt, sigma, q):
    """Level exceeded by the bridge maximum with probability ``q`` (inverse of bridge_exceed)."""
    return draw_segment_max(a, b, dt, sigma, q)


def sample_segment_max(seg: Segment, uniform):
    return draw_segment_max(seg.a, seg.b, seg.dt, seg.sigma, uniform)
