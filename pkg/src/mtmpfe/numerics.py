"""Scalar numerical kernels: error functions, Gaussian law, quadrature, root bracketing.

All functions accept numpy arrays where that makes sense so that the
probability integrands elsewhere in the package can be evaluated a panel
at a time.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


class ConvergenceFailure(RuntimeError):
    """Adaptive quadrature exhausted its subdivision budget."""


class BracketFailure(RuntimeError):
    """No bracket containing the target could be found."""


def erfc(z):
    """Complementary error function, elementwise.

    Backed by ``scipy.special.erfc`` (Cephes), which is accurate to a few ulp
    over the whole real line and saturates to 0 / 2 in the tails.
    """
    return special.erfc(z)


def normal_cdf(z):
    return 0.5 * special.erfc(-np.asarray(z, dtype=float) / SQRT2)


def normal_pdf(x, mean=0.0, sd=1.0):
    if np.any(np.asarray(sd) <= 0):
        raise ValueError("sd must be strictly positive")
    u = (np.asarray(x, dtype=float) - mean) / sd
    return np.exp(-0.5 * u * u) / (sd * SQRT2PI)


# 7-point Gauss / 15-point Kronrod pair on [-1, 1].
_XK = np.array([
    -0.991455371120812639206854697526329,
    -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926,
    -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013,
    -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245,
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144845693013,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
])
_WG = np.zeros(15)
_WG[1::2] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
]


def integrate_batch(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    a,
    b,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-14,
    breakpoints=None,
    max_panels: int = 200_000,
) -> np.ndarray:
    """Adaptive Gauss-Kronrod (7/15) quadrature of many integrals at once.

    Integral ``i`` runs over ``[a[i], b[i]]``.  ``f(owner, x)`` receives flat
    arrays of integral indices and abscissae and returns values with the
    abscissae on the last axis; a leading axis makes the integrand
    vector-valued.  ``breakpoints`` is an optional ``(n, k)`` array of panel
    edges per integral; NaN entries and points outside ``(a[i], b[i])`` are
    ignored.  Empty intervals (``a[i] >= b[i]``) integrate to zero.

    Each round evaluates every unresolved panel in a single call and bisects
    those whose Kronrod-Gauss difference exceeds their width-proportional
    share of ``max(rel_tol * |I_i|, abs_tol)``.  Node placement depends only
    on the inputs, so results are reproducible bit for bit.

    Returns an array of shape ``(n,)``, or ``(k, n)`` for vector integrands.

    Raises
    ------
    ConvergenceFailure
        If the total panel count would exceed ``max_panels``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    n = a.size
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("integration bounds must be finite")
    live = b > a

    owners = [np.flatnonzero(live)]
    lows = [a[live]]
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float).reshape(n, -1)
        for col in bp.T:
            inside = live & (col > a) & (col < b)
            owners.append(np.flatnonzero(inside))
            lows.append(col[inside])
    owner = np.concatenate(owners)
    lo = np.concatenate(lows)
    order = np.lexsort((lo, owner))
    owner, lo = owner[order], lo[order]
    # Duplicate breakpoints would create empty panels.
    keep = np.ones(len(lo), dtype=bool)
    keep[1:] = (owner[1:] != owner[:-1]) | (lo[1:] != lo[:-1])
    owner, lo = owner[keep], lo[keep]
    nxt_same = np.zeros(len(lo), dtype=bool)
    nxt_same[:-1] = owner[1:] == owner[:-1]
    hi = np.where(nxt_same, np.roll(lo, -1), b[owner])

    width_total = np.where(live, b - a, 1.0)
    done = None
    n_panels = len(lo)
    eps = np.finfo(float).eps
    while len(lo):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        x = (mid[:, None] + half[:, None] * _XK[None, :]).ravel()
        fx = np.asarray(f(np.repeat(owner, 15), x), dtype=float)
        fx = fx.reshape(fx.shape[:-1] + (len(lo), 15))
        kron = (fx @ _WK) * half
        gauss = (fx @ _WG) * half
        err = np.abs(kron - gauss)
        if done is None:
            done = np.zeros(kron.shape[:-1] + (n,))
        vec_shape = kron.shape[:-1]
        kron2 = kron.reshape(-1, len(lo))
        if err.ndim > 1:
            err = err.reshape(-1, len(lo)).max(axis=0)

        done2 = done.reshape(-1, n)
        est = done2.copy()
        for j in range(kron2.shape[0]):
            est[j] += np.bincount(owner, weights=kron2[j], minlength=n)
        scale = np.abs(est).max(axis=0)
        budget = np.maximum(rel_tol * scale, abs_tol)
        share = budget[owner] * (hi - lo) / width_total[owner]
        ok = err <= share
        # Panels too narrow to split further are accepted as they are.
        ok |= (hi - lo) <= 64 * eps * np.maximum(np.abs(mid), 1.0)

        for j in range(kron2.shape[0]):
            done2[j] += np.bincount(owner[ok], weights=kron2[j][ok], minlength=n)
        done = done2.reshape(vec_shape + (n,))
        bad = ~ok
        if not bad.any():
            break
        n_panels += int(bad.sum())
        if n_panels > max_panels:
            raise ConvergenceFailure(f"quadrature needed more than {max_panels} panels")
        owner = np.concatenate([owner[bad], owner[bad]])
        lo, hi = np.concatenate([lo[bad], mid[bad]]), np.concatenate([mid[bad], hi[bad]])
    if done is None:
        probe = np.asarray(f(np.zeros(1, dtype=int), a[:1]), dtype=float)
        done = np.zeros(probe.shape[:-1] + (n,))
    return done


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-14,
    breakpoints: Sequence[float] = (),
    max_panels: int = 4000,
):
    """Adaptive quadrature of ``f`` over ``[a, b]`` with relative tolerance ``rel_tol``.

    ``f`` takes an array of abscissae.  Interior ``breakpoints`` (kinks,
    region boundaries) are always panel edges.  Reversed bounds flip the
    sign.  Vector-valued integrands return an array.
    """
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("integration bounds must be finite")
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    bp = np.array([list(breakpoints)], dtype=float) if len(breakpoints) else None
    out = integrate_batch(
        lambda _owner, x: f(x), [a], [b], rel_tol, abs_tol, bp, max_panels
    )[..., 0]
    out = sign * out
    return float(out) if np.ndim(out) == 0 else out


def gaussian_window(mean: float, sd: float, n_sds: float) -> tuple[float, float]:
    """Truncation interval ``mean +- n_sds * sd`` for an improper Gaussian integral."""
    return mean - n_sds * sd, mean + n_sds * sd


def bisect_decreasing(
    g: Callable[[float], float],
    target: float,
    lo: float,
    hi_seed: float,
    tol: float,
    max_doublings: int = 60,
) -> float:
    """Solve ``g(y) = target`` for a nonincreasing ``g`` by bisection.

    ``g(lo) >= target`` is required.  The upper end starts at ``hi_seed`` and
    is pushed outward geometrically until ``g(hi) <= target``.  Bisection
    then runs until the bracket is narrower than ``tol``.  The upper end of
    the final bracket is returned, so ``g(result) <= target`` always holds
    and the result is within ``tol`` of the smallest such point.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    g_lo = g(lo)
    if g_lo < target:
        raise BracketFailure(f"g(lo={lo}) = {g_lo} is already below target {target}")
    if g_lo == target:
        return lo
    step = max(hi_seed - lo, tol)
    hi = lo + step
    for _ in range(max_doublings):
        if g(hi) <= target:
            break
        lo = hi
        step *= 2.0
        hi = lo + step
    else:
        raise BracketFailure(f"no upper bracket for target {target} within budget")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def bisect_decreasing_batch(
    g: Callable[[np.ndarray], np.ndarray],
    target,
    lo,
    hi_seed,
    tol: float,
    max_doublings: int = 60,
) -> np.ndarray:
    """Elementwise bisect_decreasing for a batch of independent monotone problems.

    ``g`` maps an array of trial points (one per problem) to their function
    values.  Problems with ``g(lo) <= target`` resolve to ``lo``.
    """
    lo, target, hi = (
        np.array(v, dtype=float)
        for v in np.broadcast_arrays(np.asarray(lo, float), np.asarray(target, float), np.asarray(hi_seed, float))
    )
    hi = np.maximum(hi, lo + tol)
    g_lo = np.asarray(g(lo), dtype=float)
    settled = g_lo <= target
    step = hi - lo
    for _ in range(max_doublings):
        g_hi = np.asarray(g(np.where(settled, lo, hi)), dtype=float)
        grow = ~settled & (g_hi > target)
        if not grow.any():
            break
        lo = np.where(grow, hi, lo)
        step = np.where(grow, 2.0 * step, step)
        hi = np.where(grow, lo + step, hi)
    else:
        raise BracketFailure("no upper bracket for target within budget")
    hi = np.where(settled, lo, hi)
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        above = np.asarray(g(mid), dtype=float) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return hi
