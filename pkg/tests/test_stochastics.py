import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtmpfe.numerics import integrate, normal_pdf
from mtmpfe.stochastics import (
    Segment,
    bridge_exceed,
    bridge_max_exceed_prob,
    bridge_max_quantile,
    joint_max_below_and_end_above,
    joint_max_below_and_end_below,
    running_max_exceed_prob,
    sample_segment_max,
)

# Benchmark operands: start 1, barrier C0 + y = 1.1 + 1.3602, call trigger 0.99, ten months at 20%.
# Reference values integrate the bridge-maximum survival against the endpoint
# density with 30-digit mpmath quadrature, an independent route from the
# reflection-based closed forms.
JOINT_BELOW_BENCH = 0.493690632701142505
JOINT_ABOVE_BENCH = 0.485353514925329394


def test_segment_rejects_bad_duration():
    with pytest.raises(ValueError):
        Segment(0.0, 0.0, 0.0, 1.0)


def test_barrier_at_endpoint_is_certain():
    assert bridge_max_exceed_prob(Segment(0.0, 0.5, 1.0, 1.0), 0.5) == 1.0


def test_unit_bridge_exceeds_one():
    assert bridge_max_exceed_prob(Segment(0.0, 0.0, 1.0, 1.0), 1.0) == pytest.approx(math.exp(-2.0), rel=1e-15)


def test_far_barrier_never_reached():
    assert bridge_max_exceed_prob(Segment(0.0, 0.0, 1.0, 1.0), 1e3) == 0.0


def test_reflection_at_start():
    assert running_max_exceed_prob(0.3, 0.3, 5.0, 0.2) == 1.0


def test_reflection_one_sd():
    c = 0.2 * math.sqrt(10.0)
    assert running_max_exceed_prob(0.0, c, 10.0, 0.2) == pytest.approx(0.317310507862914103, rel=1e-12)


def test_reflection_ten_sds():
    assert running_max_exceed_prob(0.0, 10 * 0.2 * math.sqrt(10.0), 10.0, 0.2) < 1e-20


@pytest.mark.parametrize("c", np.linspace(0.05, 2.0, 10))
def test_total_probability_recovers_reflection(c):
    start, dt, sigma = 0.0, 4.0, 0.3
    sd = sigma * math.sqrt(dt)
    f = lambda b: bridge_exceed(start, b, c, dt, sigma) * normal_pdf(b, start, sd)
    got = integrate(f, start - 10 * sd, start + 10 * sd, rel_tol=1e-10, breakpoints=[c])
    assert got == pytest.approx(running_max_exceed_prob(start, c, dt, sigma), abs=1e-6)


def test_joint_below_barrier_breached_at_start():
    assert joint_max_below_and_end_below(1.0, 0.5, 0.4, 1.0, 0.2) == 0.0


def test_joint_below_unconstrained():
    assert joint_max_below_and_end_below(0.0, 1e6, 1e6, 1.0, 0.2) == pytest.approx(1.0)


def test_joint_below_benchmark():
    got = joint_max_below_and_end_below(1.0, 2.4602, 0.99, 10.0, 0.2)
    assert got == pytest.approx(JOINT_BELOW_BENCH, abs=1e-12)


def test_joint_above_floor_over_barrier():
    assert joint_max_below_and_end_above(0.0, 1.0, 1.2, 1.0, 0.5) == 0.0


def test_joint_above_no_floor_is_max_law():
    got = joint_max_below_and_end_above(0.0, 0.8, -1e6, 3.0, 0.4)
    assert got == pytest.approx(1.0 - running_max_exceed_prob(0.0, 0.8, 3.0, 0.4), abs=1e-14)


def test_joint_above_benchmark():
    got = joint_max_below_and_end_above(1.0, 2.4602, 0.99, 10.0, 0.2)
    assert got == pytest.approx(JOINT_ABOVE_BENCH, abs=1e-12)


def test_joint_laws_against_simulation():
    rng = np.random.default_rng(7)
    n = 400_000
    a, sigma, dt, m = 1.0, 0.2, 10.0, 1.4
    b = a + sigma * math.sqrt(dt) * rng.standard_normal(n)
    # Maxima drawn by inverting the bridge law directly, independent of the library sampler.
    mx = 0.5 * (a + b + np.sqrt((a - b) ** 2 - 2 * sigma ** 2 * dt * np.log(1.0 - rng.random(n))))
    for u in (0.8, 0.99, 1.2):
        hits = np.mean((mx <= m) & (b <= u))
        se = math.sqrt(hits * (1 - hits) / n)
        assert abs(hits - joint_max_below_and_end_below(a, m, u, dt, sigma)) < 4 * se


def test_sample_max_near_one_uniform():
    assert sample_segment_max(Segment(0.2, 0.7, 2.0, 0.3), 1.0 - 1e-16) == pytest.approx(0.7, abs=1e-6)


def test_sample_max_inverts_unit_bridge():
    assert sample_segment_max(Segment(0.0, 0.0, 1.0, 1.0), math.exp(-2.0)) == pytest.approx(1.0, rel=1e-14)


def test_sampled_maxima_follow_bridge_law():
    seg = Segment(0.1, -0.3, 3.0, 0.5)
    u = 1.0 - np.random.default_rng(11).random(1_000_000)
    draws = np.sort(sample_segment_max(seg, u))
    grid = np.linspace(0.11, 3.0, 200)
    empirical_tail = 1.0 - np.searchsorted(draws, grid, side="right") / draws.size
    assert np.max(np.abs(empirical_tail - bridge_max_exceed_prob(seg, grid))) < 0.002


@settings(max_examples=100)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 24), st.floats(0.01, 1), st.floats(0.001, 0.999))
def test_quantile_inverts_bridge_law(a, b, dt, sigma, q):
    m = bridge_max_quantile(a, b, dt, sigma, q)
    assert m >= max(a, b) - 1e-12
    assert bridge_max_exceed_prob(Segment(a, b, dt, sigma), m) == pytest.approx(q, rel=1e-8, abs=1e-12)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 2), st.floats(0, 2), st.floats(0.1, 10))
def test_bridge_tail_monotone_in_barrier(a, b, m1, gap, dt):
    seg = Segment(a, b, dt, 0.3)
    assert bridge_max_exceed_prob(seg, m1 + gap) <= bridge_max_exceed_prob(seg, m1) + 1e-15
