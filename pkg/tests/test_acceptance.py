"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line that is printed in the pytest
terminal summary under "acceptance criteria".
"""
import json
import math
import time

import numpy as np
import pytest

from mtmpfe import EvalMode, McSpec, make_config
from mtmpfe.cli import main, run_validation
from mtmpfe.mc_oracle import COMPONENTS, component_events, estimate_exceed_prob, simulate_paths, _frequency
from mtmpfe.model import Single
from mtmpfe.numerics import integrate, normal_pdf
from mtmpfe.single_mtm import exceed_prob_single, optimize_single, pfe_single, scenario_split
from mtmpfe.stochastics import bridge_exceed, running_max_exceed_prob
from mtmpfe.twice_mtm import optimize_sequential, optimize_simultaneous, pre_segment_pfe

PAPER = EvalMode.PAPER_FACTORIZED
EXACT = EvalMode.EXACT_CONDITIONAL
PINNED = PAPER

SENSITIVITY = {
    "maturity": [(12, 5, 0.9325), (24, 10, 1.3602), (36, 15, 1.6884)],
    "q": [(0.1, 9, 1.1515), (0.05, 10, 1.3602), (0.01, 11, 1.7697)],
    "sigma": [(0.1, 10, 0.4163), (0.2, 10, 1.3602), (0.3, 10, 2.0903)],
    "v0": [(0, 10, 1.4602), (0.5, 10, 1.4102), (1, 10, 1.3602), (1.5, 10, 1.3102), (2, 10, 1.2603)],
    "alpha": [(0.5, 11, 1.3966), (0.8, 10, 1.3613), (0.9, 10, 1.3602), (1, 10, 1.3636)],
    "beta": [(1, 10, 1.4817), (1.1, 10, 1.3602), (1.5, 10, 0.9703), (1.7, 11, 0.8321), (1.9, 12, 0.7026), (2, 13, 0.6364)],
}
# The one sensitivity row known to disagree with the one-year comparison table.
KNOWN_INCONSISTENT = ("sigma", 0.1)

SINGLE_ROWS = [0.5144, 0.4736, 0.4397, 0.4206, 0.4163, 0.4224, 0.4369, 0.4595, 0.4886, 0.5198]
SIMULTANEOUS_ROWS = [(6, 0.3726), (6, 0.3443), (7, 0.3252), (8, 0.3189), (8, 0.3191),
                     (9, 0.3272), (9, 0.3443), (10, 0.3666), (10, 0.3938), (11, 0.4202)]
SEQUENTIAL_ROWS = [0.3667, 0.3302, 0.2964, 0.2822, 0.2918, 0.3031, 0.3211, 0.3493, 0.3764, 0.402]


def test_criterion_01_benchmark(criterion):
    t0 = time.perf_counter()
    res = optimize_single(make_config(), PINNED)
    elapsed = time.perf_counter() - t0
    ok = res.times == (10,) and abs(res.pfe - 1.3602) <= 0.005 and elapsed <= 10.0
    assert criterion(1, ok, f"tau*={res.times[0]} pfe={res.pfe:.4f} in {elapsed:.2f}s [{PINNED.value} mode]")


def test_criterion_02_sensitivity_tables(criterion):
    misses = []
    for param, table in SENSITIVITY.items():
        for value, tau, pfe in table:
            res = optimize_single(make_config(**{param: value}), PINNED)
            if res.times != (tau,) or abs(res.pfe - pfe) > 0.005:
                misses.append((param, value, res.times[0], round(res.pfe, 4), tau, pfe))
    n_rows = sum(len(t) for t in SENSITIVITY.values())
    allowed = len(misses) <= 1 and all((p, v) == KNOWN_INCONSISTENT for p, v, *_ in misses)
    note = "; documented miss " + ", ".join(f"{p}={v}: got tau {t} pfe {y} vs {rt} {rp}" for p, v, t, y, rt, rp in misses)
    assert criterion(2, allowed, f"{n_rows - len(misses)}/{n_rows} rows match{note if misses else ''}")


def test_criterion_03_single_column(criterion):
    res = optimize_single(make_config(sigma=0.1, maturity=12), PINNED)
    got = [row["pfe"] for row in res.curve[:10]]
    worst = max(abs(a - b) for a, b in zip(got, SINGLE_ROWS))
    assert criterion(3, worst <= 0.005, f"10 rows, max |diff| = {worst:.4f}")


def test_criterion_04_simultaneous_block(criterion, simultaneous_paper):
    best_per_row = {}
    for row in simultaneous_paper.curve:
        t1 = row["tau1"]
        if t1 not in best_per_row or row["pfe"] < best_per_row[t1]["pfe"]:
            best_per_row[t1] = row
    bad = []
    for t1, (t2, pfe) in enumerate(SIMULTANEOUS_ROWS, start=1):
        row = best_per_row[t1]
        if abs(row["tau2"] - t2) > 1 or abs(row["pfe"] - pfe) > 0.02:
            bad.append(t1)
    worst = max(abs(best_per_row[t]["pfe"] - p) for t, (_, p) in enumerate(SIMULTANEOUS_ROWS, start=1))
    top = simultaneous_paper
    ok = not bad and top.times == (4, 8) and abs(top.pfe - 0.3189) <= 0.02
    assert criterion(4, ok, f"rows off: {bad or 'none'}; max |diff| = {worst:.4f}; optimum {top.times} pfe={top.pfe:.4f}")


def test_criterion_05_sequential_block(criterion, sequential_paper):
    got = [row["epfe"] for row in sequential_paper.curve[:10]]
    worst = max(abs(a - b) for a, b in zip(got, SEQUENTIAL_ROWS))
    top = sequential_paper
    ok = worst <= 0.02 and top.times == (4,) and abs(top.pfe - 0.2822) <= 0.02
    assert criterion(5, ok, f"max |diff| = {worst:.4f}; optimum tau1={top.times[0]} E[pfe]={top.pfe:.4f}")


def test_criterion_06_policy_dominance(criterion, simultaneous_paper, sequential_paper):
    minima = {}
    for T in (12, 24, 36):
        cfg = make_config(sigma=0.1, maturity=T)
        if T == 12:
            sim, seq = simultaneous_paper, sequential_paper
        else:
            sim, seq = optimize_simultaneous(cfg, PAPER), optimize_sequential(cfg, PAPER)
        minima[T] = (optimize_single(cfg, PAPER).pfe, sim.pfe, seq.pfe)
    ordered = all(s >= m >= q for s, m, q in minima.values())
    gaps_sim = [minima[T][0] - minima[T][1] for T in (12, 24, 36)]
    gaps_seq = [minima[T][0] - minima[T][2] for T in (12, 24, 36)]
    growing = all(np.diff(gaps_sim) > 0) and all(np.diff(gaps_seq) > 0)
    detail = "; ".join(f"T={T}: {s:.4f} >= {m:.4f} >= {q:.4f}" for T, (s, m, q) in minima.items())
    assert criterion(6, ordered and growing, f"{detail}; single-seq gaps {[round(g, 4) for g in gaps_seq]}")


def test_criterion_07_oracle_equivalence(criterion):
    cfg = make_config()
    mc = McSpec(paths=1_000_000, seed=20240601)
    t0 = time.perf_counter()
    worst_z, n = 0.0, 0
    for tau in (5, 10, 15):
        sample = simulate_paths(cfg, Single(tau), mc)
        for y in (1.0, 1.3602, 1.8):
            split = scenario_split(cfg, tau, y)
            analytic = dict(
                no_call=split.p_no_call, pre_ok_no_call=split.pre_ok_no_call, post_ok_no_call=split.post_ok_no_call,
                pre_ok_call=split.pre_ok_call, post_ok_call=split.post_ok_call,
            )
            events = component_events(cfg, sample, y)
            checks = [(analytic[c], _frequency(events[c], sample.pair)) for c in COMPONENTS]
            checks.append((exceed_prob_single(cfg, tau, y, EXACT), estimate_exceed_prob(cfg, Single(tau), y, mc, sample)))
            for value, est in checks:
                z = abs(value - est.value) / est.std_error if est.std_error > 0 else (0.0 if value == est.value else math.inf)
                worst_z = max(worst_z, z)
                n += 1
    elapsed = time.perf_counter() - t0
    ok = worst_z <= 4.0 and elapsed <= 120.0
    assert criterion(7, ok, f"{n} comparisons, max |z| = {worst_z:.2f}, {elapsed:.1f}s")


def test_criterion_08_total_probability(criterion):
    start, dt, sigma = 1.0, 10.0, 0.2
    sd = sigma * math.sqrt(dt)
    worst = 0.0
    for c in np.linspace(1.05, 3.0, 10):
        f = lambda b: bridge_exceed(start, b, c, dt, sigma) * normal_pdf(b, start, sd)
        total = integrate(f, start - 10 * sd, start + 10 * sd, rel_tol=1e-10, breakpoints=[c])
        worst = max(worst, abs(total - running_max_exceed_prob(start, c, dt, sigma)))
    assert criterion(8, worst <= 1e-6, f"10 barriers, max |diff| = {worst:.2e}")


def test_criterion_09_scale_invariance(criterion):
    base = make_config()
    worst, same_argmin = 0.0, True
    tau_base = optimize_single(base, PINNED).times
    for lam in (0.5, 2.0, 10.0):
        scaled = make_config(v0=lam, sigma=0.2 * lam)
        for tau in (1, 5, 10, 15, 23):
            for y in (0.5, 1.3602, 2.0):
                for mode in (PAPER, EXACT):
                    a = exceed_prob_single(base, tau, y, mode)
                    b = exceed_prob_single(scaled, tau, lam * y, mode)
                    worst = max(worst, abs(a - b))
        same_argmin &= optimize_single(scaled, PINNED).times == tau_base
    assert criterion(9, worst <= 1e-10 and same_argmin, f"max |diff| = {worst:.1e}, argmin preserved: {same_argmin}")


def test_criterion_10_inversion(criterion):
    cfg = make_config()
    tol = cfg.numerics.root_abs_tol
    ok_grid = True
    for mode in (PAPER, EXACT):
        for tau in range(1, cfg.maturity):
            y = pfe_single(cfg, tau, mode)
            ok_grid &= exceed_prob_single(cfg, tau, y, mode) <= cfg.q + 1e-12
            ok_grid &= exceed_prob_single(cfg, tau, y - tol, mode) >= cfg.q - 1e-12
    rng = np.random.default_rng(10)
    short = make_config(sigma=0.1, maturity=12)
    worst = 0.0
    for x, tau1, q in zip(rng.uniform(0.5, 2.0, 100), rng.integers(1, 11, 100), rng.uniform(0.001, 0.5, 100)):
        y = pre_segment_pfe(short, int(tau1), x, q=q)
        if y > 0:
            worst = max(worst, abs(bridge_exceed(short.v0, x, y + short.c0, int(tau1), short.sigma) - q))
    ok = ok_grid and worst <= 1e-10
    assert criterion(10, ok, f"grid identity holds: {bool(ok_grid)}; pre-segment max |diff| = {worst:.1e}")


def test_criterion_11_determinism(criterion, tmp_path, capsys):
    outs = []
    for i in range(2):
        path = tmp_path / f"report{i}.json"
        main(["validate", "--paths", "200000", "--seed", "77", "--taus", "5,10", "--format", "json", "--out", str(path)])
        outs.append(path.read_bytes())
    capsys.readouterr()
    identical = outs[0] == outs[1]
    cfg = make_config()
    one = estimate_exceed_prob(cfg, Single(10), 1.3602, McSpec(paths=300_000, seed=5, block_size=8192))
    four = estimate_exceed_prob(cfg, Single(10), 1.3602, McSpec(paths=300_000, seed=5, block_size=8192, workers=4))
    invariant = one == four
    report = json.loads(outs[0])
    assert criterion(11, identical and invariant,
                     f"reports identical: {identical} ({len(report['rows'])} rows); workers 1 vs 4 equal: {invariant}")
