"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``.  The full suite takes
several minutes on one core; criteria 8 and 9 dominate.
"""

import json
import math
import os
from collections import Counter

import numpy as np
import pytest

from sectormc import oracle
from sectormc.codes import build_ising_torus, build_toric_4d
from sectormc.decoder import classify_residual
from sectormc.dynamics import BlockEngine, ChainState, ExactBlockSampler, WormBlockSampler, make_rng, \
    syndrome_trajectory
from sectormc.experiments import ExperimentConfig, run_experiment
from sectormc.worm import (BlockGraph, complete_graph, cycle_graph, exact_even_distribution, sample_even_subgraph,
                           torus_graph, worm_kernel)

BETAS = (0.5, 1.0, 2.0)
ISING3 = build_ising_torus(3)
ISING4 = build_ising_torus(4)

with open(os.path.join(os.path.dirname(__file__), "fixtures", "acceptance.json"), encoding="utf-8") as fh:
    FIXTURE = json.load(fh)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
        assert ok, detail
    return emit


def _l1(emp: Counter, total: int, states, probs) -> float:
    seen = set(states)
    miss = sum(v for k, v in emp.items() if k not in seen) / total
    return float(sum(abs(emp.get(s, 0) / total - p) for s, p in zip(states, probs))) + miss


def test_criterion_01_exact_stationarity(report):
    worst = {}
    for beta in BETAS:
        pi = oracle.exact_gibbs(ISING3, beta)
        labels, K = oracle.exact_kernel(ISING3, beta, "syndrome")
        p = np.array([pi[s] for s in labels])
        worst[("syndrome", beta)] = oracle.stationarity_defect(p, K)
        for L in (1, 2):
            labels, K = oracle.exact_kernel(ISING3, beta, "block", L)
            p = np.array([pi[s] for s in labels])
            keep = oracle.reach_set(K, labels.index(0))
            worst[(f"block L={L}", beta)] = oracle.stationarity_defect(oracle.restricted_target(p, keep), K)
    top = max(worst.values())
    report(1, "exact stationarity (3x3, syndrome + block L=1,2)", top <= 1e-10, f"max defect {top:.2e}")


def test_criterion_02_detailed_balance(report):
    worst, sizes = 0.0, {}
    for beta in BETAS:
        pi = oracle.exact_gibbs(ISING3, beta)
        for L in (1, 2):
            labels, K = oracle.exact_kernel(ISING3, beta, "block", L)
            p = np.array([pi[s] for s in labels])
            keep = oracle.reach_set(K, labels.index(0))
            sizes[L] = len(keep)
            worst = max(worst, oracle.detailed_balance_defect(p, K, keep))
    report(2, "detailed balance on the reach set", worst <= 1e-10,
           f"max defect {worst:.2e}; reach sizes L=1: {sizes[1]}, L=2: {sizes[2]}")


def test_criterion_03_sampling_vs_exact(report):
    pi = oracle.exact_gibbs(ISING3, 1.0)
    st = ChainState.ground(ISING3, 3)
    steps = 10**6
    traj = syndrome_trajectory(st, 1.0, steps)
    dist = _l1(Counter(traj.tolist()), steps, pi.states, pi.probs)
    report(3, "syndrome chain vs exact Gibbs (3x3, beta=1, 1e6 steps)", dist <= 0.02, f"L1 distance {dist:.4f}")


def test_criterion_04_worm(report):
    dists = {}
    for name, g in (("C4", cycle_graph(4)), ("3x3 torus", torus_graph(3))):
        ex = exact_even_distribution(g, 1.0)
        keys = sample_even_subgraph(g, 1.0, 1000, 1, make_rng(4), 10**6)
        dists[name] = _l1(Counter(keys.tolist()), 10**6, ex.states, ex.probs)
    small = [cycle_graph(4), complete_graph(4), cycle_graph(10),
             BlockGraph(5, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2), (0, 3)])]
    stat = 0.0
    for g in small:
        for beta in BETAS:
            states, pi, K = worm_kernel(g, beta)
            stat = max(stat, float(np.abs(pi @ K - pi).sum()))
    ok = max(dists.values()) <= 0.05 and stat <= 1e-10
    report(4, "worm sampler", ok, ", ".join(f"{k} L1 {v:.4f}" for k, v in dists.items())
           + f"; kernel stationarity {stat:.2e}")


def test_criterion_05_sampler_cross_validation(report):
    code = build_toric_4d(3).x_sector
    star = [c for c in range(code.m) if 0 in code.metacheck_incidence[c]]
    B = sorted(code.network.ball(star, 1))
    ex = ExactBlockSampler(code, B, 2.0, max_dim=24)
    wm = WormBlockSampler(code, B, 2.0)
    weights = np.left_shift(np.uint64(1), np.arange(len(B), dtype=np.uint64))
    n = 10**5
    zero = np.zeros(len(B), dtype=np.uint8)
    rng = make_rng(5, 0)
    a = Counter(int((ex.draw(zero, rng).astype(np.uint64) * weights).sum()) for _ in range(n))
    rng = make_rng(5, 1)
    b, cur = Counter(), zero
    for _ in range(n):
        cur = wm.draw(cur, rng)
        b[int((cur.astype(np.uint64) * weights).sum())] += 1
    dist = sum(abs(a[k] - b[k]) for k in set(a) | set(b)) / n
    lit = sorted(code.network.ball([0], 1))
    lit_dim = ExactBlockSampler(code, lit, 2.0).dim
    report(5, "worm vs exact block sampler (4D w=3 X sector, beta=2)", dist <= 0.05,
           f"L1 {dist:.4f} over {len(B)} checks (dim {ex.dim}); single-check ball dim {lit_dim}")


def test_criterion_06_peierls(report):
    worst, count = 0.0, 0
    for code in (ISING3, ISING4):
        for V in oracle.erasable_subsets(code, 8):
            for beta in BETAS:
                lhs, rhs = oracle.peierls_check(code, beta, [i for i in range(code.m) if (V >> i) & 1])
                worst = max(worst, lhs / rhs)
                count += 1
    report(6, "Peierls inequality (3x3, 4x4, |V|<=8)", worst <= 1.0, f"{count} checks, max lhs/rhs {worst:.4f}")


def test_criterion_07_markov(report):
    A = [1, 9, 17, 25]
    B = [2 * (x * 4 + y) for x in range(4) for y in (0, 1)]
    C = [c for c in range(ISING4.m) if c not in A and c not in B]
    cond = max(oracle.markov_property_check(ISING4, beta, A, B, C, eras=True) for beta in BETAS)
    ctrl = oracle.markov_property_check(ISING4, 0.5, A, B, C, eras=False)
    report(7, "Markov property with annular screen (4x4)", cond <= 1e-12 and ctrl > 1e-3,
           f"conditioned defect {cond:.2e}; unconditioned control {ctrl:.2e}")


def _sector_trajectories(code, mode, replicas, steps, every):
    logical_clean, logical_any, guards, checkpoints = 0, 0, 0, 0
    for r in range(replicas):
        eng = BlockEngine(code, 2, 2.0, mode)
        st = ChainState.ground(code, 8, r)
        for _ in range(steps // every):
            eng.run(st, every)
            verdict = classify_residual(code, st.error.bits).kind
            checkpoints += 1
            if verdict == "logical":
                logical_any += 1
                logical_clean += eng.guard_violations == 0
        guards += eng.guard_violations
    return logical_clean, logical_any, guards, checkpoints


def test_criterion_08_sector_preservation(report):
    i16 = _sector_trajectories(build_ising_torus(16), "exact", 100, 10**4, 1000)
    t4d = _sector_trajectories(build_toric_4d(3).x_sector, "worm", 100, 10**4, 1000)
    ok = i16[0] == 0 and t4d[0] == 0
    report(8, "no logical residual at guard-clean checkpoints", ok,
           f"16x16: {i16[3]} checkpoints, logical {i16[1]}, guard aborts {i16[2]}; "
           f"4D X sector: {t4d[3]} checkpoints, logical {t4d[1]}, guard aborts {t4d[2]}")


def test_criterion_09_dichotomy(report):
    fx = FIXTURE["dichotomy"]
    cfg = ExperimentConfig(experiment="dichotomy", seed=fx["seed"], code={"code": "ising2d", "side": 16}, beta=[2.0],
                           chain="block", L=2, replicas=10, times=[round(0.25 * k, 2) for k in range(41)],
                           params={"reference_replicas": 10, "reference_sweeps": 10**6, "glauber_replicas": 100})
    s = run_experiment(cfg).summary
    crossing, calm = s["crossing_sweeps"], s["glauber_replicas_without_flip"]
    ok = math.isfinite(crossing) and crossing == fx["crossing_sweeps"] and calm >= 95
    report(9, "block reaches the energy band while Glauber stays in sector", ok,
           f"crossing {crossing} sweeps (fixture {fx['crossing_sweeps']}); "
           f"{calm}/100 Glauber replicas without a majority flip; band {s['band']}")


def test_criterion_10_escape_trend(report):
    cfg = ExperimentConfig(experiment="escape", seed=10, code={"code": "ising2d", "side": 12}, beta=[0.8, 1.2, 1.6],
                           chain="block", L=2, R=6, replicas=100, times=[1.0, 10.0, 100.0],
                           params={"max_sweeps": 500})
    by = run_experiment(cfg).summary["by_beta"]
    meds = [by[repr(b)]["median"] for b in (0.8, 1.2, 1.6)]
    ok = meds[0] < meds[1] < meds[2]
    report(10, "median escape time from small-loop states (12x12, R=6)", ok,
           "medians " + ", ".join(f"{m:.3g}" for m in meds) + " sweeps")


def test_criterion_11_ssm(report):
    exact = run_experiment(ExperimentConfig(experiment="ssm", seed=11, code={"code": "ising2d", "side": 4},
                                            beta=[2.0], params={"mode": "exact", "region": "pair"}))
    vals = [r["discrepancy"] for r in exact.rows]
    mono = all(b <= a for a, b in zip(vals, vals[1:]))
    sampled = run_experiment(ExperimentConfig(
        experiment="ssm", seed=11, code={"code": "ising2d", "side": 8, "width": 32}, beta=[1.5, 2.5],
        params={"mode": "sampled", "sweeps": 200000, "batches": 20, "burn_sweeps": 2000, "max_distance": 8}))
    slopes = sampled.summary["slopes"]
    ok = mono and slopes["2.5"] < slopes["1.5"]
    report(11, "spatial mixing decay", ok,
           "exact 4x4 discrepancies " + ", ".join(f"{v:.2e}" for v in vals)
           + f"; strip slopes beta=1.5: {slopes['1.5']:.3f}, beta=2.5: {slopes['2.5']:.3f}")


SMALL_RUNS = [
    dict(experiment="mixing", code={"code": "ising2d", "side": 3}, beta=[1.0], times=[0, 1, 5]),
    dict(experiment="mixing", code={"code": "ising2d", "side": 6}, beta=[1.0], times=[0, 2], replicas=3,
         params={"reference_replicas": 3, "reference_sweeps": 5}),
    dict(experiment="memory", code={"code": "toric4d", "w": 3}, beta=[2.0], times=[0.2, 0.5], replicas=2,
         sampler_mode="worm"),
    dict(experiment="escape", code={"code": "ising2d", "side": 8}, beta=[0.8], R=4, replicas=3, times=[1],
         params={"max_sweeps": 20}),
    dict(experiment="lcc_tail", code={"code": "ising2d", "side": 3}, beta=[1.0], params={"samples": 500}),
    dict(experiment="lcc_tail", code={"code": "ising2d", "side": 6}, beta=[1.0],
         params={"sampler": "syndrome", "samples": 50, "ell_max": 6}),
    dict(experiment="ssm", code={"code": "ising2d", "side": 3}, beta=[1.0]),
    dict(experiment="ssm", code={"code": "ising2d", "side": 6}, beta=[1.0],
         params={"mode": "sampled", "sweeps": 2000, "batches": 4, "burn_sweeps": 100}),
    dict(experiment="surface", code={"code": "ising2d", "side": 8}, beta=[1.0],
         params={"r": [2, 3], "trials": 5, "burn_sweeps": 5}),
    dict(experiment="dichotomy", code={"code": "ising2d", "side": 6}, beta=[1.0], replicas=2,
         times=[0, 1, 2, 3, 4], params={"reference_replicas": 2, "reference_sweeps": 100,
                                        "reference_window": 100, "glauber_replicas": 3}),
]


def test_criterion_12_reproducibility(report):
    same = []
    for spec in SMALL_RUNS:
        cfg = ExperimentConfig(seed=12, **spec).validate()
        a = run_experiment(cfg).csv_text().encode()
        b = run_experiment(ExperimentConfig.from_flat(cfg.to_flat()), threads=2).csv_text().encode()
        same.append(a == b)
    report(12, "byte-identical reruns", all(same),
           f"{sum(same)}/{len(same)} experiment configs identical across reruns")
