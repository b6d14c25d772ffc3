"""Acceptance suite: one pass/fail line per criterion.

Run with pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import json
import os
import re
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from crisk.conditional import cond_dual_norm, cond_norm
from crisk.diagnostics import BlockPolytope, james_check, simons_check
from crisk.duality import (admissible_blocks, attainment_check, conjugate, represent, sample_admissible,
                           scalar_conjugate_identity_check, weights_from_dual)
from crisk.l0 import EventuallyPeriodicSeq
from crisk.measure_algebra import SubAlgebra
from crisk.risk import AVaR, EntropicRisk, WorstCaseRisk, check_axioms

from conftest import ACCEPTANCE_LINES, ROOT, bounded_polytope, random_alg, unbounded_polyhedron
from oracles import block_weights, dual_norm_l2_grid, dual_norm_linf_lp, entropic_representation_grid, kl

SEED = 20240601
SPACES = [random_alg(np.random.default_rng([SEED, k]), n_max=12, m_max=4) for k in range(20)]


def measures(alg):
    return ([EntropicRisk(alg, g) for g in (0.5, 1.0, 2.0)] + [WorstCaseRisk(alg)]
            + [AVaR(alg, lam) for lam in (0.25, 0.5, 1.0)])


def record(k: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)
    assert ok, line


def test_criterion_1_axioms():
    start = time.perf_counter()
    failures, worst = [], {}
    for s, alg in enumerate(SPACES):
        for rho in measures(alg):
            rep = check_axioms(rho, trials=1000, seed=s)
            for name, r in rep.results.items():
                worst[name] = max(worst.get(name, 0.0), r.worst_violation)
            if not rep.passed:
                failures.append((s, repr(rho), rep.failed_axioms()))
    elapsed = time.perf_counter() - start
    ok = not failures and worst["cash_invariance"] <= 1e-12 and worst["convexity"] <= 1e-10 and elapsed < 5.0
    record(1, ok, f"axioms on 20 spaces x 7 measures x 1000 trials in {elapsed:.2f}s; "
                  f"cash {worst['cash_invariance']:.1e}, convexity {worst['convexity']:.1e}, failures {failures[:3]}")


def test_criterion_2_representation():
    rng = np.random.default_rng(SEED + 2)
    worst_gap, worst_grid, blocks_checked = 0.0, 0.0, 0
    for alg in SPACES:
        x = rng.uniform(-10, 10, alg.n)
        for rho in measures(alg):
            rep = represent(rho, x)
            worst_gap = max(worst_gap, float(rep.gap.max()))
            if isinstance(rho, EntropicRisk):
                for b in range(alg.m):
                    idx, pbar = block_weights(alg, b)
                    if len(idx) <= 3:
                        val, _ = entropic_representation_grid(-x[idx], pbar, rho.gamma, step=1e-3)
                        worst_grid = max(worst_grid, abs(rep.value[b] - val))
                        blocks_checked += 1
    ok = worst_gap <= 1e-7 and worst_grid <= 1e-3 and blocks_checked > 0
    record(2, ok, f"max gap {worst_gap:.1e} (<= 1e-7); entropic vs simplex grid on {blocks_checked} blocks "
                  f"max diff {worst_grid:.1e} (<= 1e-3)")


def test_criterion_3_conjugate():
    rng = np.random.default_rng(SEED + 3)
    worst, mismatched = 0.0, 0
    for t in range(100):
        alg = SPACES[t % len(SPACES)]
        gamma = float(rng.choice([0.5, 1.0, 2.0]))
        rho = EntropicRisk(alg, gamma)
        y = sample_admissible(alg, rng)
        got = conjugate(rho, y)
        w = weights_from_dual(alg, y)
        want = [kl(w[idx], pbar) / gamma for idx, pbar in (block_weights(alg, b) for b in range(alg.m))]
        worst = max(worst, float(np.max(np.abs(got - want))))
        # break admissibility on random blocks: +inf must appear exactly there
        bad = rng.random(alg.m) < 0.5
        z = y.copy()
        for b in np.flatnonzero(bad):
            idx = list(alg.blocks[b])
            z[idx] = z[idx] * 1.3 if rng.random() < 0.5 else z[idx] + 0.5
        assert np.array_equal(~admissible_blocks(alg, z), bad)
        mismatched += int(not np.array_equal(np.isinf(conjugate(rho, z)), bad))
    record(3, worst <= 1e-9 and mismatched == 0,
           f"100 admissible y: max |conj - KL/gamma| {worst:.1e} (<= 1e-9); +inf placement mismatches {mismatched}")


def test_criterion_4_attainment():
    rng = np.random.default_rng(SEED + 4)
    worst, unattained, non_vertex = 0.0, 0, 0
    for alg in SPACES:
        x = rng.uniform(-10, 10, alg.n)
        for rho in measures(alg):
            res = attainment_check(rho, x, tol=1e-8)
            worst = max(worst, float(res.residual.max()))
            unattained += int((~res.attained).sum())
            if isinstance(rho, WorstCaseRisk):
                w = weights_from_dual(alg, res.witness)
                for b in alg.blocks:
                    # off-vertex mass must be exactly zero; the atom carries pbar * (1 / pbar)
                    wb = np.sort(w[list(b)])
                    non_vertex += int(not (abs(wb[-1] - 1.0) <= 1e-12 and np.all(wb[:-1] == 0.0)))
    record(4, worst <= 1e-8 and unattained == 0 and non_vertex == 0,
           f"max witness residual {worst:.1e} (<= 1e-8); unattained blocks {unattained}; "
           f"worst-case non-vertex witnesses {non_vertex}")


def test_criterion_5_isometry():
    rng = np.random.default_rng(SEED + 5)
    worst_iso, worst_oracle, oracle_blocks = 0.0, 0.0, 0
    for t in range(200):
        alg = SPACES[t % len(SPACES)]
        y = rng.normal(size=alg.n) * 3
        for q in (2.0, np.inf):
            d = cond_dual_norm(alg, y, q)
            worst_iso = max(worst_iso, float(np.max(np.abs(d - cond_norm(alg, y, q)))))
            if t < 40:
                for b in range(alg.m):
                    idx, pbar = block_weights(alg, b)
                    if len(idx) <= 3:
                        ref = dual_norm_l2_grid(y[idx], pbar) if q == 2.0 else dual_norm_linf_lp(y[idx], pbar)
                        worst_oracle = max(worst_oracle, abs(d[b] - ref))
                        oracle_blocks += 1
    ok = worst_iso <= 1e-8 and worst_oracle <= 1e-8 and oracle_blocks > 0
    record(5, ok, f"200 y, q in {{2, inf}}: max |dual - norm| {worst_iso:.1e}; vs grid/LP oracle on "
                  f"{oracle_blocks} blocks max diff {worst_oracle:.1e} (<= 1e-8)")


def test_criterion_6_james():
    rng = np.random.default_rng(SEED + 6)
    start = time.perf_counter()
    bounded_bad, unbounded_bad, discrepancies = 0, 0, 0
    for _ in range(50):
        blocks = tuple(bounded_polytope(rng, int(rng.integers(2, 4)), bool(rng.random() < 0.5))
                       for _ in range(int(rng.integers(1, 4))))
        K = BlockPolytope(blocks)
        rep = james_check(K, rng.normal(size=(100, sum(b.dim for b in blocks))))
        bounded_bad += int(not (rep.compact and rep.all_attained))
        discrepancies += len(rep.discrepancies)
    for _ in range(20):
        blk, _ = unbounded_polyhedron(rng, int(rng.integers(2, 4)))
        rep = james_check(BlockPolytope((blk,)), rng.normal(size=(100, blk.dim)))
        flagged = sum(not r.attained for r in rep.blocks[0].results)
        unbounded_bad += int(rep.compact or flagged == 0)
        discrepancies += len(rep.discrepancies)
    elapsed = time.perf_counter() - start
    ok = bounded_bad == 0 and unbounded_bad == 0 and discrepancies == 0 and elapsed < 10.0
    record(6, ok, f"50 bounded + 20 unbounded polytopes x 100 functionals in {elapsed:.2f}s; "
                  f"bounded failures {bounded_bad}, unbounded failures {unbounded_bad}, discrepancies {discrepancies}")


def positive_simons_instances(rng):
    """Tables where a point of C dominates every table, so every mixture peaks on C."""
    yield EventuallyPeriodicSeq((), (np.array([0.0, 3.0, 1.0, 3.0]),)), [1, 3]
    yield EventuallyPeriodicSeq(([5.0, 0.0, 0.0],), ([2.0, 1.0, 0.0], [3.0, -1.0, 2.0])), [0]
    for _ in range(20):
        D = int(rng.integers(3, 6))
        star = int(rng.integers(D))
        tables = []
        for _ in range(int(rng.integers(1, 4))):
            t = rng.integers(-5, 5, D).astype(float)
            t[star] = t.max() + float(rng.integers(0, 2))
            tables.append(t)
        others = [i for i in range(D) if i != star]
        C = sorted({star, *rng.choice(others, int(rng.integers(0, 2)), replace=False).tolist()})
        yield EventuallyPeriodicSeq((), tuple(tables)), C


def test_criterion_7_simons():
    rng = np.random.default_rng(SEED + 7)
    nonzero, wrong_verdict, count = 0, 0, 0
    for seq, C in positive_simons_instances(rng):
        rep = simons_check(seq, C)
        count += 1
        nonzero += int(not np.all(rep.residual == 0.0))
        wrong_verdict += int(rep.verdict != "equality")
    violating = simons_check(EventuallyPeriodicSeq((), ([2.0, 0.0, 1.5], [0.0, 2.0, 1.5])), [0, 1])
    ok = nonzero == 0 and wrong_verdict == 0 and violating.verdict == "hypothesis_violation"
    record(7, ok, f"{count} positive instances: nonzero residuals {nonzero}, non-equality verdicts {wrong_verdict}; "
                  f"constructed violation flagged as {violating.verdict!r}")


def test_criterion_8_scalarization():
    worst = 0.0
    for k, alg in enumerate(SPACES[:5]):
        rep = scalar_conjugate_identity_check(EntropicRisk(alg, 1.0), samples=20, seed=SEED + k)
        worst = max(worst, rep.max_residual)
    record(8, worst <= 1e-6, f"entropic, 5 spaces x 20 admissible y: max |E[conj] - scalar conj| {worst:.1e} (<= 1e-6)")


TIMESTAMP = re.compile(r'"timestamp": \{[^{}]*\}')


def test_criterion_9_determinism(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"report{k}.json"
        subprocess.run([sys.executable, "-m", "crisk", "report", "--scenario",
                        str(ROOT / "scenarios" / "four_atom.json"), "--seed", "11", "--out", str(out)],
                       check=True, env={**os.environ, "PYTHONPATH": str(ROOT / "src"), "CRISK_THREADS": str(2 * k + 1)})
        outs.append(out.read_bytes())
    stripped = [TIMESTAMP.sub('"timestamp": null', o.decode()).encode() for o in outs]
    same = stripped[0] == stripped[1]
    items = len(json.loads(outs[0])["result"]["items"])
    record(9, same and items > 0, f"two report runs ({items} items, 1 vs 3 threads) byte-identical "
                                  f"outside the timestamp: {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
