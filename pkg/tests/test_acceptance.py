"""Acceptance suite: twelve end-to-end criteria at their stated tolerances.

Each criterion prints one PASS/FAIL line.  Run directly for a compact report:

    python3 tests/test_acceptance.py
"""
import itertools
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import networkx as nx
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from oracles import (  # noqa: E402
    grid_center_sets,
    grid_costs,
    induced_min_cuts,
    l1_grid_max,
    strong_connectivity_bruteforce,
    three_blobs,
)
from robust_stream import harness  # noqa: E402
from robust_stream.cli import main as cli_main  # noqa: E402
from robust_stream.coreset import ClusteringConfig, CoresetTree, passthrough  # noqa: E402
from robust_stream.graph import (  # noqa: E402
    SparsifierConfig,
    StreamingSparsifier,
    cut_value,
    sparsifier_check,
    strong_connectivity,
)
from robust_stream.linalg import WeightedRowBuffer, l1_sensitivity, spectral_sandwich_check  # noqa: E402
from robust_stream.sampler import RowSampler, SamplerConfig  # noqa: E402

SEEDS = range(20)


# 1 and 3 share runs

def _oblivious_runs():
    d, out = 8, []
    for seed in SEEDS:
        g = np.random.default_rng(seed)
        A = np.vstack([10 * np.eye(d), g.standard_normal((500, d))])
        s = RowSampler(SamplerConfig(dim=d, n_bound=len(A), p=2, eps=0.5, C=40, seed=seed))
        ok = True
        for t, a in enumerate(A, 1):
            s.process_row(a)
            if t % 50 == 0 or t == len(A):
                ok &= spectral_sandwich_check(A[:t], s.current_embedding(), 0.5)
        out.append((ok, s))
    return out


_CACHE = {}


def _runs1():
    if "c1" not in _CACHE:
        t0 = time.perf_counter()
        runs = _oblivious_runs()
        _CACHE["c1"] = (runs, time.perf_counter() - t0)
    return _CACHE["c1"]


def criterion_1():
    runs, secs = _runs1()
    passed = sum(ok for ok, _ in runs)
    return passed >= 19 and secs <= 10, f"{passed}/20 seeds pass every 50-round check, {secs:.1f}s"


def criterion_2():
    passed, first_ok = 0, True
    for seed in SEEDS:
        s = RowSampler(SamplerConfig(dim=5, n_bound=200, eps=0.5, C=40, seed=seed))
        alg = harness.SamplerAlgorithm(s)
        rows, probs, ok = [], [], True

        def ev(t, u, resp):
            nonlocal ok
            rows.append(u)
            probs.append(alg.last_decision.prob)
            if (t + 1) % 50 == 0:
                ok &= spectral_sandwich_check(np.array(rows), resp, 0.5)
            return {}

        harness.run_game(alg, harness.OrthogonalProbeAdversary(5, 1000 + seed), 200, ev, seed, 1000 + seed)
        first_ok &= probs[:5] == [1.0] * 5
        passed += ok
    return passed >= 19 and first_ok, f"{passed}/20 seeds, rounds 1-5 prob==1: {first_ok}"


def criterion_3():
    runs, _ = _runs1()
    worst_count, worst_tau = 0.0, 0.0
    ok = True
    for _, s in runs:
        b = s.sample_budget()
        bound_tau = 10 * s.config.dim * math.log(s.kappa_online)
        ok &= b["sampled"] <= s.alpha * b["tau_sum"] * 1.5 and b["tau_sum"] <= bound_tau
        worst_count = max(worst_count, b["sampled"] / (s.alpha * b["tau_sum"] * 1.5))
        worst_tau = max(worst_tau, b["tau_sum"] / bound_tau)
    return ok, f"max count/(1.5 alpha sum tau)={worst_count:.3g}, max sum tau/(10 d ln kappa)={worst_tau:.3f}"


def criterion_4():
    t0 = time.perf_counter()
    passed = 0
    for seed in SEEDS:
        g = np.random.default_rng(seed)
        A = g.standard_normal((300, 3)) @ np.diag([1.0, 2.0, 4.0])
        sv = np.linalg.svd(A, compute_uv=False)
        assert sv[0] / sv[-1] <= 10
        s = RowSampler(SamplerConfig(dim=3, n_bound=300, p=1, eps=0.5, seed=seed))
        for a in A:
            s.process_row(a)
        M = s.current_embedding().matrix()
        X = g.standard_normal((3, 1000))
        ax = np.abs(A @ X).sum(0)
        passed += bool(np.all(np.abs(np.abs(M @ X).sum(0) - ax) <= 0.5 * ax))
    worst = 0.0
    g = np.random.default_rng(12345)
    for _ in range(50):
        m = int(g.integers(3, 8))
        rows, w, a = g.standard_normal((m, 3)), g.uniform(0.5, 2.0, m), g.standard_normal(3)
        lp = l1_sensitivity(WeightedRowBuffer.from_rows(rows, w), a)
        worst = max(worst, abs(lp - l1_grid_max(w[:, None] * rows, a, coarse=150)))
    secs = time.perf_counter() - t0
    ok = passed >= 18 and worst <= 1e-3 and secs <= 60
    return ok, f"{passed}/20 seeds, max |LP - grid|={worst:.2e}, {secs:.1f}s"


def criterion_5():
    passed = 0
    for seed in SEEDS:
        g = np.random.default_rng(seed)
        A = g.standard_normal((500, 2)) @ g.standard_normal((2, 6)) + 0.01 * g.standard_normal((500, 6))
        s = RowSampler(SamplerConfig(dim=6, n_bound=500, eps=0.5, mode="ridge", k=2, seed=seed))
        for a in A:
            s.process_row(a)
        P = s.low_rank().projection
        tail = float((np.linalg.svd(A, compute_uv=False)[2:] ** 2).sum())
        passed += np.linalg.norm(A - A @ P) ** 2 <= 1.5 * tail
    return passed >= 18, f"{passed}/20 seeds within 1.5x SVD tail"


def criterion_6():
    passed, worst = 0, 0.0
    for seed in SEEDS:
        r = harness.run_regression_flip(harness.FlipConfig(seed_algorithm=seed, seed_adversary=500 + seed)).summary
        passed += r["max_robust_rel_error"] <= 0.1 and r["baseline_post_batch_error"] > 0.5
        worst = max(worst, r["max_robust_rel_error"])
    return passed >= 18, f"{passed}/20 seed pairs, worst robust rel error {worst:.2e}"


def criterion_7():
    passed = 0
    for seed in SEEDS:
        r = harness.run_distant_cluster(harness.ClusterAttackConfig(seed_algorithm=seed, seed_adversary=500 + seed))
        passed += r.summary["robust_far_distance"] <= 3 and r.summary["baseline_max_origin_distance"] <= 3
    return passed >= 18, f"{passed}/20 seed pairs"


def criterion_8():
    passed, ratios = 0, []
    for seed in SEEDS:
        r = harness.run_sketch_attack(harness.SketchAttackConfig(seed_algorithm=seed, seed_adversary=500 + seed))
        s = r.summary
        assert s["sketch_residual"] <= 1e-9 * s["max_abs_A"]
        passed += s["loss_ratio"] >= 10
        ratios.append(s["loss_ratio"])
    return passed >= 18, f"{passed}/20 seeds, min loss ratio {min(ratios):.1f}"


def criterion_9():
    detail, ok = [], True
    for z in (1, 2):
        passed = 0
        for seed in SEEDS:
            X = three_blobs(1024, seed)
            grid, triples = grid_center_sets(X, 3)
            full = grid_costs(X, np.ones(len(X)), grid, triples, z)
            tree = CoresetTree(ClusteringConfig(k=3, z=z, eps=0.3, n_bound=1024, seed=seed))
            for x in X:
                tree.insert(x)
            q = tree.query()
            passed += bool(np.all(np.abs(grid_costs(q.coords, q.weights, grid, triples, z) / full - 1) <= 0.3))
        ok &= passed >= 18
        detail.append(f"z={z}: {passed}/20")
    X = three_blobs(1024, 0)
    grid, triples = grid_center_sets(X, 3)
    tree = CoresetTree(ClusteringConfig(k=3, n_bound=1024), reducer=passthrough)
    for x in X:
        tree.insert(x)
    q = tree.query()
    exact = np.array_equal(np.sort(q.coords, axis=0), np.sort(X, axis=0)) and np.all(q.weights == 1)
    exact &= np.allclose(grid_costs(q.coords, q.weights, grid, triples, 2), grid_costs(X, np.ones(1024), grid, triples, 2),
                         rtol=1e-12)
    ok &= bool(exact)
    return ok, f"{', '.join(detail)} over {len(triples)} center triples, passthrough exact: {bool(exact)}"


def _er(n, p, seed):
    g = np.random.default_rng(seed)
    return [(u, v, 1.0) for u, v in itertools.combinations(range(n), 2) if g.random() < p]


def criterion_10():
    t0 = time.perf_counter()
    counts = {}
    for name in ("K20", "ER(20,0.5)"):
        passed = 0
        for seed in SEEDS:
            edges = _er(20, 1.0, seed) if name == "K20" else _er(20, 0.5, seed)
            order = np.random.default_rng(1000 + seed).permutation(len(edges))
            edges = [edges[i] for i in order]
            sp = StreamingSparsifier(SparsifierConfig(n=20, m_bound=len(edges), eps=0.5, seed=seed))
            for e in edges:
                sp.process_edge(e)
            chk = sparsifier_check(edges, sp.graph(), 0.5, 20)
            assert chk.exhaustive and chk.cuts_checked == 2**19 - 1
            passed += chk.ok
        counts[name] = passed
    atlas_ok, checked = True, 0
    for G in nx.graph_atlas_g()[1:]:
        if G.number_of_edges() == 0:
            continue
        n = G.number_of_nodes()
        edges = [(u, v, 1.0) for u, v in G.edges()]
        cuts = induced_min_cuts(n, edges)
        for u, v, _ in edges:
            atlas_ok &= strong_connectivity(edges, u, v) == strong_connectivity_bruteforce(n, edges, u, v, cuts)
            checked += 1
    secs = time.perf_counter() - t0
    ok = all(c >= 18 for c in counts.values()) and atlas_ok and secs <= 300
    return ok, f"{counts}, connectivity == brute force on {checked} edges: {atlas_ok}, {secs:.1f}s"


def criterion_11():
    G = [(0, 1, 1.0), (0, 2, 2.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.5), (3, 4, 1.0),
         (2, 4, 1.0), (4, 5, 2.0), (3, 5, 1.0), (0, 5, 1.0), (1, 4, 1.0)]
    side = {0, 1, 2}
    target = cut_value(G, side, 6)
    total, subsampled = 0.0, 0
    for seed in range(10_000):
        sp = StreamingSparsifier(SparsifierConfig(n=6, m_bound=len(G), rho=1.0, seed=seed))
        kept = [sp.process_edge(e) for e in G]
        subsampled += not all(kept)
        total += cut_value(sp.graph(), side, 6)
    mean = total / 10_000
    rel = abs(mean - target) / target
    return rel <= 0.02, f"mean {mean:.4f} vs {target:.4f} (rel {rel:.4f}), {subsampled}/10000 runs dropped an edge"


def _write_inputs(d: Path):
    g = np.random.default_rng(0)
    np.savetxt(d / "rows.csv", np.vstack([10 * np.eye(4), g.standard_normal((60, 4))]), delimiter=",")
    X = g.standard_normal((60, 3))
    np.savetxt(d / "reg.csv", np.column_stack([X, X @ [1.0, 2.0, 3.0] + 0.1 * g.standard_normal(60)]), delimiter=",")
    np.savetxt(d / "pts.csv", three_blobs(300, 0), delimiter=",")
    E = _er(12, 0.6, 0)
    (d / "g.txt").write_text(f"12 {len(E)}\n" + "".join(f"{u} {v} {w}\n" for u, v, w in E))


COMMANDS = [
    ["embed", "--input", "../rows.csv", "--C", "0.5"],
    ["regress", "--input", "../reg.csv"],
    ["lowrank", "--input", "../rows.csv", "--k", "2", "--C", "0.5"],
    ["coreset", "--input", "../pts.csv", "--k", "3", "--leaf-size", "64"],
    ["sparsify", "--input", "../g.txt", "--rho-C", "0.3"],
    ["attack", "--scenario", "regression-flip", "--L", "auto"],
    ["attack", "--scenario", "distant-cluster", "--batches", "10"],
    ["attack", "--scenario", "sketch-null", "--batches", "10", "--batch-size", "50"],
    ["attack", "--scenario", "orthogonal-probe", "--dim", "4", "--batch-size", "40", "--trials", "2"],
]


def _snapshot(d: Path) -> dict:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def criterion_12():
    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        _write_inputs(tmp)
        cwd = os.getcwd()
        try:
            for i, cmd in enumerate(COMMANDS):
                snaps = []
                for rep in ("a", "b"):
                    run = tmp / f"{i}{rep}"
                    run.mkdir()
                    os.chdir(run)
                    code = cli_main(cmd + ["--seed", "3", "--out", "out"])
                    if code == 2:
                        bad.append(f"{cmd[0]} exit 2")
                    snaps.append(_snapshot(run / "out"))
                if not snaps[0] or snaps[0] != snaps[1]:
                    bad.append(" ".join(cmd[:3]))
        finally:
            os.chdir(cwd)
    return not bad, f"{len(COMMANDS)} invocations byte-identical" if not bad else f"mismatch: {bad}"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}


@pytest.mark.parametrize("number", list(CRITERIA))
def test_criterion(number, capsys):
    ok, detail = CRITERIA[number]()
    with capsys.disabled():
        print(f"\ncriterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for number, fn in CRITERIA.items():
        ok, detail = fn()
        failed += not ok
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    sys.exit(1 if failed else 0)
