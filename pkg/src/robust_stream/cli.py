"""Command-line front end.

Every run writes ``summary.json`` (full effective configuration plus final
metrics) and one ``round,value`` CSV per metric series into ``--out``.
Exit status: 0 success, 1 algorithm-level warning, 2 error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import harness
from .coreset import ClusteringConfig, CoresetTree, WeightedPoints, kz_cost, lloyd_refine
from .errors import InputError
from .graph import SparsifierConfig, StreamingSparsifier, cut_condition, global_min_cut
from .linalg import spectral_sandwich_check
from .sampler import DEFAULT_C, RowSampler, SamplerConfig

SUBCOMMANDS = ("embed", "regress", "lowrank", "coreset", "sparsify", "attack")
SCENARIOS = ("regression-flip", "distant-cluster", "sketch-null", "orthogonal-probe")
SCENARIO_DEFAULTS = {
    # batches, batch size
    "regression-flip": (20, 50),
    "distant-cluster": (50, 40),
    "sketch-null": (20, 100),
    "orthogonal-probe": (1, 200),
}


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    subcommand: str
    out: str
    input: str | None = None
    eps: float = 0.5
    p: int = 2
    k: int | None = None
    z: int = 2
    C: float | None = None
    n: int | None = None
    n_bound: int | None = None
    leaf_size: int = 256
    delta: float = 0.1
    c0: float = 10.0
    c1: float = 8.0
    rho_C: float = 4.0
    seed: int = 0
    seed_adversary: int = 0
    scenario: str | None = None
    L: float | str | None = None
    batches: int | None = None
    batch_size: int | None = None
    final_batch_size: int = 10
    decay: float = 1.0
    sgd_step: float = 0.01
    sketch_m: int = 60
    dim: int = 10
    trials: int = 1
    checkpoint: str | None = None
    resume: str | None = None


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="robust-stream", description="Adversarially robust streaming algorithms")
    sub = ap.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(sp, needs_input=True):
        sp.add_argument("--out", default="out")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--eps", type=float, default=None)
        if needs_input:
            sp.add_argument("--input", required=True)

    for name in ("embed", "regress", "lowrank"):
        sp = sub.add_parser(name)
        common(sp)
        sp.add_argument("--p", type=int, default=2)
        sp.add_argument("--C", type=float, default=None)
        sp.add_argument("--n-bound", type=int, default=None)
        sp.add_argument("--k", type=int, default=None, required=name == "lowrank")
        sp.add_argument("--checkpoint", default=None)
        sp.add_argument("--resume", default=None)

    sp = sub.add_parser("coreset")
    common(sp)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--z", type=int, default=2)
    sp.add_argument("--leaf-size", type=int, default=256)
    sp.add_argument("--n-bound", type=int, default=None)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--c0", type=float, default=10.0)
    sp.add_argument("--c1", type=float, default=8.0)

    sp = sub.add_parser("sparsify")
    common(sp)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--n-bound", type=int, default=None, help="edge-count bound m when the file has no header")
    sp.add_argument("--rho-C", type=float, default=4.0)

    sp = sub.add_parser("attack")
    common(sp, needs_input=False)
    sp.add_argument("--scenario", choices=SCENARIOS, required=True)
    sp.add_argument("--L", default=None)
    sp.add_argument("--batches", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--final-batch-size", type=int, default=10)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--leaf-size", type=int, default=200)
    sp.add_argument("--decay", type=float, default=1.0)
    sp.add_argument("--sgd-step", type=float, default=0.01)
    sp.add_argument("--sketch-m", type=int, default=60)
    sp.add_argument("--dim", type=int, default=10)
    sp.add_argument("--C", type=float, default=None)
    sp.add_argument("--seed-adversary", type=int, default=0)
    sp.add_argument("--trials", type=int, default=1)
    return ap


def _check(cond: bool, flag: str, msg: str) -> None:
    if not cond:
        raise UsageError(f"{flag}: {msg}")


def parse_and_validate(argv) -> RunConfig:
    """Parse argv into a validated RunConfig or raise UsageError naming the flag."""
    ns = vars(_parser().parse_args(list(argv)))
    ns = {k: v for k, v in ns.items() if v is not None}
    sub = ns["subcommand"]
    if "eps" not in ns:
        ns["eps"] = 0.3 if sub == "coreset" else 0.5
    cfg = RunConfig(**ns)
    _check(0 < cfg.eps < 1, "--eps", f"must lie in (0, 1), got {cfg.eps}")
    _check(cfg.p in (1, 2), "--p", f"must be 1 or 2, got {cfg.p}")
    _check(cfg.z in (1, 2), "--z", f"must be 1 or 2, got {cfg.z}")
    _check(cfg.k is None or cfg.k >= 1, "--k", "must be at least 1")
    _check(cfg.C is None or cfg.C > 0, "--C", "must be positive")
    _check(cfg.n_bound is None or cfg.n_bound >= 1, "--n-bound", "must be at least 1")
    _check(cfg.leaf_size >= 1, "--leaf-size", "must be at least 1")
    _check(0 < cfg.delta < 1, "--delta", "must lie in (0, 1)")
    _check(cfg.rho_C > 0, "--rho-C", "must be positive")
    _check(cfg.trials >= 1, "--trials", "must be at least 1")
    _check(0 <= cfg.decay <= 1, "--decay", "must lie in [0, 1]")
    _check(cfg.sgd_step >= 0, "--sgd-step", "must be nonnegative")
    if cfg.input is not None:
        _check(Path(cfg.input).is_file(), "--input", f"no such file: {cfg.input}")
    if cfg.resume is not None:
        _check(Path(cfg.resume).is_file(), "--resume", f"no such file: {cfg.resume}")
    if sub == "lowrank" and cfg.p != 2:
        raise UsageError("--p: lowrank is defined for p = 2 only")
    if sub == "sparsify":
        header = _edge_header(cfg.input)
        if header is None:
            _check(cfg.n_bound is not None, "--n-bound",
                   "missing: edge file has no 'n m_bound' header and --n-bound was not given")
        else:
            cfg.n = cfg.n if cfg.n is not None else header[0]
            cfg.n_bound = cfg.n_bound if cfg.n_bound is not None else header[1]
    if sub == "attack":
        b, s = SCENARIO_DEFAULTS[cfg.scenario]
        cfg.batches = cfg.batches if cfg.batches is not None else b
        cfg.batch_size = cfg.batch_size if cfg.batch_size is not None else s
        _check(cfg.batches >= 1 and cfg.batch_size >= 1, "--batches", "batches and batch size must be positive")
        if cfg.scenario in ("regression-flip", "distant-cluster"):
            _check(cfg.batches >= 2, "--batches", "needs at least two batches")
        if cfg.L is None or cfg.L == "auto":
            cfg.L = 10 * math.sqrt(cfg.batches) if cfg.L == "auto" or cfg.scenario == "regression-flip" else 100.0
        else:
            try:
                cfg.L = float(cfg.L)
            except ValueError:
                raise UsageError(f"--L: expected a number or 'auto', got {cfg.L!r}") from None
    return cfg


# I/O

def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _emit(obj, level: int) -> str:
    pad, inner = "  " * level, "  " * (level + 1)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return {None: "null", True: "true", False: "false"}[None if obj is None else bool(obj)]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_emit(obj[k], level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        return "[\n" + ",\n".join(inner + _emit(v, level + 1) for v in obj) + "\n" + pad + "]"
    return json.dumps(str(obj))


def dumps(obj) -> str:
    """Sorted, indented JSON with every float at 17 significant digits."""
    return _emit(obj, 0) + "\n"


def write_series(path: Path, points) -> None:
    lines = ["round,value"] + [f"{int(t)},{fmt(v)}" for t, v in points]
    path.write_text("\n".join(lines) + "\n")


def write_table(path: Path, header, rows) -> None:
    lines = [",".join(header)] + [",".join(fmt(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    rows, first = [], True
    for i, line in enumerate(Path(path).read_text().splitlines()):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            if not first:
                raise InputError(f"{path}:{i + 1}: non-numeric entry") from None
        first = False
    if not rows:
        raise InputError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise InputError(f"{path}: rows have differing lengths")
    return np.array(rows)


def _edge_lines(path):
    for i, line in enumerate(Path(path).read_text().splitlines()):
        line = line.split("#")[0].strip()
        if line:
            yield i + 1, line.split()


def _edge_header(path):
    for _, parts in _edge_lines(path):
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
        return None
    return None


def read_edges(path) -> list[tuple]:
    edges = []
    for lineno, parts in _edge_lines(path):
        if len(parts) == 2 and not edges:
            continue
        if len(parts) != 3:
            raise InputError(f"{path}:{lineno}: expected 'u v w'")
        edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
    if not edges:
        raise InputError(f"{path}: no edges")
    return edges


# subcommands

def _sampler_config(cfg: RunConfig, dim: int, n: int, mode: str = "embedding") -> SamplerConfig:
    return SamplerConfig(dim=dim, n_bound=cfg.n_bound or n, p=cfg.p, eps=cfg.eps, C=cfg.C,
                         mode=mode, k=cfg.k if mode == "ridge" else None, seed=cfg.seed)


def _run_sampler(cfg: RunConfig, out: Path, mode: str) -> tuple[dict, int, RowSampler]:
    A = read_matrix(cfg.input)
    if cfg.resume:
        s = RowSampler.from_dict(json.loads(Path(cfg.resume).read_text()))
        if s.config.dim != A.shape[1]:
            raise InputError(f"{cfg.input}: rows have {A.shape[1]} columns, checkpoint expects {s.config.dim}")
    else:
        s = RowSampler(_sampler_config(cfg, A.shape[1], len(A), mode))
    start = s.rounds_seen
    series = {"tau": [], "prob": [], "sampled": []}
    for row in A:
        dec = s.process_row(row)
        t = s.rounds_seen - 1
        series["tau"].append((t, dec.tau))
        series["prob"].append((t, dec.prob))
        series["sampled"].append((t, len(s.buffer)))
    for name, pts in series.items():
        write_series(out / f"{name}.csv", pts)
    emb = s.current_embedding()
    write_table(out / "embedding.csv", ["index", "weight"] + [f"x{j}" for j in range(A.shape[1])],
                [[i, w, *r] for i, w, r in zip(emb.indices, emb.weights, emb.rows)])
    if cfg.checkpoint:
        Path(cfg.checkpoint).write_text(dumps(s.to_dict()))
    summary = {
        "config": asdict(s.config),
        "resumed_from_round": start if cfg.resume else None,
        "diagnostics": s.diagnostics(),
        "sample_budget": s.sample_budget(),
    }
    if not cfg.resume:
        summary["spectral_check"] = spectral_sandwich_check(A, emb, s.config.eps)
    return summary, (1 if s.warnings else 0), s


def cmd_embed(cfg, out):
    summary, code, _ = _run_sampler(cfg, out, "embedding")
    return summary, code


def cmd_regress(cfg, out):
    summary, code, s = _run_sampler(cfg, out, "embedding")
    fit = s.regress()
    A = read_matrix(cfg.input)
    summary["coefficients"] = fit.coef.tolist()
    summary["regularized"] = fit.regularized
    summary["loss"] = harness.prefix_loss(A, fit.coef)
    summary["optimal_loss"] = harness.prefix_loss(A, harness.ls_coef(A))
    return summary, code


def cmd_lowrank(cfg, out):
    summary, code, s = _run_sampler(cfg, out, "ridge")
    lr = s.low_rank()
    d = lr.projection.shape[0]
    write_table(out / "projection.csv", [f"c{j}" for j in range(d)], lr.projection)
    A = read_matrix(cfg.input)
    sv = np.linalg.svd(A, compute_uv=False)
    summary["rank"] = lr.rank
    summary["rank_deficient"] = lr.deficient
    summary["projection_cost"] = float(np.linalg.norm(A - A @ lr.projection) ** 2)
    summary["svd_tail"] = float(np.sum(sv[lr.rank:] ** 2))
    return summary, code


def cmd_coreset(cfg, out):
    X = read_matrix(cfg.input)
    ccfg = ClusteringConfig(k=cfg.k, z=cfg.z, eps=cfg.eps, delta=cfg.delta, leaf_size=cfg.leaf_size,
                            n_bound=cfg.n_bound or len(X), seed=cfg.seed, c0=cfg.c0, c1=cfg.c1)
    if len(X) > ccfg.n_bound:
        raise InputError(f"{cfg.input}: {len(X)} points exceed --n-bound {ccfg.n_bound}")
    tree = CoresetTree(ccfg)
    stored = []
    for t, x in enumerate(X):
        tree.insert(x)
        stored.append((t, tree.stored_points))
    write_series(out / "stored.csv", stored)
    core = tree.query()
    write_table(out / "coreset.csv", ["weight"] + [f"x{j}" for j in range(X.shape[1])],
                [[w, *c] for w, c in zip(core.weights, core.coords)])
    centers = lloyd_refine(core, cfg.k, cfg.z, seed=cfg.seed)
    write_table(out / "centers.csv", [f"x{j}" for j in range(X.shape[1])], centers)
    full = WeightedPoints.unit(X)
    summary = {
        "config": {**asdict(ccfg), "max_levels": ccfg.max_levels, "eps_level": ccfg.eps_level},
        "points": len(X),
        "coreset_size": len(core),
        "coreset_weight": core.total_weight,
        "peak_stored": tree.peak_stored,
        "reductions": tree.reductions,
        "levels": tree.occupied_levels(),
        "coreset_cost": kz_cost(core, centers, cfg.z),
        "full_cost": kz_cost(full, centers, cfg.z),
    }
    return summary, 0


def cmd_sparsify(cfg, out):
    edges = read_edges(cfg.input)
    n = cfg.n if cfg.n is not None else 1 + max(max(u, v) for u, v, _ in edges)
    scfg = SparsifierConfig(n=n, m_bound=cfg.n_bound, eps=cfg.eps, C=cfg.rho_C, seed=cfg.seed)
    sp = StreamingSparsifier(scfg)
    kept, prob = [], []
    for t, e in enumerate(edges):
        sp.process_edge(e)
        kept.append((t, len(sp.kept)))
        prob.append((t, sp.last_probability))
    write_series(out / "kept.csv", kept)
    write_series(out / "prob.csv", prob)
    lines = [f"{n} {cfg.n_bound}"] + [f"{e.u} {e.v} {fmt(e.w)}" for e in sp.graph()]
    (out / "sparsifier.txt").write_text("\n".join(lines) + "\n")
    try:
        kappa = cut_condition(n, edges)
    except InputError:
        kappa = None
    summary = {
        "config": asdict(scfg),
        "edges_seen": sp.edges_seen,
        "kept": len(sp.kept),
        "rho": sp.rho,
        "exact_connectivity_calls": sp.exact_connectivity_calls,
        "kappa_cut_ratio": kappa,
        "min_cut": global_min_cut(edges, range(n))[0],
    }
    return summary, 0


def _attack_trial(cfg: RunConfig, i: int) -> tuple[dict, dict, str | None]:
    sa, sv = cfg.seed + i, cfg.seed_adversary + i
    if cfg.scenario == "regression-flip":
        r = harness.run_regression_flip(harness.FlipConfig(
            batches=cfg.batches, batch_size=cfg.batch_size, L=cfg.L, sgd_step=cfg.sgd_step,
            C=cfg.C or DEFAULT_C[2], eps=cfg.eps, seed_algorithm=sa, seed_adversary=sv))
        r.summary["robust_ok"] = r.summary["max_robust_rel_error"] <= 0.1
        r.summary["baseline_fails"] = r.summary["baseline_post_batch_error"] > 0.5
        return r.series, r.summary, None
    if cfg.scenario == "distant-cluster":
        r = harness.run_distant_cluster(harness.ClusterAttackConfig(
            batches=cfg.batches, batch_size=cfg.batch_size, final_batch_size=cfg.final_batch_size,
            L=cfg.L, k=cfg.k, eps=cfg.eps, leaf_size=cfg.leaf_size, decay=cfg.decay, seed_algorithm=sa, seed_adversary=sv))
        r.summary["robust_ok"] = r.summary["robust_far_distance"] <= 3
        r.summary["baseline_fails"] = r.summary["baseline_max_origin_distance"] <= 3
        return r.series, r.summary, None
    if cfg.scenario == "sketch-null":
        r = harness.run_sketch_attack(harness.SketchAttackConfig(
            n=cfg.batches * cfg.batch_size, d=cfg.dim, m=cfg.sketch_m, batches=cfg.batches,
            C=cfg.C or DEFAULT_C[2], eps=cfg.eps, seed_algorithm=sa, seed_adversary=sv))
        r.summary["robust_ok"] = r.summary["sketch_residual"] <= 1e-9 * r.summary["max_abs_A"]
        r.summary["baseline_fails"] = r.summary["loss_ratio"] >= 10
        return r.series, r.summary, None
    # orthogonal probe: a genuine adaptive game with a transcript
    n = cfg.batches * cfg.batch_size
    s = RowSampler(SamplerConfig(dim=cfg.dim, n_bound=n, eps=cfg.eps, C=cfg.C, seed=sa))
    alg = harness.SamplerAlgorithm(s)
    rows, ok = [], []

    def ev(t, u, resp):
        rows.append(u)
        good = spectral_sandwich_check(np.array(rows), resp, cfg.eps)
        ok.append((t, float(good)))
        return {"prob": alg.last_decision.prob, "tau": alg.last_decision.tau, "sandwich": float(good)}

    tr = harness.run_game(alg, harness.OrthogonalProbeAdversary(cfg.dim, sv), n, ev, sa, sv)
    series = {"sandwich": ok, "prob": [(t, float(r.metrics["prob"])) for t, r in enumerate(tr.rounds)]}
    summary = {"robust_ok": all(v for _, v in ok), "sampled_rows": len(s.buffer), "aborted": tr.aborted,
               "warnings": s.warnings}
    return series, summary, tr.to_jsonl()


def _attack_trial_star(args):
    return _attack_trial(*args)


def max_workers(trials: int) -> int:
    cap = os.environ.get("ROBUST_STREAM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, min(n, trials))


def cmd_attack(cfg, out):
    jobs = [(cfg, i) for i in range(cfg.trials)]
    workers = max_workers(cfg.trials)
    if workers == 1:
        results = [_attack_trial(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_attack_trial_star, jobs))
    trials = []
    for i, (series, summ, transcript) in enumerate(results):
        d = out if cfg.trials == 1 else out / f"trial_{i:03d}"
        d.mkdir(parents=True, exist_ok=True)
        for name, pts in series.items():
            write_series(d / f"{name}.csv", pts)
        if transcript is not None:
            (d / "transcript.jsonl").write_text(transcript)
        trials.append({"seed_algorithm": cfg.seed + i, "seed_adversary": cfg.seed_adversary + i, **summ})
    summary = {
        "scenario": cfg.scenario,
        "L": cfg.L,
        "L_rule": "10*sqrt(batches)" if cfg.scenario == "regression-flip" else "flag or default",
        "trials": trials,
        "robust_ok": sum(bool(t["robust_ok"]) for t in trials),
        "baseline_fails": sum(bool(t.get("baseline_fails", False)) for t in trials),
    }
    code = 1 if any(t.get("warnings") for t in trials) else 0
    return summary, code


COMMANDS = {
    "embed": cmd_embed,
    "regress": cmd_regress,
    "lowrank": cmd_lowrank,
    "coreset": cmd_coreset,
    "sparsify": cmd_sparsify,
    "attack": cmd_attack,
}


def execute(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary, code = COMMANDS[cfg.subcommand](cfg, out)
        doc = {"run_config": asdict(cfg), "exit_status": code, **summary}
        (out / "summary.json").write_text(dumps(doc))
    except (InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return code


def main(argv=None) -> int:
    try:
        cfg = parse_and_validate(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return execute(cfg)
