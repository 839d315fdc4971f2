"""Command-line entry point: seeded, file-based, reproducible pipelines.

Subcommands:
  etf gen / etf verify      build and certify the fixed simplex-ETF classifier
  lp solve                  certify the layer-peeled optimum numerically
  fscil run                 3-arm ablation run writing sessions/summary CSVs
  metrics report            collapse diagnostics over a feature dump
  repro full                the whole acceptance pipeline with a PASS/FAIL manifest

Exit codes: 0 success (and, for verify/repro, all checks passed), 1
failure, 2 usage error. Identical inputs and seeds give byte-identical
outputs; floats are serialized with 17 significant digits.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import benchmark as benchmod
from . import config as cfgmod
from . import layer_peeled as lpmod
from . import serialize
from .data import generate_dataset
from .errors import ShapeMismatchError
from .etf_geometry import make_etf, verify_etf
from .fscil_engine import ABLATION_ARMS
from .losses import CrossEntropy, loss_name, parse_loss_kind
from .nc_metrics import FeatureDump, report
from .seeding import spawn_rng

THREADS_ENV = "NC_FSCIL_THREADS"


def _thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {cap}")
    return cap


def cmd_etf_gen(args) -> int:
    protos = make_etf(args.dim, args.classes, args.seed)
    serialize.write_etf_json(args.out, protos)
    print(f"wrote {args.classes}-class ETF in dim {args.dim} to {args.out}")
    return 0


def cmd_etf_verify(args) -> int:
    protos = serialize.read_etf_json(args.infile)
    cert = verify_etf(protos, args.tol)
    print(
        f"max_norm_error={serialize.format_float(cert.max_norm_error)} "
        f"max_gram_error={serialize.format_float(cert.max_gram_error)} "
        f"sum_norm={serialize.format_float(cert.sum_norm)} passed={cert.passed}"
    )
    return 0 if cert.passed else 1


def _lp_report_payload(problem, steps, lr, seed) -> dict:
    bank, trace = lpmod.solve_incremental_traced(problem, steps, lr, seed)
    rep = lpmod.check_optimality(bank, problem)
    payload = {
        "loss": loss_name(problem.loss),
        "steps": steps,
        "lr": lr,
        "seed": seed,
        "max_norm_gap": rep.max_norm_gap,
        "max_self_gap": rep.max_self_gap,
        "max_cross_gap": rep.max_cross_gap,
        "max_kkt_residual": rep.max_kkt_residual,
        "trajectory": [
            {"session": t, "steps": trace.steps[t], "mean_loss": trace.losses[t]}
            for t in range(len(trace.steps))
        ],
    }
    return payload, bank, rep


def cmd_lp_solve(args) -> int:
    cfg = cfgmod.load_section(args.config, "layer_peeled")
    problem, steps, lr, seed = cfgmod.layer_peeled_problem(cfg)
    payload, _, rep = _lp_report_payload(problem, steps, lr, seed)
    serialize.write_json(args.out, payload)
    print(
        f"{loss_name(problem.loss)} solve: norm_gap={rep.max_norm_gap:.3e} "
        f"self_gap={rep.max_self_gap:.3e} cross_gap={rep.max_cross_gap:.3e} "
        f"kkt={rep.max_kkt_residual:.3e}"
    )
    return 0


def _write_benchmark_outputs(out_dir: Path, outcomes) -> None:
    for outcome in outcomes:
        seed_dir = out_dir / f"seed{outcome.seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        session_rows, summary_rows, metric_rows = [], [], []
        for arm in ABLATION_ARMS:
            res = outcome.results[arm]
            for row in res.rows:
                session_rows.append(
                    [row.session, arm, row.acc_all, row.acc_base, row.acc_novel, row.loss_final]
                )
            summary_rows.append([arm, res.final, res.average, res.pd])
            for t, metrics in enumerate(res.session_metrics):
                acc = metrics["accumulate_test"]
                base = metrics["base_test"]
                metric_rows.append(
                    [arm, t, acc.cross_class_cosine, acc.same_class_cosine,
                     base.trace_ratio, acc.nc4_agreement]
                )
        session_rows.sort(key=lambda r: (r[0], r[1]))
        serialize.write_csv(
            seed_dir / "sessions.csv",
            ["session", "arm", "acc_all", "acc_base", "acc_novel_this_session", "loss_final"],
            session_rows,
        )
        serialize.write_csv(seed_dir / "summary.csv", ["arm", "final", "average", "pd"], summary_rows)
        serialize.write_csv(
            seed_dir / "metrics.csv",
            ["arm", "session", "cross_class_cosine", "same_class_cosine",
             "trace_ratio_base", "nc4_agreement"],
            metric_rows,
        )


def cmd_fscil_run(args) -> int:
    cfg = cfgmod.load_experiment_config(args.config)
    fscil_cfg = cfg["fscil"]
    seed = args.seed if args.seed is not None else int(fscil_cfg["train"]["seed"])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    outcomes = benchmod.run_desk_benchmark(fscil_cfg, seeds=[seed], keep_artifacts=True)
    _write_benchmark_outputs(out_dir, outcomes)
    outcome = outcomes[0]
    for arm in ABLATION_ARMS:
        res = outcome.results[arm]
        arm_dir = out_dir / f"seed{seed}" / arm
        arm_dir.mkdir(parents=True, exist_ok=True)
        for t, (params, dump) in enumerate(zip(res.checkpoints, res.dumps)):
            serialize.write_arrays(arm_dir / f"model_session{t}.bin", params)
            dump.save(arm_dir / f"features_session{t}.bin")
    print(f"ablation run (seed {seed}) written to {out_dir}")
    return 0


def cmd_metrics_report(args) -> int:
    dump = FeatureDump.load(args.features)
    protos = serialize.read_etf_json(args.protos)
    sessions = sorted(int(s) for s in np.unique(dump.sessions))
    rows = []
    for t in sessions:
        rep = report(dump, protos, args.scope, args.split, t)
        rows.append(
            [t, rep.scope, rep.split, rep.cross_class_cosine, rep.same_class_cosine,
             rep.trace_ratio, rep.nc4_agreement]
        )
        if args.scope == "base-only":
            break  # the base pool does not change with t
    serialize.write_csv(
        args.out,
        ["session", "scope", "split", "cross_class_cosine", "same_class_cosine",
         "trace_ratio", "nc4_agreement"],
        rows,
    )
    print(f"wrote {len(rows)} metric row(s) to {args.out}")
    return 0


def acceptance_lp_problem(seed: int = 0):
    """The certification problem: d=16, sessions (6, 2, 2), n_k imbalanced in 1..8."""
    rng = spawn_rng(seed, 4, 0)
    sessions = tuple(
        lpmod.session_spec(k, [int(n) for n in rng.integers(1, 9, size=k)]) for k in (6, 2, 2)
    )
    protos = make_etf(16, 10, seed)
    return sessions, protos


def cmd_repro_full(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    checks = []

    # fixed ETF geometry across the acceptance shapes
    etf_rows = []
    etf_ok = True
    for dim, classes in ((4, 4), (16, 10), (64, 60), (128, 100)):
        for etf_seed in (seed, seed + 1, seed + 2):
            cert = verify_etf(make_etf(dim, classes, etf_seed), 1e-9)
            ok = cert.passed and cert.sum_norm <= 1e-8
            etf_ok &= ok
            etf_rows.append(
                {"dim": dim, "classes": classes, "seed": etf_seed,
                 "max_norm_error": cert.max_norm_error, "max_gram_error": cert.max_gram_error,
                 "sum_norm": cert.sum_norm, "passed": ok}
            )
    serialize.write_json(out_dir / "etf_certificates.json", {"certificates": etf_rows})
    checks.append({"name": "etf_geometry", "passed": etf_ok})

    # layer-peeled certification, DR then CE, on the same incremental problem
    sessions, protos = acceptance_lp_problem(seed)
    dr_problem = lpmod.LayerPeeledProblem(16, sessions, protos, parse_loss_kind("dr"))
    payload, _, rep = _lp_report_payload(
        dr_problem, lpmod.DEFAULT_DR_STEPS, lpmod.DEFAULT_DR_LR, seed
    )
    serialize.write_json(out_dir / "lp_dr_report.json", payload)
    checks.append(
        {"name": "layer_peeled_dr",
         "passed": max(rep.max_norm_gap, rep.max_self_gap, rep.max_cross_gap) <= 1e-4}
    )

    ce_problem = lpmod.LayerPeeledProblem(16, sessions, protos, CrossEntropy(scale=1.0))
    payload, bank, rep = _lp_report_payload(
        ce_problem, lpmod.DEFAULT_CE_STEPS, lpmod.DEFAULT_CE_LR, seed
    )
    spread = 0.0
    for feats, labels in zip(bank.features, bank.labels):
        for m, label in zip(feats, labels):
            probs = lpmod.softmax_probs(m, protos)
            off = np.delete(probs, label)
            spread = max(spread, float(off.max() - off.min()))
    payload["off_class_prob_spread"] = spread
    serialize.write_json(out_dir / "lp_ce_report.json", payload)
    checks.append(
        {"name": "layer_peeled_ce",
         "passed": max(rep.max_norm_gap, rep.max_self_gap, rep.max_cross_gap) <= 1e-2
         and rep.max_kkt_residual <= 1e-3 and spread <= 1e-6}
    )

    # 3-arm ablation over the benchmark seeds, plus the figure-style trends
    fscil_cfg = cfgmod.DEFAULTS["fscil"]
    seeds = [seed + s for s in range(5)]
    outcomes = benchmod.run_desk_benchmark(fscil_cfg, seeds=seeds)
    ablation_dir = out_dir / "ablation"
    ablation_dir.mkdir(parents=True, exist_ok=True)
    _write_benchmark_outputs(ablation_dir, outcomes)
    summary = benchmod.benchmark_summary(outcomes)
    serialize.write_json(ablation_dir / "benchmark_summary.json", summary)
    counts = summary["ordering_counts"]
    checks.append(
        {"name": "ablation_ordering",
         "passed": counts["final_etf_dr_ge_etf_ce"] >= 4
         and counts["final_etf_ce_ge_learnable_ce"] >= 4
         and counts["pd_etf_dr_le_learnable_ce"] >= 4}
    )
    checks.append(
        {"name": "metric_trends",
         "passed": counts["cross_spread_etf_dr_le_half_learnable_ce"] >= 4
         and counts["trace_growth_etf_dr_le_learnable_ce"] >= 4}
    )

    all_passed = all(c["passed"] for c in checks)
    serialize.write_json(
        out_dir / "manifest.json",
        {"seed": seed, "checks": checks, "passed": all_passed},
    )
    for check in checks:
        print(f"[{'PASS' if check['passed'] else 'FAIL'}] {check['name']}")
    return 0 if all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etfcil",
        description="Fixed simplex-ETF classifiers for class-incremental learning: "
        "generation, certification, desk-scale training and collapse diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    etf = sub.add_parser("etf", help="simplex-ETF construction and verification")
    etf_sub = etf.add_subparsers(dest="subcommand", required=True)
    gen = etf_sub.add_parser("gen", help="generate a seeded ETF and write it as JSON")
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--classes", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_etf_gen)
    ver = etf_sub.add_parser("verify", help="certify an ETF JSON file")
    ver.add_argument("--in", dest="infile", required=True)
    ver.add_argument("--tol", type=float, default=1e-9)
    ver.set_defaults(func=cmd_etf_verify)

    lp = sub.add_parser("lp", help="layer-peeled optimality certification")
    lp_sub = lp.add_subparsers(dest="subcommand", required=True)
    solve = lp_sub.add_parser("solve", help="projected-gradient solve plus gap report")
    solve.add_argument("--config", required=True)
    solve.add_argument("--out", required=True)
    solve.set_defaults(func=cmd_lp_solve)

    fscil = sub.add_parser("fscil", help="desk-scale class-incremental training")
    fscil_sub = fscil.add_subparsers(dest="subcommand", required=True)
    run = fscil_sub.add_parser("run", help="3-arm ablation run")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.set_defaults(func=cmd_fscil_run)

    metrics = sub.add_parser("metrics", help="neural-collapse diagnostics")
    metrics_sub = metrics.add_subparsers(dest="subcommand", required=True)
    rep = metrics_sub.add_parser("report", help="metrics CSV from a feature dump")
    rep.add_argument("--features", required=True)
    rep.add_argument("--protos", required=True)
    rep.add_argument("--scope", choices=["per-session", "accumulate", "base-only"],
                     default="accumulate")
    rep.add_argument("--split", choices=["train", "test"], default="test")
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_metrics_report)

    repro = sub.add_parser("repro", help="reproducibility pipelines")
    repro_sub = repro.add_subparsers(dest="subcommand", required=True)
    full = repro_sub.add_parser("full", help="full acceptance pipeline with manifest")
    full.add_argument("--out-dir", required=True)
    full.add_argument("--seed", type=int, default=None)
    full.set_defaults(func=cmd_repro_full)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        _thread_cap()
        return args.func(args)
    except (ValueError, OSError, KeyError, IndexError, ShapeMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
