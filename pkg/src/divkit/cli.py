"""Command-line entry point.

Subcommands: verify, collapse, train, analyze, bench, flops.
Exit codes: 0 ok, 1 verification failure, 2 collapse divergence,
3 training abort, 4 artifact corruption.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import verifier as verifier_mod
from .analysis import (BENCH_VARIANTS, analysis_sample, bench_export,
                       capture_features, effective_dimension_profile,
                       latency_bench, pca_export, saliency, saliency_export,
                       variant_config)
from .checkpoint import CorruptCheckpointError, checkpoint_checksum
from .config import ConfigError, RunConfig
from .model import count_flops, param_count
from .training import CorpusDataset, load_model_checkpoint, train

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_DIVERGENCE = 2
EXIT_TRAIN_ABORT = 3
EXIT_CORRUPT = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="divkit",
                                description="Feature-diversity toolkit: bound verification, "
                                            "collapse demos, training and diagnostics.")
    p.add_argument("--config", type=str, default=None, help="JSON run configuration")
    p.add_argument("--out", type=str, default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="global seed (overrides config)")
    p.add_argument("--workers", type=int, default=None, help="parallel workers (overrides config)")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the randomized bound-check suite")
    v.add_argument("--kinds", type=str, default=None,
                   help="comma-separated bound kinds (default: all)")
    v.add_argument("--trials", type=int, default=None)

    c = sub.add_parser("collapse", help="depth-wise diversity decay demo")
    c.add_argument("--variant", type=str, default=None,
                   choices=list(verifier_mod.COLLAPSE_VARIANTS))
    c.add_argument("--depth", type=int, default=None)

    t = sub.add_parser("train", help="train the byte-level LM")
    t.add_argument("--corpus", type=str, required=True)

    a = sub.add_parser("analyze", help="checkpoint diagnostics")
    a.add_argument("--checkpoint", type=str, required=True)
    a.add_argument("--mode", type=str, required=True, choices=["effdim", "pca", "saliency"])
    a.add_argument("--corpus", type=str, default=None,
                   help="plain-text corpus; validation split is sampled (default: random tokens)")

    b = sub.add_parser("bench", help="latency/FLOPs ablation table")
    b.add_argument("--variants", type=str, default=",".join(BENCH_VARIANTS))

    sub.add_parser("flops", help="print FLOPs and parameter counts")
    return p


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg


def cmd_verify(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    kinds = args.kinds.split(",") if args.kinds else None
    trials = args.trials if args.trials is not None else cfg.verifier.trials
    report = verifier_mod.run_suite(kinds=kinds, trials=trials, base_seed=cfg.seed,
                                    jsonl_path=out / "checks.jsonl",
                                    workers=cfg.workers, log=print)
    summary_path = out / "summary.json"
    tmp = summary_path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(report.summary, indent=1, sort_keys=True))
    tmp.replace(summary_path)
    print(f"checks: {len(report.checks)}  failures: {report.failures}  "
          f"inconclusive: {report.inconclusive}")
    if report.failures or report.inconclusive:
        worst = min((c for c in report.checks if not c.passed),
                    key=lambda c: c.slack / max(1.0, abs(c.rhs)))
        print(f"worst failing kind {worst.kind}, reproduction seed {worst.seed}")
        return EXIT_VERIFY_FAIL
    return EXIT_OK


def cmd_collapse(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vs = cfg.verifier
    variant = args.variant or vs.collapse_variant
    depth = args.depth if args.depth is not None else vs.collapse_depth
    dims = {"N": vs.dims_n, "d": vs.dims_d, "H": vs.dims_h}
    curve = verifier_mod.collapse_demo(variant, depth, dims, cfg.seed,
                                       weight_scale=vs.collapse_weight_scale)
    path = out / f"decay_{variant}.csv"
    tmp = path.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "measured", "bound"])
        w.writerows(curve.rows())
    tmp.replace(path)
    ratio = curve.measured[-1] / max(curve.bound[-1], 1e-300)
    print(f"{variant}: depth {len(curve.measured) - 1}, final measured/bound = {ratio:.3e}")
    if curve.truncated:
        print("curve truncated: features diverged to non-finite values")
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    corpus = CorpusDataset.from_file(args.corpus)
    result = train(cfg.model, cfg.train, corpus, cfg.out_dir, log=print)
    if result.diverged:
        print("training aborted: non-finite loss")
        return EXIT_TRAIN_ABORT
    if result.metrics:
        print(f"final loss {result.metrics[-1]['loss']:.4f} "
              f"({len(result.metrics)} steps)")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        before = checkpoint_checksum(args.checkpoint)
        model_cfg, params, _ = load_model_checkpoint(args.checkpoint)
    except (CorruptCheckpointError, FileNotFoundError) as exc:
        print(f"checkpoint unusable: {exc}")
        return EXIT_CORRUPT

    if args.corpus:
        corpus = CorpusDataset.from_file(args.corpus)
        tokens = analysis_sample(corpus, model_cfg, seed=cfg.seed,
                                 length=min(cfg.analysis.sample_len, model_cfg.max_seq_len))
    else:
        rng = np.random.default_rng(cfg.seed)
        tokens = rng.integers(0, model_cfg.vocab_size,
                              size=min(cfg.analysis.sample_len, model_cfg.max_seq_len))

    an = cfg.analysis
    if args.mode == "effdim":
        rows, degenerate = effective_dimension_profile(
            params, model_cfg, tokens, epsilon=an.epsilon, drop=an.drop,
            csv_path=out / "effdim.csv")
        for layer, d_eps in rows:
            print(f"layer {layer}: d({an.epsilon}) = {d_eps}")
        if degenerate:
            print(f"degenerate layers (zero variance): {degenerate}")
    elif args.mode == "pca":
        records = capture_features(params, model_cfg, tokens, drop=an.drop,
                                   epsilon=an.epsilon, pca_k=an.pca_k)
        paths = pca_export(records, out, k=an.pca_k)
        print(f"wrote {len(paths)} pca layer files")
    else:
        pos = an.target_position
        if pos is None:
            pos = len(tokens) // 2
        smap = saliency(params, model_cfg, tokens, pos)
        saliency_export(smap, out / "saliency.json")
        print(f"saliency map written (target position {pos}, "
              f"all_zero={smap.all_zero})")

    after = checkpoint_checksum(args.checkpoint)
    if after != before:
        print("checkpoint payload changed during analysis (read-only contract broken)")
        return EXIT_CORRUPT
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    variants = [v for v in args.variants.split(",") if v]
    if not variants:
        print("no variants requested")
        return EXIT_OK
    rows = latency_bench(cfg.model, variants=variants,
                         iterations=cfg.analysis.bench_iterations,
                         warmup_iterations=cfg.analysis.bench_warmup,
                         seed=cfg.seed)
    bench_export(rows, out / "bench.csv")
    for r in rows:
        print(f"{r.variant}: median {r.median_ms_per_token:.4f} ms/token, "
              f"p90 {r.p90_ms_per_token:.4f}, flops {r.flops}, params {r.params}")
    if len(rows) >= 2:
        base = rows[0]
        for r in rows[1:]:
            speedup = base.median_ms_per_token / max(r.median_ms_per_token, 1e-12)
            print(f"speedup {r.variant} vs {base.variant}: {speedup:.2f}x")
    return EXIT_OK


def cmd_flops(cfg: RunConfig, args) -> int:
    report = {"flops": count_flops(cfg.model), "params": param_count(cfg.model)}
    print(json.dumps(report, indent=1, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "verify": cmd_verify,
    "collapse": cmd_collapse,
    "train": cmd_train,
    "analyze": cmd_analyze,
    "bench": cmd_bench,
    "flops": cmd_flops,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_run_config(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    cfg.snapshot(cfg.out_dir)
    return _COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
