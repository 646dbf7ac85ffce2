"""Command line entry point: ``adapmixed {train-shards,decode,evaluate,sweep,account}``.

On failure a single JSON error record is printed to stderr and the exit code
is nonzero.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness


def _add_text_flags(p):
    p.add_argument("--file-per-doc", action="store_true",
                   help="treat each file as one document instead of one document per line")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adapmixed", description="Adaptive private next-token decoding harness")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-shards", help="shard a corpus and train private + public n-gram models")
    p.add_argument("corpus", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("-n", "--shards", type=int, required=True)
    p.add_argument("--order", type=int, default=harness.DESK_ORDER)
    p.add_argument("--smoothing", type=float, default=harness.DESK_SMOOTHING)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--public", type=Path, help="public corpus; default holds out part of CORPUS")
    p.add_argument("--public-fraction", type=float, default=0.2)
    p.add_argument("--level", choices=("char", "word"), default="char")
    _add_text_flags(p)

    p = sub.add_parser("decode", help="run a private decoding session over evaluation text")
    p.add_argument("models_dir", type=Path)
    p.add_argument("eval", type=Path)
    p.add_argument("config", type=Path)
    p.add_argument("--ledger", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--max-queries", type=int)
    p.add_argument("--seed", type=int, help="override the config seed (shared seeds share noise draws)")
    p.add_argument("--likelihood", choices=("sampled", "projected"), default="sampled")
    _add_text_flags(p)

    p = sub.add_parser("evaluate", help="perplexity of public, private and averaged models")
    p.add_argument("models_dir", type=Path)
    p.add_argument("eval", type=Path)
    p.add_argument("--max-queries", type=int)
    _add_text_flags(p)

    p = sub.add_parser("sweep", help="one decoding run per value of a privacy parameter")
    p.add_argument("models_dir", type=Path)
    p.add_argument("eval", type=Path)
    p.add_argument("config", type=Path)
    p.add_argument("--param", required=True, choices=harness.SWEEP_PARAMS)
    p.add_argument("--values", required=True,
                   help="comma-separated; screen_lambda_sigma values are lambda:sigma pairs")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--max-queries", type=int)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--ledger-dir", type=Path)
    _add_text_flags(p)

    p = sub.add_parser("account", help="recompute and audit the totals of a ledger file")
    p.add_argument("ledger", type=Path)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    return ap


def run(args) -> dict:
    per_line = not getattr(args, "file_per_doc", False)
    if args.command == "train-shards":
        manifest = harness.cmd_train_shards(
            args.corpus, args.shards, args.order, args.smoothing, args.seed, args.out_dir,
            public_path=args.public, public_fraction=args.public_fraction, per_line=per_line, level=args.level,
        )
        return {"models": len(manifest["private_models"]), "vocabulary": len(manifest["vocabulary"]["tokens"])}
    if args.command == "decode":
        cfg = harness.load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        report = harness.cmd_decode(args.models_dir, args.eval, cfg, args.ledger, args.report,
                                    max_queries=args.max_queries, likelihood=args.likelihood, per_line=per_line)
        return json.loads(report.to_json())
    if args.command == "evaluate":
        return harness.cmd_evaluate(args.models_dir, args.eval, max_queries=args.max_queries, per_line=per_line)
    if args.command == "sweep":
        values = tuple(harness.parse_sweep_value(args.param, v.strip()) for v in args.values.split(","))
        spec = harness.SweepSpec(args.param, values, harness.load_config(args.config))
        rows = harness.cmd_sweep(spec, args.models_dir, args.eval, args.out, max_queries=args.max_queries,
                                 parallel=args.parallel, ledger_dir=args.ledger_dir, per_line=per_line)
        return {"rows": len(rows), "out": str(args.out)}
    if args.command == "account":
        res = harness.cmd_account(args.ledger, args.alpha, args.delta)
        return {"eps_rdp": res.eps_rdp, "eps_dp": res.eps_dp, "entries": res.entries,
                "mismatches": res.mismatches, "perplexity": res.perplexity}
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = run(args)
    except Exception as exc:  # reported as a structured record
        record = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("field", "line"):
            if hasattr(exc, attr):
                record[attr] = getattr(exc, attr)
        print(json.dumps(record), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=1, default=str))
    if args.command == "account" and result["mismatches"]:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
