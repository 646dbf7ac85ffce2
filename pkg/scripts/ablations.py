"""Privacy/utility sweeps over the screening and projection parameters.

Writes one CSV per swept parameter to ``--out`` and prints the rows.
Models are trained on the bundled corpus unless ``--models`` is given.

    python3 scripts/ablations.py --out runs/ablations
"""
import argparse
import csv
import math
from pathlib import Path

from adapmixed.harness import SweepSpec, bundled_corpus_dir, cmd_sweep, load_config, train_desk_models

ROOT = Path(__file__).resolve().parents[1]

SWEEPS = {
    "threshold": (2.0, 3.0, 4.0, 4.5, math.inf),
    "beta": (0.05, 0.1, 0.15, 0.2, 0.3),
    "top_k": (5, 10, 20, 30, 44),
    "ensemble_size": (2, 4, 8, 16),
    "screen_lambda_sigma": ((1e-4, 1e-2), (1e-3, 1e-2), (1e-3, 1e-1), (1e-2, 1e-1)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/ablations"))
    ap.add_argument("--models", type=Path, help="existing models dir (16 shards)")
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "desk.yaml")
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--only", choices=sorted(SWEEPS), action="append")
    ap.add_argument("--parallel", action="store_true")
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    models = args.models
    if models is None:
        models = args.out / "models"
        train_desk_models(models, n=16)
    base = load_config(args.config)
    eval_path = bundled_corpus_dir() / "eval.txt"

    for param in args.only or SWEEPS:
        out_csv = args.out / f"{param}.csv"
        cmd_sweep(SweepSpec(param, SWEEPS[param], base), models, eval_path, out_csv,
                  max_queries=args.queries, parallel=args.parallel)
        print(f"== {param}")
        with open(out_csv, newline="") as fh:
            for row in csv.DictReader(fh):
                print(f"  {row['value']:>18s}  eps_rdp {float(row['eps_rdp']):10.3f}  "
                      f"ppl {float(row['ppl']):7.3f}  screened out {row['screened_out']}")


if __name__ == "__main__":
    main()
