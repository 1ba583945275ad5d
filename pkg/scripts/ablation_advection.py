#!/usr/bin/env python3
"""Library-complexity x sparsity-coefficient ablation on 1D advection.

Trains the four polynomial libraries (6/9/12/18 terms) over the sparsity
grid and seeds, then prints the out-domain stability summary (max/min of
per-lambda medians for each library). Data for the RMSE-vs-lambda figure
land in <out>/ablation.csv.

Example:
    LATEFUSE_THREADS=2 python scripts/ablation_advection.py --out runs/ablation
"""
from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--preset", choices=("desk", "full"), default="desk")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--gen-seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    data = out / "data"
    if not (data / "train" / "manifest.json").is_file():
        gen_cfg = {"equation": "advection", "preset": args.preset,
                   "seed": args.gen_seed, "out": str(data)}
        cfg_path = out / "gen.json"
        out.mkdir(parents=True, exist_ok=True)
        cfg_path.write_text(json.dumps(gen_cfg))
        subprocess.run([sys.executable, "-m", "latefuse.cli", "gen",
                        "--config", str(cfg_path)], check=True)

    ablate_cfg = {"data": str(data), "preset": args.preset,
                  "seeds": args.seeds, "out": str(out)}
    cfg_path = out / "ablate.json"
    cfg_path.write_text(json.dumps(ablate_cfg))
    subprocess.run([sys.executable, "-m", "latefuse.cli", "ablate",
                    "--config", str(cfg_path)], check=True)

    with (out / "ablation.csv").open() as fh:
        rows = [r for r in csv.DictReader(fh) if r["status"] == "ok"
                and r["split"] == "out_domain_test"]
    med = defaultdict(list)
    for r in rows:
        med[(int(r["num_terms"]), float(r["lambda"]))].append(float(r["rmse"]))
    print("\nout-domain RMSE medians and per-library spread across lambda:")
    for terms in sorted({t for t, _ in med}):
        medians = {lam: float(np.median(v)) for (t, lam), v in med.items() if t == terms}
        finite = all(np.isfinite(m) for m in medians.values())
        spread = max(medians.values()) / min(medians.values()) if finite else float("inf")
        cells = "  ".join(f"lam={lam:g}: {m:.4g}" for lam, m in sorted(medians.items()))
        print(f"  {terms:2d} terms: {cells}  | max/min spread {spread:.3g}")


if __name__ == "__main__":
    main()
