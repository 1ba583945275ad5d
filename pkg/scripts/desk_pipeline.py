#!/usr/bin/env python3
"""Generate data, train late-fusion and baseline models over several seeds,
and print the rollout-RMSE comparison for one equation family.

Example:
    python scripts/desk_pipeline.py --equation advection --preset desk \
        --seeds 0 1 2 --out runs/advection_desk
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from latefuse.checkpoints import save_model
from latefuse.datasets import generate_dataset, read_dataset, write_dataset
from latefuse.evaluate import (aggregate_metrics, evaluate_dataset,
                               per_parameter_rows, summarize_rows)
from latefuse.presets import family_preset, ranges_for
from latefuse.train import TrainConfig, train


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--equation", default="advection")
    ap.add_argument("--preset", choices=("desk", "full"), default="desk")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--gen-seed", type=int, default=0)
    ap.add_argument("--lambda-sparse", type=float, default=1e-4)
    ap.add_argument("--out", default="runs/desk_pipeline")
    args = ap.parse_args()

    out = Path(args.out)
    preset = family_preset(args.equation, args.preset)
    data_dir = out / "data"
    if (data_dir / "train" / "manifest.json").is_file():
        datasets = {s: read_dataset(data_dir / s)
                    for s in ("train", "in_domain_test", "out_domain_test")}
        print(f"reusing datasets under {data_dir}")
    else:
        datasets = {}
        for i, split in enumerate(("train", "in_domain_test", "out_domain_test")):
            count = preset.counts[i]
            ds = generate_dataset(preset.family, preset.grid,
                                  ranges_for(preset.family, split), count,
                                  seed=args.gen_seed * 3 + i, ic_spec=preset.ic,
                                  split_label=split)
            write_dataset(ds, data_dir / split)
            datasets[split] = ds
            print(f"generated {count} {split} trajectories")

    detail = []
    for kind in ("late_fusion", "baseline"):
        for seed in args.seeds:
            cfg = TrainConfig(width=preset.width, modes=preset.modes,
                              epochs=preset.epochs, seed=seed,
                              lambda_sparse=args.lambda_sparse,
                              library_text=preset.library if kind == "late_fusion" else None)
            model, report = train(kind, datasets["train"], cfg)
            ckpt = out / f"{kind}_seed{seed}"
            save_model(model, ckpt, train_config=cfg.to_dict())
            (ckpt / "train_report.json").write_text(
                json.dumps(report.to_dict(), indent=2, sort_keys=True))
            for split in ("in_domain_test", "out_domain_test"):
                metrics = evaluate_dataset(model, datasets[split])
                agg = aggregate_metrics(metrics)
                detail += per_parameter_rows(preset.family, kind, seed, split,
                                             datasets[split], metrics)
                print(f"{kind} seed {seed} {split}: rmse {agg.rmse:.4f} "
                      f"nrmse {agg.nrmse:.4f} blowups {agg.num_blowups}")

    summary = summarize_rows(detail)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print("\nper-split seed-aggregated RMSE (mean over seeds):")
    for row in summary:
        print(f"  {row['model']:12s} {row['split']:16s} {row['rmse_mean']:.4f}")

    by = {(r["model"], r["split"]): [] for r in detail}
    for r in detail:
        by[(r["model"], r["split"])].append(r["rmse"])
    print("\nper-trajectory median RMSE (pooled over seeds):")
    for (model_name, split), vals in sorted(by.items()):
        print(f"  {model_name:12s} {split:16s} {np.median(vals):.4f}")


if __name__ == "__main__":
    main()
