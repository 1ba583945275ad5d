"""Command-line entry points: ``gen``, ``train``, ``eval``, ``ablate``,
``inspect``. Every command takes an optional JSON config (unknown keys are
rejected) merged with the shared flags, and writes the fully resolved
config next to its artifacts so any run can be reproduced bitwise.

Exit codes: 0 success, 2 config error, 3 runtime/numerical error.
``LATEFUSE_THREADS`` caps worker parallelism for sweep cells.
"""
from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
import json
import os
from pathlib import Path
import sys
import time

from .checkpoints import load_model, save_model
from .datasets import generate_dataset, read_dataset, write_dataset
from .equations import canonical_family, param_names_for
from .evaluate import (aggregate_metrics, compute_metrics, evaluate_dataset,
                       interpret_export, per_parameter_rows, summarize_rows)
from .library import parse_library_spec
from .presets import (ABLATION_LIBRARIES, LAMBDA_GRID, family_preset, ranges_for)
from .train import TrainConfig, TrainingDiverged, hyperparameter_sweep, train

SPLIT_DIRS = ("train", "in_domain_test", "out_domain_test")


class ConfigError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _resolve(schema: dict, file_cfg: dict, flag_cfg: dict) -> dict:
    unknown = set(file_cfg) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = dict(schema)
    out.update(file_cfg)
    out.update({k: v for k, v in flag_cfg.items() if v is not None})
    missing = [k for k, v in out.items() if v is _REQUIRED]
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")
    return out


_REQUIRED = object()


def _write_config(cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))


def _write_csv(path: Path, rows: list[dict], fieldnames: list[str]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


# gen -------------------------------------------------------------------------

def cmd_gen(args) -> int:
    schema = {"equation": _REQUIRED, "preset": "desk", "seed": 0, "out": _REQUIRED,
              "counts": None}
    cfg = _resolve(schema, _load_config(args.config), {
        "equation": args.equation, "preset": args.preset, "seed": args.seed,
        "out": args.out,
    })
    family = canonical_family(cfg["equation"])
    cfg["equation"] = family
    preset = family_preset(family, cfg["preset"])
    counts = cfg["counts"] or {"train": preset.counts[0], "in": preset.counts[1],
                               "out": preset.counts[2]}
    if set(counts) != {"train", "in", "out"}:
        raise ConfigError("counts needs exactly the keys train/in/out")
    cfg["counts"] = {k: int(v) for k, v in counts.items()}

    out = Path(cfg["out"])
    _write_config(cfg, out)
    base_seed = int(cfg["seed"])
    for split, count, seed_off in (("train", cfg["counts"]["train"], 0),
                                   ("in_domain_test", cfg["counts"]["in"], 1),
                                   ("out_domain_test", cfg["counts"]["out"], 2)):
        ranges = ranges_for(family, split)
        ds = generate_dataset(family, preset.grid, ranges, count,
                              seed=base_seed * 3 + seed_off, ic_spec=preset.ic,
                              split_label=split)
        write_dataset(ds, out / split)
        print(f"gen: wrote {count} {family} trajectories to {out / split}")
    return 0


# train -----------------------------------------------------------------------

def cmd_train(args) -> int:
    schema = {"data": _REQUIRED, "model": "late_fusion", "preset": "desk",
              "library": None, "epochs": None, "width": None, "modes": None,
              "initial_lr": 1e-3, "lr_halving_epoch": None, "batch_size": 32,
              "lambda_sparse": 1e-4, "lambda_grid": None,
              "validation_fraction": 0.10, "seed": 0, "out": _REQUIRED}
    cfg = _resolve(schema, _load_config(args.config), {
        "seed": args.seed, "out": args.out, "preset": args.preset,
    })
    ds = read_dataset(cfg["data"])
    family = ds.manifest["equation_family"]
    preset = family_preset(family, cfg["preset"])
    if cfg["model"] not in ("late_fusion", "baseline"):
        raise ConfigError("model must be late_fusion or baseline")
    cfg["library"] = cfg["library"] or (preset.library if cfg["model"] == "late_fusion" else None)
    cfg["epochs"] = int(cfg["epochs"] or preset.epochs)
    cfg["width"] = int(cfg["width"] or preset.width)
    cfg["modes"] = int(cfg["modes"] or preset.modes)
    if cfg["model"] == "late_fusion":
        parse_library_spec(cfg["library"], param_names_for(family))  # validate early

    train_cfg = TrainConfig(width=cfg["width"], modes=cfg["modes"], epochs=cfg["epochs"],
                            initial_lr=float(cfg["initial_lr"]),
                            lr_halving_epoch=cfg["lr_halving_epoch"],
                            batch_size=int(cfg["batch_size"]),
                            lambda_sparse=float(cfg["lambda_sparse"]),
                            validation_fraction=float(cfg["validation_fraction"]),
                            seed=int(cfg["seed"]), library_text=cfg["library"])
    out = Path(cfg["out"])
    _write_config(cfg, out)

    if cfg["lambda_grid"]:
        rows, best = hyperparameter_sweep(ds, [float(v) for v in cfg["lambda_grid"]],
                                          train_cfg, model_kind=cfg["model"])
        _write_csv(out / "sweep.csv", rows, ["lambda", "val_loss", "status", "selected"])
        if best is None:
            raise RuntimeError("every sweep cell diverged; no lambda selected")
        print(f"train: sweep selected lambda_sparse={best:g}")
        train_cfg = TrainConfig(width=train_cfg.width, modes=train_cfg.modes,
                                epochs=train_cfg.epochs, initial_lr=train_cfg.initial_lr,
                                lr_halving_epoch=train_cfg.lr_halving_epoch,
                                batch_size=train_cfg.batch_size, lambda_sparse=best,
                                validation_fraction=train_cfg.validation_fraction,
                                seed=train_cfg.seed, library_text=train_cfg.library_text)

    model, report = train(cfg["model"], ds, train_cfg)
    save_model(model, out, train_config=train_cfg.to_dict())
    (out / "train_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True))
    # wall time lives outside the bitwise-reproducible report
    (out / "timing.json").write_text(json.dumps({"wall_time_s": report.wall_time_s}))
    print(f"train: {cfg['model']} on {family}, best epoch {report.best_epoch}, "
          f"final train loss {report.train_loss[-1]:.4g}")
    return 0


# eval ------------------------------------------------------------------------

def cmd_eval(args) -> int:
    schema = {"model": None, "data": _REQUIRED, "splits": ["in_domain_test", "out_domain_test"],
              "out": _REQUIRED, "self_eval": False}
    cfg = _resolve(schema, _load_config(args.config), {"out": args.out})
    out = Path(cfg["out"])
    _write_config(cfg, out)

    if cfg["self_eval"]:
        model = None
        model_name, model_seed = "truth", 0
    else:
        if not cfg["model"]:
            raise ConfigError("eval needs a model checkpoint (or self_eval: true)")
        model, meta = load_model(cfg["model"])
        model_name = meta["model"]["kind"]
        model_seed = int(meta["model"]["seed"])

    data_root = Path(cfg["data"])
    detail_rows: list[dict] = []
    for split in cfg["splits"]:
        split_dir = data_root / split if (data_root / split).is_dir() else data_root
        ds = read_dataset(split_dir)
        if cfg["self_eval"]:
            metrics = [compute_metrics(t.states, t.states) for t in ds.trajectories]
        else:
            metrics = evaluate_dataset(model, ds)
        agg = aggregate_metrics(metrics)
        (out / f"metrics_{split}.json").write_text(json.dumps({
            "aggregate": agg.to_dict(),
            "per_trajectory": [m.to_dict() for m in metrics],
        }, indent=2, sort_keys=True))
        detail_rows += per_parameter_rows(ds.manifest["equation_family"], model_name,
                                          model_seed, split, ds, metrics)
        print(f"eval: {split} rmse={agg.rmse:.4g} nrmse={agg.nrmse:.4g}")

    if detail_rows:
        fields = list(detail_rows[0].keys())
        _write_csv(out / "per_trajectory.csv", detail_rows, fields)
        summary = summarize_rows(detail_rows)
        _write_csv(out / "summary.csv", summary, list(summary[0].keys()))
    return 0


# ablate ----------------------------------------------------------------------

def _ablate_cell(task: dict) -> list[dict]:
    """One (library, lambda, seed) training + evaluation; safe to run in a
    worker process."""
    train_ds = read_dataset(task["data_root"] + "/train")
    cfg = TrainConfig(width=task["width"], modes=task["modes"], epochs=task["epochs"],
                      lambda_sparse=task["lambda"], seed=task["seed"],
                      library_text=task["library"])
    rows = []
    base = {"library_index": task["library_index"],
            "num_terms": task["num_terms"], "lambda": task["lambda"],
            "seed": task["seed"]}
    try:
        model, _report = train("late_fusion", train_ds, cfg)
    except TrainingDiverged:
        for split in ("in_domain_test", "out_domain_test"):
            rows.append({**base, "split": split, "rmse": "", "nrmse": "",
                         "num_blowups": "", "status": "diverged"})
        return rows
    for split in ("in_domain_test", "out_domain_test"):
        ds = read_dataset(task["data_root"] + "/" + split)
        agg = aggregate_metrics(evaluate_dataset(model, ds))
        rows.append({**base, "split": split, "rmse": agg.rmse, "nrmse": agg.nrmse,
                     "num_blowups": agg.num_blowups, "status": "ok"})
    return rows


def cmd_ablate(args) -> int:
    schema = {"data": _REQUIRED, "libraries": list(ABLATION_LIBRARIES),
              "lambdas": list(LAMBDA_GRID), "seeds": [0, 1, 2], "preset": "desk",
              "epochs": None, "width": None, "modes": None, "out": _REQUIRED}
    cfg = _resolve(schema, _load_config(args.config), {"out": args.out,
                                                       "preset": args.preset})
    train_ds = read_dataset(Path(cfg["data"]) / "train")
    family = train_ds.manifest["equation_family"]
    preset = family_preset(family, cfg["preset"])
    cfg["epochs"] = int(cfg["epochs"] or preset.epochs)
    cfg["width"] = int(cfg["width"] or preset.width)
    cfg["modes"] = int(cfg["modes"] or preset.modes)
    names = param_names_for(family)

    out = Path(cfg["out"])
    _write_config(cfg, out)
    tasks = []
    for li, library in enumerate(cfg["libraries"]):
        spec = parse_library_spec(library, names)
        for lam in cfg["lambdas"]:
            for seed in cfg["seeds"]:
                tasks.append({"data_root": str(cfg["data"]), "library": library,
                              "library_index": li, "num_terms": spec.num_terms,
                              "lambda": float(lam), "seed": int(seed),
                              "width": cfg["width"], "modes": cfg["modes"],
                              "epochs": cfg["epochs"]})

    workers = int(os.environ.get("LATEFUSE_THREADS", "1"))
    rows: list[dict] = []
    csv_path = out / "ablation.csv"
    fields = ["library_index", "num_terms", "lambda", "seed", "split", "rmse",
              "nrmse", "num_blowups", "status"]
    started = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell_rows in pool.map(_ablate_cell, tasks):
                rows += cell_rows
                _write_csv(csv_path, _sorted_rows(rows), fields)  # keep partials on disk
    else:
        for task in tasks:
            rows += _ablate_cell(task)
            _write_csv(csv_path, _sorted_rows(rows), fields)
    _write_csv(csv_path, _sorted_rows(rows), fields)
    print(f"ablate: {len(tasks)} cells in {time.perf_counter() - started:.1f}s -> {csv_path}")
    return 0


def _sorted_rows(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda r: (r["library_index"], -r["lambda"], r["seed"],
                                       r["split"]))


# inspect ---------------------------------------------------------------------

def cmd_inspect(args) -> int:
    schema = {"model": _REQUIRED, "data": _REQUIRED, "trajectory": 0,
              "out": _REQUIRED}
    cfg = _resolve(schema, _load_config(args.config), {"out": args.out})
    model, meta = load_model(cfg["model"])
    if meta["model"]["kind"] != "late_fusion":
        raise ConfigError("inspect needs a late_fusion checkpoint")
    ds = read_dataset(cfg["data"])
    idx = int(cfg["trajectory"])
    if not 0 <= idx < len(ds):
        raise ConfigError(f"trajectory index {idx} out of range (dataset has {len(ds)})")
    traj = ds.trajectories[idx]
    out = Path(cfg["out"])
    _write_config(cfg, out)
    interpret_export(model, traj.initial_state, traj.params, out, grid=traj.grid)
    print(f"inspect: wrote interpretability dump to {out}")
    return 0


# entry -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latefuse",
                                     description="Parameterized-PDE surrogate workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in (("gen", cmd_gen), ("train", cmd_train), ("eval", cmd_eval),
                       ("ablate", cmd_ablate), ("inspect", cmd_inspect)):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--preset", choices=("desk", "full"), default=None)
        if name == "gen":
            p.add_argument("--equation", default=None)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface as a diagnostic, not a trace
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
