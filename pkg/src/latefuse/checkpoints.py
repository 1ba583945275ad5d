"""Model checkpoint container: ``model.json`` (architecture, training
config, seed, weight manifest) plus ``weights.bin`` (named float64 arrays,
little-endian, concatenated in manifest order)."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .equations import param_names_for
from .library import LateFusionModel, parse_library_spec
from .models import ArchConfig, BaselineModel

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_model(model, out_dir, train_config: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    named = model.named_params()
    blobs = [np.ascontiguousarray(p.data, dtype="<f8") for _, p in named]
    meta = {
        "schema_version": CHECKPOINT_VERSION,
        "model": model.config_dict(),
        "train_config": train_config or {},
        "weights": [{"name": name, "shape": list(p.data.shape)} for name, p in named],
    }
    (out / "weights.bin").write_bytes(b"".join(b.tobytes() for b in blobs))
    (out / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_model(model_dir):
    root = Path(model_dir)
    meta_path = root / "model.json"
    if not meta_path.is_file():
        raise CheckpointError(f"no model.json under {root}")
    meta = json.loads(meta_path.read_text())
    if meta.get("schema_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('schema_version')}")
    cfg = meta["model"]
    arch = ArchConfig.from_dict(cfg["arch"])
    family = cfg["family"]
    if cfg["kind"] == "late_fusion":
        library = parse_library_spec(cfg["library"], param_names_for(family),
                                     hidden_arity=cfg.get("hidden_arity"))
        model = LateFusionModel(arch, library, family, seed=int(cfg["seed"]))
    elif cfg["kind"] == "baseline":
        model = BaselineModel(arch, family, tuple(cfg["param_names"]), seed=int(cfg["seed"]))
    else:
        raise CheckpointError(f"unknown model kind {cfg['kind']!r}")

    raw = (root / "weights.bin").read_bytes()
    named = dict(model.named_params())
    offset = 0
    for entry in meta["weights"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in named:
            raise CheckpointError(f"unexpected weight {name!r} in manifest")
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = raw[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError("weights.bin shorter than its manifest")
        arr = np.frombuffer(chunk, dtype="<f8").reshape(shape)
        if named[name].data.shape != arr.shape:
            raise CheckpointError(f"shape mismatch for weight {name!r}")
        named[name].data = arr.astype(np.float64).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError("weights.bin longer than its manifest")
    return model, meta
