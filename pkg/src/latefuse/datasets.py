"""Trajectory dataset generation and the on-disk container.

A dataset directory holds ``manifest.json`` plus two little-endian float32
arrays, ``params.bin`` [N, P] and ``states.bin`` [N, T_steps+1, V, X(, Y)],
row-major. States are quantized to float32 at generation time so a
write/read cycle is bitwise lossless.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import json
from pathlib import Path

import numpy as np

from .equations import (canonical_family, equation_from_params, num_variables_for,
                        param_names_for)
from .grids import GridSpec, InitialConditionSpec, sample_wave_ic
from .solvers import NonFiniteError, Trajectory, solve_trajectory

SCHEMA_VERSION = 1
MAX_RETRIES = 20
SPLIT_LABELS = ("train", "in_domain_test", "out_domain_test")


class DatasetIOError(RuntimeError):
    """Corrupt, truncated, or incompatible dataset container."""


@dataclass
class Dataset:
    trajectories: list[Trajectory]
    split_label: str
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split_label not in SPLIT_LABELS:
            raise ValueError(f"split_label must be one of {SPLIT_LABELS}")
        grids = {t.grid for t in self.trajectories}
        if len(grids) > 1:
            raise ValueError("all trajectories must share one GridSpec")
        families = {t.equation.family for t in self.trajectories}
        if len(families) > 1:
            raise ValueError("all trajectories must share one equation family")

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def grid(self) -> GridSpec:
        return self.trajectories[0].grid if self.trajectories else GridSpec.from_dict(self.manifest["grid"])

    def params_array(self) -> np.ndarray:
        if not self.trajectories:
            return np.zeros((0, len(self.manifest["param_names"])))
        return np.stack([t.params for t in self.trajectories])

    def states_array(self) -> np.ndarray:
        if not self.trajectories:
            g = GridSpec.from_dict(self.manifest["grid"])
            v = num_variables_for(self.manifest["equation_family"])
            return np.zeros((0, g.num_snapshots, v) + g.points_per_dim)
        return np.stack([t.states for t in self.trajectories])


def _quantize(a: np.ndarray) -> np.ndarray:
    """Round-trip through float32 so in-memory values match the container."""
    return a.astype(np.float32).astype(np.float64)


def _validate_ranges(family: str, ranges: dict[str, tuple[float, float]]) -> None:
    expected = set(param_names_for(family))
    got = set(ranges)
    if got != expected:
        raise ValueError(f"{family} needs ranges for {sorted(expected)}, got {sorted(got)}")
    for name, (lo, hi) in ranges.items():
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise ValueError(f"empty or inverted range for {name}: ({lo}, {hi})")


def generate_dataset(family: str, grid: GridSpec, ranges: dict[str, tuple[float, float]],
                     count: int, seed: int, ic_spec: InitialConditionSpec,
                     split_label: str, constants: dict | None = None) -> Dataset:
    """Sample ``count`` trajectories with i.i.d. uniform parameters.

    Trajectories that blow up are redrawn from a deterministic retry stream
    (bounded attempts, recorded in the manifest) so the same seed always
    yields the same dataset.
    """
    family = canonical_family(family)
    _validate_ranges(family, ranges)
    if count < 0:
        raise ValueError("count must be >= 0")
    names = param_names_for(family)
    num_vars = num_variables_for(family)

    trajectories: list[Trajectory] = []
    retries: dict[str, int] = {}
    for i in range(count):
        attempt = 0
        while True:
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(i, attempt))
            rng = np.random.default_rng(ss)
            values = {name: rng.uniform(lo, hi) for name, (lo, hi) in
                      ((n, ranges[n]) for n in names)}
            ic_seed = int(rng.integers(0, 2 ** 63 - 1))
            eq = equation_from_params(family, np.array([values[n] for n in names]),
                                      constants)
            try:
                if ic_spec.kind == "gaussian_noise":
                    u0 = np.random.default_rng(ic_seed).standard_normal(
                        (num_vars,) + grid.points_per_dim)
                else:
                    u0 = sample_wave_ic(ic_spec, grid, ic_seed)
                traj = solve_trajectory(eq, grid, u0)
            except NonFiniteError:
                attempt += 1
                if attempt > MAX_RETRIES:
                    raise
                continue
            if attempt:
                retries[str(i)] = attempt
            break
        qparams = _quantize(traj.params)
        trajectories.append(Trajectory(
            params=qparams,
            states=_quantize(traj.states),
            equation=equation_from_params(family, qparams, constants),
            grid=grid,
        ))

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "equation_family": family,
        "boundary": trajectories[0].equation.boundary if trajectories
                    else equation_from_params(family, np.zeros(len(names)), constants).boundary,
        "grid": grid.to_dict(),
        "param_names": list(names),
        "ranges": {k: [float(lo), float(hi)] for k, (lo, hi) in ranges.items()},
        "constants": dict(constants) if constants else {},
        "count": count,
        "seed": int(seed),
        "split_label": split_label,
        "initial_condition": ic_spec.to_dict(),
        "dtype": "float32",
        "shapes": {
            "params": [count, len(names)],
            "states": [count, grid.num_snapshots, num_vars, *grid.points_per_dim],
        },
        "retries": retries,
    }
    ds = Dataset(trajectories=trajectories, split_label=split_label, manifest=manifest)
    _validate_params_in_range(ds)
    return ds


def _validate_params_in_range(ds: Dataset) -> None:
    ranges = ds.manifest["ranges"]
    names = ds.manifest["param_names"]
    for traj in ds.trajectories:
        for name, value in zip(names, traj.params):
            lo, hi = ranges[name]
            # float32 quantization may land exactly on a bound
            if not (lo - 1e-6 <= value <= hi + 1e-6):
                raise ValueError(f"parameter {name}={value} outside declared range ({lo}, {hi})")


def _checksum(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def write_dataset(ds: Dataset, path) -> None:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    params32 = np.ascontiguousarray(ds.params_array(), dtype="<f4")
    states32 = np.ascontiguousarray(ds.states_array(), dtype="<f4")
    manifest = dict(ds.manifest)
    manifest["arrays"] = {}
    for name, arr in (("params", params32), ("states", states32)):
        raw = arr.tobytes()
        (out / f"{name}.bin").write_bytes(raw)
        manifest["arrays"][name] = {
            "file": f"{name}.bin",
            "shape": list(arr.shape),
            "dtype": "<f4",
            "checksum_sha256": _checksum(raw),
        }
    manifest["shapes"] = {"params": list(params32.shape), "states": list(states32.shape)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def read_dataset(path) -> Dataset:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetIOError(f"no manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DatasetIOError(
            f"schema version {manifest.get('schema_version')} != supported {SCHEMA_VERSION}")

    arrays = {}
    for name in ("params", "states"):
        meta = manifest["arrays"][name]
        raw = (root / meta["file"]).read_bytes()
        if _checksum(raw) != meta["checksum_sha256"]:
            raise DatasetIOError(f"checksum mismatch for {meta['file']}")
        arr = np.frombuffer(raw, dtype=meta["dtype"])
        expected = tuple(meta["shape"])
        if arr.size != int(np.prod(expected)):
            raise DatasetIOError(f"{meta['file']} size inconsistent with shape {expected}")
        if expected != tuple(manifest["shapes"][name]):
            raise DatasetIOError(f"{name} shape disagrees with manifest shapes entry")
        arrays[name] = arr.reshape(expected).astype(np.float64)

    grid = GridSpec.from_dict(manifest["grid"])
    family = manifest["equation_family"]
    constants = manifest.get("constants") or None
    trajectories = []
    for params, states in zip(arrays["params"], arrays["states"]):
        trajectories.append(Trajectory(
            params=params,
            states=states,
            equation=equation_from_params(family, params, constants),
            grid=grid,
        ))
    return Dataset(trajectories=trajectories, split_label=manifest["split_label"],
                   manifest=manifest)
