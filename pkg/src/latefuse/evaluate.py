"""One-shot autoregressive rollouts, the six evaluation metrics,
per-parameter error tables, and the interpretability dump.

All metrics exclude the shared t=0 snapshot. Fourier errors use the
unnormalized forward transform over the spatial axes, which ties them to
the plain RMSE through Parseval: fourier_rmse^2 = (grid size) * rmse^2.
"""
from __future__ import annotations

from dataclasses import dataclass
import json
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .library import (LateFusionModel, evaluate_library, library_to_string,
                      split_residual, term_to_string)
from .tensor import Tensor, no_grad

NRMSE_EPS = 1e-8


@dataclass
class RolloutResult:
    """Model trajectory from u0 and the parameters alone (strictly one-shot)."""

    predicted: np.ndarray          # [steps+1, V, X(, Y)], index 0 is u0
    params: np.ndarray
    blowup_step: int | None = None


def rollout(model, u0, params, steps: int) -> RolloutResult:
    preds, blowups = rollout_batch(model, np.asarray(u0, dtype=np.float64)[None],
                                   np.asarray(params, dtype=np.float64)[None], steps)
    return RolloutResult(predicted=preds[0], params=np.asarray(params, dtype=np.float64),
                         blowup_step=blowups[0])


def rollout_batch(model, u0s: np.ndarray, params: np.ndarray, steps: int):
    """Roll all trajectories at once; returns predictions
    [N, steps+1, V, ...] and the first non-finite step index per sample."""
    u0s = np.asarray(u0s, dtype=np.float64)
    n = u0s.shape[0]
    preds = np.empty((n, steps + 1) + u0s.shape[1:])
    preds[:, 0] = u0s
    blowup: list[int | None] = [None] * n
    state = u0s
    with no_grad(), np.errstate(all="ignore"):
        for s in range(1, steps + 1):
            state = model.step(Tensor(state), params, check_finite=False).data
            preds[:, s] = state
            finite = np.isfinite(state).reshape(n, -1).all(axis=1)
            for i in np.nonzero(~finite)[0]:
                if blowup[i] is None:
                    blowup[i] = s
    return preds, blowup


@dataclass
class TrajectoryMetrics:
    rmse: float
    boundary_rmse: float
    nrmse: float
    max_error: float
    conserved_error: float
    fourier_rmse: float
    compared_snapshots: int
    blowup_step: int | None = None
    # mean-square pieces kept so split aggregation matches the formulas
    msq_diff: float = 0.0
    msq_true: float = 0.0
    msq_boundary: float = 0.0
    msq_fourier: float = 0.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("rmse", "boundary_rmse", "nrmse", "max_error",
                 "conserved_error", "fourier_rmse", "compared_snapshots", "blowup_step")}


def _boundary_mask(spatial_shape: tuple[int, ...]) -> np.ndarray:
    mask = np.zeros(spatial_shape, dtype=bool)
    for axis, n in enumerate(spatial_shape):
        sl = [slice(None)] * len(spatial_shape)
        sl[axis] = 0
        mask[tuple(sl)] = True
        sl[axis] = n - 1
        mask[tuple(sl)] = True
    return mask


def compute_metrics(pred: np.ndarray, true: np.ndarray,
                    blowup_step: int | None = None) -> TrajectoryMetrics:
    """All six metrics for one trajectory ([T_steps+1, V, X(, Y)] arrays).

    On blow-up only the finite prefix is compared; with no finite compared
    snapshot every metric is +inf and the result stays flagged.
    """
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {true.shape}")
    end = pred.shape[0] if blowup_step is None else blowup_step
    p, t = pred[1:end], true[1:end]
    compared = p.shape[0]
    if compared == 0:
        inf = float("inf")
        return TrajectoryMetrics(inf, inf, inf, inf, inf, inf, 0, blowup_step,
                                 inf, inf, inf, inf)

    spatial_axes = tuple(range(2, p.ndim))
    with np.errstate(over="ignore", invalid="ignore"):
        diff = p - t
        msq_diff = float(np.mean(diff * diff))
        msq_true = float(np.mean(t * t))
        rmse = float(np.sqrt(msq_diff))
        nrmse = rmse / (np.sqrt(msq_true) + NRMSE_EPS)

        mask = _boundary_mask(p.shape[2:])
        bdiff = diff[..., mask]
        msq_boundary = float(np.mean(bdiff * bdiff))

        max_error = float(np.max(np.abs(diff)))

        sums = diff.sum(axis=spatial_axes)          # [T, V] spatial-sum differences
        conserved = float(np.sqrt(np.sum(sums * sums)))

        spectrum = np.fft.fftn(diff, axes=spatial_axes)
        msq_fourier = float(np.mean(np.abs(spectrum) ** 2))

    return TrajectoryMetrics(
        rmse=rmse, boundary_rmse=float(np.sqrt(msq_boundary)), nrmse=float(nrmse),
        max_error=max_error, conserved_error=conserved,
        fourier_rmse=float(np.sqrt(msq_fourier)), compared_snapshots=compared,
        blowup_step=blowup_step, msq_diff=msq_diff, msq_true=msq_true,
        msq_boundary=msq_boundary, msq_fourier=msq_fourier,
    )


@dataclass
class SplitMetrics:
    rmse: float
    boundary_rmse: float
    nrmse: float
    max_error: float
    conserved_error: float
    fourier_rmse: float
    num_trajectories: int
    num_blowups: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def aggregate_metrics(reports: list[TrajectoryMetrics]) -> SplitMetrics:
    """Collapse per-trajectory metrics into one value per split: root mean
    square for the norm-based metrics, max for the worst-case metric."""
    if not reports:
        raise ValueError("nothing to aggregate")
    rmse = float(np.sqrt(np.mean([r.msq_diff for r in reports])))
    nrmse = rmse / (float(np.sqrt(np.mean([r.msq_true for r in reports]))) + NRMSE_EPS)
    return SplitMetrics(
        rmse=rmse,
        boundary_rmse=float(np.sqrt(np.mean([r.msq_boundary for r in reports]))),
        nrmse=nrmse,
        max_error=float(np.max([r.max_error for r in reports])),
        conserved_error=float(np.sqrt(np.mean([r.conserved_error ** 2 for r in reports]))),
        fourier_rmse=float(np.sqrt(np.mean([r.msq_fourier for r in reports]))),
        num_trajectories=len(reports),
        num_blowups=sum(1 for r in reports if r.blowup_step is not None),
    )


def evaluate_dataset(model, ds: Dataset) -> list[TrajectoryMetrics]:
    """One-shot rollout of every trajectory followed by the metric suite.

    The model sees only each trajectory's initial state and parameters; the
    stored states enter the comparison only.
    """
    if len(ds) == 0:
        return []
    states = ds.states_array()
    steps = states.shape[1] - 1
    preds, blowups = rollout_batch(model, states[:, 0], ds.params_array(), steps)
    return [compute_metrics(preds[i], states[i], blowup_step=blowups[i])
            for i in range(len(ds))]


# per-parameter tables -------------------------------------------------------

def per_parameter_rows(equation: str, model_name: str, seed: int, split: str,
                       ds: Dataset, metrics: list[TrajectoryMetrics]) -> list[dict]:
    names = ds.manifest["param_names"]
    rows = []
    for i, (traj, m) in enumerate(zip(ds.trajectories, metrics)):
        row = {"equation": equation, "model": model_name, "seed": seed,
               "split": split, "trajectory": i}
        for name, value in zip(names, traj.params):
            row[f"param_{name}"] = float(value)
        row["rmse"] = m.rmse
        rows.append(row)
    return rows


def summarize_rows(detail_rows: list[dict]) -> list[dict]:
    """Per (equation, model, split): mean and std across seeds of the
    seed-level aggregate RMSE (root mean square over trajectories)."""
    by_seed: dict[tuple, list[float]] = {}
    for row in detail_rows:
        key = (row["equation"], row["model"], row["split"], row["seed"])
        by_seed.setdefault(key, []).append(row["rmse"] ** 2)
    by_group: dict[tuple, list[float]] = {}
    for (eq, model, split, _seed), sq in sorted(by_seed.items()):
        by_group.setdefault((eq, model, split), []).append(float(np.sqrt(np.mean(sq))))
    out = []
    for (eq, model, split), values in by_group.items():
        out.append({
            "equation": eq, "model": model, "split": split,
            "num_seeds": len(values),
            "rmse_mean": float(np.mean(values)),
            "rmse_std": float(np.std(values, ddof=1)) if len(values) > 1 else "",
        })
    return out


# derivative references and the interpretability dump ------------------------

def central_diff_periodic(u: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2.0 * dx)


def second_diff_periodic(u: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    return (np.roll(u, -1, axis=axis) - 2.0 * u + np.roll(u, 1, axis=axis)) / (dx * dx)


def interpret_export(model: LateFusionModel, u0: np.ndarray, params: np.ndarray,
                     out_dir, grid=None) -> dict:
    """Dump everything needed to inspect one prediction step: the input,
    hidden states, library term fields, coefficients, and the residual split,
    plus finite-difference derivative references of the input (diagnostics
    only, never model inputs)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    u0 = np.asarray(u0, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)

    with no_grad():
        hidden = model.hidden_states(Tensor(u0)).data
        theta = evaluate_library(model.library, hidden, params).data
        dep, indep = split_residual(model.library, model.coeffs, hidden, params)

    arrays: dict[str, np.ndarray] = {"u0": u0, "coeffs": model.coeffs.data,
                                     "residual_param_dependent": dep,
                                     "residual_param_independent": indep}
    for j in range(hidden.shape[0]):
        arrays[f"hidden_{j}"] = hidden[j]
    for i in range(theta.shape[0]):
        arrays[f"term_{i}"] = theta[i]

    spatial_dims = u0.ndim - 1
    if grid is not None:
        spacings = grid.spacings
        periodic = model.family != "reaction_diffusion_2d"
    else:
        spacings = tuple(1.0 / n for n in u0.shape[1:])
        periodic = spatial_dims == 1
    if spatial_dims == 1:
        dx = spacings[0]
        if periodic:
            arrays["ref_ddx"] = central_diff_periodic(u0, dx)
            arrays["ref_d2dx2"] = second_diff_periodic(u0, dx)
        else:
            arrays["ref_ddx"] = np.gradient(u0, dx, axis=-1)
            arrays["ref_d2dx2"] = np.gradient(np.gradient(u0, dx, axis=-1), dx, axis=-1)
    else:
        dx, dy = spacings
        arrays["ref_ddx"] = np.gradient(u0, dx, axis=-2)
        arrays["ref_ddy"] = np.gradient(u0, dy, axis=-1)
        arrays["ref_laplacian"] = (np.gradient(np.gradient(u0, dx, axis=-2), dx, axis=-2)
                                   + np.gradient(np.gradient(u0, dy, axis=-1), dy, axis=-1))

    index = {"schema_version": 1,
             "library": library_to_string(model.library),
             "terms": [term_to_string(model.library, t) for t in model.library.terms],
             "param_names": list(model.param_names),
             "params": [float(v) for v in params.reshape(-1)],
             "arrays": {}}
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f8")
        (out / f"{name}.bin").write_bytes(data.tobytes())
        index["arrays"][name] = {"file": f"{name}.bin", "shape": list(data.shape),
                                 "dtype": "<f8"}
    (out / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True))
    return index
