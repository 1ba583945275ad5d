"""Single-step training on transition pairs with the composite
MSE + L1-sparsity objective, plus the sparsity-coefficient sweep."""
from __future__ import annotations

from dataclasses import dataclass, field
import time

import numpy as np

from . import tensor as T
from .datasets import Dataset
from .equations import num_variables_for, param_names_for
from .library import LateFusionModel, parse_library_spec
from .models import ArchConfig, BaselineModel, ModelError
from .optim import Adam, OptimizerError, halved_lr
from .tensor import Tensor, no_grad

MODEL_KINDS = ("late_fusion", "baseline")


class TrainingDiverged(RuntimeError):
    """Non-finite loss or gradients; carries the last finite report."""

    def __init__(self, message: str, report: "TrainReport"):
        super().__init__(message)
        self.report = report


@dataclass
class TrainConfig:
    width: int
    modes: int
    epochs: int = 100
    initial_lr: float = 1e-3
    lr_halving_epoch: int | None = None   # defaults to epochs // 2
    batch_size: int = 32
    lambda_sparse: float = 1e-4
    validation_fraction: float = 0.10
    seed: int = 0
    library_text: str | None = None       # required for late_fusion
    activation: str = "gelu"
    output_bound: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.lambda_sparse < 0:
            raise ValueError("lambda_sparse must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def halving_epoch(self) -> int:
        return self.epochs // 2 if self.lr_halving_epoch is None else self.lr_halving_epoch

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "modes": self.modes,
            "epochs": self.epochs,
            "initial_lr": self.initial_lr,
            "lr_halving_epoch": self.halving_epoch,
            "batch_size": self.batch_size,
            "lambda_sparse": self.lambda_sparse,
            "validation_fraction": self.validation_fraction,
            "seed": self.seed,
            "library_text": self.library_text,
            "activation": self.activation,
            "output_bound": self.output_bound,
        }


@dataclass
class TrainReport:
    config: dict
    seed: int
    train_loss: list[float] = field(default_factory=list)
    val_l_data: list[float] = field(default_factory=list)
    best_epoch: int = -1
    coeffs: list | None = None
    wall_time_s: float = 0.0
    train_trajectories: list[int] = field(default_factory=list)
    val_trajectories: list[int] = field(default_factory=list)
    num_pairs: int = 0
    diverged: bool = False

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "train_loss": self.train_loss,
            "val_l_data": self.val_l_data,
            "best_epoch": self.best_epoch,
            "coeffs": self.coeffs,
            "train_trajectories": self.train_trajectories,
            "val_trajectories": self.val_trajectories,
            "num_pairs": self.num_pairs,
            "diverged": self.diverged,
        }


@dataclass
class TransitionPairs:
    """All consecutive snapshot pairs, each tagged with its trajectory's
    parameters and provenance index."""

    inputs: np.ndarray        # [M, V, X(, Y)]
    targets: np.ndarray       # [M, V, X(, Y)]
    params: np.ndarray        # [M, P]
    traj_indices: np.ndarray  # [M]

    def __len__(self) -> int:
        return self.inputs.shape[0]


def make_transition_pairs(ds: Dataset, trajectory_indices=None) -> TransitionPairs:
    if len(ds) == 0:
        raise ValueError("dataset has no trajectories")
    if trajectory_indices is None:
        trajectory_indices = range(len(ds))
    inputs, targets, params, prov = [], [], [], []
    for i in trajectory_indices:
        traj = ds.trajectories[i]
        if traj.states.shape[0] < 2:
            raise ValueError(f"trajectory {i} has fewer than 2 snapshots")
        inputs.append(traj.states[:-1])
        targets.append(traj.states[1:])
        steps = traj.states.shape[0] - 1
        params.append(np.broadcast_to(traj.params, (steps, traj.params.size)))
        prov.append(np.full(steps, i, dtype=np.intp))
    return TransitionPairs(
        inputs=np.concatenate(inputs, axis=0),
        targets=np.concatenate(targets, axis=0),
        params=np.concatenate(params, axis=0),
        traj_indices=np.concatenate(prov, axis=0),
    )


def compute_loss(pred, target, coeffs: Tensor | None, lambda_sparse: float):
    """Composite objective.

    L_data is the batch mean of the per-sample squared L2 norm (summed over
    all variable/space entries); L_sparse is the entrywise L1 norm of the
    coefficient matrix. Returns (total tensor, l_data, l_sparse).
    """
    pred_t = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, dtype=np.float64))
    target_arr = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred_t.shape != target_arr.shape:
        raise ValueError(f"prediction shape {pred_t.shape} != target shape {target_arr.shape}")
    if not (np.isfinite(pred_t.data).all() and np.isfinite(target_arr).all()):
        raise ValueError("non-finite inputs to the loss")
    batch = pred_t.shape[0] if pred_t.ndim > 2 else 1
    diff = T.sub(pred_t, Tensor(target_arr))
    l_data = T.mul(T.reduce_sum(T.mul(diff, diff)), 1.0 / batch)
    if coeffs is not None:
        l_sparse = T.reduce_sum(T.absolute(coeffs))
        total = T.add(l_data, T.mul(l_sparse, lambda_sparse))
        return total, float(l_data.data), float(l_sparse.data)
    return l_data, float(l_data.data), 0.0


def build_model(model_kind: str, family: str, grid_spatial_dims: int, cfg: TrainConfig):
    names = param_names_for(family)
    num_vars = num_variables_for(family)
    if model_kind == "late_fusion":
        if not cfg.library_text:
            raise ValueError("late_fusion training needs a library")
        lib = parse_library_spec(cfg.library_text, names)
        arch = ArchConfig(spatial_dims=grid_spatial_dims, in_channels=num_vars,
                          out_channels=lib.hidden_arity, width=cfg.width,
                          modes=cfg.modes, activation=cfg.activation,
                          output_bound=cfg.output_bound)
        return LateFusionModel(arch, lib, family, seed=cfg.seed)
    if model_kind == "baseline":
        arch = ArchConfig(spatial_dims=grid_spatial_dims, in_channels=num_vars + len(names),
                          out_channels=num_vars, width=cfg.width,
                          modes=cfg.modes, activation=cfg.activation,
                          output_bound=cfg.output_bound)
        return BaselineModel(arch, family, names, seed=cfg.seed)
    raise ValueError(f"model_kind must be one of {MODEL_KINDS}")


def _validation_l_data(model, pairs: TransitionPairs, chunk: int = 256) -> float:
    if len(pairs) == 0:
        return float("nan")
    total = 0.0
    with no_grad():
        for start in range(0, len(pairs), chunk):
            sl = slice(start, start + chunk)
            pred = model.step(Tensor(pairs.inputs[sl]), pairs.params[sl],
                              check_finite=False)
            diff = pred.data - pairs.targets[sl]
            total += float(np.sum(diff * diff))
    return total / len(pairs)


def train(model_kind: str, ds: Dataset, cfg: TrainConfig):
    """Shuffled mini-batch Adam on single-step transitions.

    The validation split is drawn at trajectory level (no pair leakage);
    the learning rate halves at ``halving_epoch``; the weights from the
    best-validation epoch are returned.
    """
    start_time = time.perf_counter()
    family = ds.manifest["equation_family"]
    model = build_model(model_kind, family, ds.grid.spatial_dims, cfg)

    split_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,)))
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2,)))
    perm = split_rng.permutation(len(ds))
    n_val = int(round(cfg.validation_fraction * len(ds)))
    val_idx = sorted(int(i) for i in perm[:n_val])
    train_idx = sorted(int(i) for i in perm[n_val:])
    if not train_idx:
        raise ValueError("validation split leaves no training trajectories")

    train_pairs = make_transition_pairs(ds, train_idx)
    val_pairs = make_transition_pairs(ds, val_idx) if val_idx else None

    report = TrainReport(config=cfg.to_dict(), seed=cfg.seed,
                         train_trajectories=train_idx, val_trajectories=val_idx,
                         num_pairs=len(train_pairs))

    coeffs = model.coeffs if model_kind == "late_fusion" else None
    optimizer = Adam(model.parameters(), lr=cfg.initial_lr)
    best_score = np.inf
    best_snapshot = None

    for epoch in range(cfg.epochs):
        optimizer.lr = halved_lr(cfg.initial_lr, epoch, cfg.halving_epoch)
        order = shuffle_rng.permutation(len(train_pairs))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                pred = model.step(Tensor(train_pairs.inputs[idx]), train_pairs.params[idx])
                total, l_data, _ = compute_loss(pred, train_pairs.targets[idx],
                                                coeffs, cfg.lambda_sparse)
                if not np.isfinite(total.data):
                    raise ValueError("non-finite loss")
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
            except (ValueError, ModelError, OptimizerError) as exc:
                report.diverged = True
                report.wall_time_s = time.perf_counter() - start_time
                raise TrainingDiverged(f"training diverged at epoch {epoch}: {exc}",
                                       report) from exc
            epoch_losses.append(float(total.data))
        report.train_loss.append(float(np.mean(epoch_losses)))

        if val_pairs is not None:
            val_loss = _validation_l_data(model, val_pairs)
            report.val_l_data.append(val_loss)
            score = val_loss
        else:
            score = report.train_loss[-1]
        if np.isfinite(score) and score < best_score:
            best_score = score
            report.best_epoch = epoch
            best_snapshot = {name: p.data.copy() for name, p in model.named_params()}

    if best_snapshot is not None:
        for name, p in model.named_params():
            p.data[...] = best_snapshot[name]
    if coeffs is not None:
        report.coeffs = coeffs.data.tolist()
    report.wall_time_s = time.perf_counter() - start_time
    return model, report


def hyperparameter_sweep(ds: Dataset, lambda_grid, base_cfg: TrainConfig,
                         model_kind: str = "late_fusion"):
    """Train once per sparsity coefficient with a shared seed and split;
    pick the best validation L_data, breaking ties toward the sparser model."""
    lambdas = list(lambda_grid)
    if not lambdas:
        raise ValueError("lambda grid must be nonempty")
    rows = []
    for lam in lambdas:
        cfg = TrainConfig(width=base_cfg.width, modes=base_cfg.modes,
                          epochs=base_cfg.epochs, initial_lr=base_cfg.initial_lr,
                          lr_halving_epoch=base_cfg.lr_halving_epoch,
                          batch_size=base_cfg.batch_size, lambda_sparse=float(lam),
                          validation_fraction=base_cfg.validation_fraction,
                          seed=base_cfg.seed, library_text=base_cfg.library_text)
        try:
            _, rep = train(model_kind, ds, cfg)
            val = rep.val_l_data[rep.best_epoch] if rep.val_l_data else rep.train_loss[rep.best_epoch]
            rows.append({"lambda": float(lam), "val_loss": float(val), "status": "ok"})
        except TrainingDiverged:
            rows.append({"lambda": float(lam), "val_loss": float("inf"), "status": "diverged"})
    finite = [r for r in rows if np.isfinite(r["val_loss"])]
    if finite:
        best = min(finite, key=lambda r: (r["val_loss"], -r["lambda"]))
    else:
        best = None
    for r in rows:
        r["selected"] = bool(best is not None and r is best)
    return rows, (best["lambda"] if best else None)
