"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. Criterion 6 (the library
ablation sweep) is marked slow; deselect with `-m "not slow"`.
"""
import csv
import json
import math
import subprocess
import sys
from collections import defaultdict

import numpy as np
import pytest

from latefuse import tensor as T
from latefuse.datasets import generate_dataset
from latefuse.equations import (Advection, ReactionDiffusion1D, ReactionDiffusion2D)
from latefuse.evaluate import compute_metrics, evaluate_dataset, split_residual
from latefuse.grids import GridSpec, SineWaveIC
from latefuse.library import evaluate_library, parse_library_spec
from latefuse.models import ArchConfig, FNOBackbone
from latefuse.optim import finite_diff_check
from latefuse.presets import family_preset, ranges_for
from latefuse.solvers import solve_trajectory
from latefuse.tensor import Tensor, no_grad
from latefuse.train import TrainConfig, train

TWO_PI = 2.0 * math.pi

DESK_SEEDS = (0, 1, 2)


def report(criterion: str, detail: str) -> None:
    print(f"\n[acceptance] {criterion}: PASS ({detail})")


# ---------------------------------------------------------------------------
# criterion 1: generator oracles
# ---------------------------------------------------------------------------

def test_criterion_1_generator_oracles():
    # advection vs closed-form characteristic solution, < 1e-12 max-abs
    grid = GridSpec(1, (128,), ((0.0, 1.0),), snapshot_dt=0.05, horizon=0.5)
    waves = SineWaveIC(amplitudes=(0.8, 0.5), wavenumbers=(3, 7), phases=(0.4, 2.1),
                       length=1.0)
    traj = solve_trajectory(Advection(beta=0.43), grid, waves)
    x = grid.axis_coords(0)
    worst_adv = 0.0
    for s in range(grid.num_snapshots):
        expected = waves.evaluate(x, shift=0.43 * s * grid.snapshot_dt)
        worst_adv = max(worst_adv, float(np.max(np.abs(traj.states[s, 0] - expected))))
    assert worst_adv < 1e-12

    # RD1D logistic oracle (nu = 0), < 1e-4 max-abs at T = 0.5, dt_eff <= 1e-4
    grid_rd = GridSpec(1, (32,), ((0.0, 1.0),), snapshot_dt=0.005, horizon=0.5,
                       internal_substeps=50)
    traj_log = solve_trajectory(ReactionDiffusion1D(nu=0.0, rho=0.73), grid_rd,
                                np.full(32, 0.4))
    growth = math.exp(0.73 * 0.5)
    expected = 0.4 * growth / (1.0 - 0.4 + 0.4 * growth)
    err_log = float(np.max(np.abs(traj_log.states[-1, 0] - expected)))
    assert err_log < 1e-4

    # RD1D heat-decay oracle (rho = 0), < 1e-3 relative
    grid_heat = GridSpec(1, (128,), ((0.0, 1.0),), snapshot_dt=0.005, horizon=0.5,
                         internal_substeps=50)
    x = grid_heat.axis_coords(0)
    u0 = np.sin(TWO_PI * x)
    traj_heat = solve_trajectory(ReactionDiffusion1D(nu=0.1, rho=0.0), grid_heat, u0)
    expected = u0 * math.exp(-0.1 * TWO_PI ** 2 * 0.5)
    err_heat = float(np.max(np.abs(traj_heat.states[-1, 0] - expected))
                     / np.max(np.abs(expected)))
    assert err_heat < 1e-3

    # RD2D uniform-state ODE oracle, < 1e-4
    grid_2d = GridSpec(2, (16, 16), ((-1.0, 1.0), (-1.0, 1.0)), snapshot_dt=0.1,
                       horizon=4.0, internal_substeps=5)
    traj_2d = solve_trajectory(ReactionDiffusion2D(k=0.0), grid_2d,
                               np.full((2, 16, 16), 0.3))
    y = np.array([0.3, 0.3])
    dt = 1e-4
    for _ in range(int(round(4.0 / dt))):
        def f(y):
            u, v = y
            return np.array([u - u ** 3 - v, u - v])
        k1 = f(y); k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2); k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    got = np.array([traj_2d.states[-1, 0, 0, 0], traj_2d.states[-1, 1, 0, 0]])
    err_2d = float(np.max(np.abs(got - y)))
    assert err_2d < 1e-4

    report("criterion 1", f"advection {worst_adv:.2e}, logistic {err_log:.2e}, "
                          f"heat {err_heat:.2e}, rd2d-ode {err_2d:.2e}")


# ---------------------------------------------------------------------------
# criterion 2: gradient suite on a 16-point grid
# ---------------------------------------------------------------------------

def test_criterion_2_gradient_suite():
    rng = np.random.default_rng(0)
    results = {}

    # spectral convolution alone
    from latefuse.models import SpectralConv1d
    layer = SpectralConv1d(2, 2, modes=4, rng=np.random.default_rng(1))
    x = Tensor(rng.standard_normal((1, 2, 16)))

    def f_spectral():
        out = layer(x)
        return T.reduce_sum(T.mul(out, out))

    results["spectral_conv"] = finite_diff_check(
        f_spectral, [p for _, p in layer.named_params("sc")])

    # full backbone
    arch = ArchConfig(spatial_dims=1, in_channels=1, out_channels=2, width=3, modes=3)
    backbone = FNOBackbone(arch, seed=2)
    u = Tensor(rng.standard_normal((2, 1, 16)))
    target = rng.standard_normal((2, 2, 16))

    def f_backbone():
        d = T.sub(backbone(u), Tensor(target))
        return T.reduce_sum(T.mul(d, d))

    results["backbone"] = finite_diff_check(
        f_backbone, [p for _, p in backbone.named_params()])

    # library evaluation w.r.t. hidden fields
    lib = parse_library_spec(
        "1, h0, h1, h0^2, h1^2, h0*h1, rho*h0^2, rho*h1^2, rho*h0*h1, "
        "nu*h0^2, nu*h1^2, nu*h0*h1", ("nu", "rho"))
    hidden = Tensor(rng.standard_normal((1, 2, 16)), requires_grad=True)
    weights = rng.standard_normal((1, 12, 16))

    def f_library():
        theta = evaluate_library(lib, hidden, np.array([[0.05, 0.6]]))
        return T.reduce_sum(T.mul(theta, Tensor(weights)))

    results["library"] = finite_diff_check(f_library, [hidden])

    # end-to-end late-fusion step + composite loss
    from latefuse.library import LateFusionModel
    adv_lib = parse_library_spec("h0*beta, h1", ("beta",))
    model = LateFusionModel(ArchConfig(spatial_dims=1, in_channels=1, out_channels=2,
                                       width=3, modes=3), adv_lib, "advection", seed=3)
    model.coeffs.data[:] = rng.uniform(0.2, 1.0, model.coeffs.shape)
    u_in = Tensor(rng.standard_normal((2, 1, 16)))
    beta = rng.uniform(0.1, 0.5, size=(2, 1))
    target = rng.standard_normal((2, 1, 16))

    def f_end_to_end():
        pred = model.step(u_in, beta)
        d = T.sub(pred, Tensor(target))
        l_data = T.mul(T.reduce_sum(T.mul(d, d)), 0.5)
        l_sparse = T.reduce_sum(T.absolute(model.coeffs))
        return T.add(l_data, T.mul(l_sparse, 1e-4))

    results["late_fusion_step"] = finite_diff_check(f_end_to_end, model.parameters())

    for name, err in results.items():
        assert err < 1e-4, f"{name} gradient error {err:.3e}"
    report("criterion 2", ", ".join(f"{k} {v:.1e}" for k, v in results.items()))


# ---------------------------------------------------------------------------
# criterion 3: spectral and metric identities
# ---------------------------------------------------------------------------

def test_criterion_3_spectral_metric_identities():
    rng = np.random.default_rng(1)

    # FFT round-trip < 1e-12
    worst_rt = 0.0
    for n in (7, 8, 128):
        x = rng.standard_normal((1, 1, n))
        back = T.irfft(T.rfft(Tensor(x), axes=(-1,)), axes=(-1,), out_lens=(n,))
        worst_rt = max(worst_rt, float(np.max(np.abs(back.data - x))))
    assert worst_rt < 1e-12

    # Parseval < 1e-10 relative
    worst_pv = 0.0
    for n in (7, 8, 128):
        x = rng.standard_normal(n)
        spec = np.fft.rfft(x)
        w = np.full(spec.size, 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        lhs = np.sum(x ** 2)
        rhs = np.sum(w * np.abs(spec) ** 2) / n
        worst_pv = max(worst_pv, abs(lhs - rhs) / lhs)
    assert worst_pv < 1e-10

    # all six metrics exactly zero on pred == true
    states = rng.standard_normal((6, 1, 32))
    m = compute_metrics(states, states)
    for field in ("rmse", "boundary_rmse", "nrmse", "max_error", "conserved_error",
                  "fourier_rmse"):
        assert getattr(m, field) == 0.0

    # constant-offset closed forms
    true = rng.standard_normal((5, 1, 16))
    c = 0.37
    mc = compute_metrics(true + c, true)
    assert mc.rmse == pytest.approx(c, rel=1e-12)
    assert mc.max_error == pytest.approx(c, rel=1e-12)
    assert mc.conserved_error == pytest.approx(c * 16 * math.sqrt(4), rel=1e-12)

    # fourier_rmse^2 = n * rmse^2 on single 1D snapshots, < 1e-10 relative
    worst_fp = 0.0
    for n in (16, 64):
        true = rng.standard_normal((2, 1, n))
        pred = true + 0.1 * rng.standard_normal((2, 1, n))
        mm = compute_metrics(pred, true)
        worst_fp = max(worst_fp, abs(mm.fourier_rmse ** 2 - n * mm.rmse ** 2)
                       / mm.fourier_rmse ** 2)
    assert worst_fp < 1e-10

    report("criterion 3", f"roundtrip {worst_rt:.1e}, parseval {worst_pv:.1e}, "
                          f"parseval-metric {worst_fp:.1e}")


# ---------------------------------------------------------------------------
# desk training fixtures shared by criteria 4 and 7
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def advection_desk_data():
    preset = family_preset("advection", "desk")
    train_ds = generate_dataset("advection", preset.grid,
                                ranges_for("advection", "train"), 40, seed=0,
                                ic_spec=preset.ic, split_label="train")
    in_ds = generate_dataset("advection", preset.grid,
                             ranges_for("advection", "in_domain_test"), 20, seed=1,
                             ic_spec=preset.ic, split_label="in_domain_test")
    out_ds = generate_dataset("advection", preset.grid,
                              ranges_for("advection", "out_domain_test"), 20, seed=2,
                              ic_spec=preset.ic, split_label="out_domain_test")
    return preset, train_ds, in_ds, out_ds


@pytest.fixture(scope="session")
def advection_desk_models(advection_desk_data):
    preset, train_ds, _, _ = advection_desk_data
    models = {}
    for kind in ("late_fusion", "baseline"):
        for seed in DESK_SEEDS:
            cfg = TrainConfig(width=preset.width, modes=preset.modes,
                              epochs=preset.epochs, seed=seed, lambda_sparse=1e-4,
                              library_text=preset.library if kind == "late_fusion" else None)
            models[(kind, seed)] = train(kind, train_ds, cfg)[0]
    return models


# ---------------------------------------------------------------------------
# criterion 4: desk-scale headline ordering on advection
# ---------------------------------------------------------------------------

def test_criterion_4_desk_headline(advection_desk_data, advection_desk_models):
    """KNOWN RED (out-of-domain clause): at desk scale the trained
    late-fusion model does not beat the parameter-as-channel baseline by 30%
    out-of-domain under any activation/bounding/batching configuration
    tried; per-mode analysis shows stability-constrained affine-in-beta
    dynamics floor at ~0.70x the measured baseline on this split. The
    criterion is asserted as stated rather than loosened; the in-domain
    clauses pass."""
    _, _, in_ds, out_ds = advection_desk_data
    rmse = {}
    for kind in ("late_fusion", "baseline"):
        for split_name, ds in (("in", in_ds), ("out", out_ds)):
            per_seed = []
            for seed in DESK_SEEDS:
                model = advection_desk_models[(kind, seed)]
                metrics = evaluate_dataset(model, ds)
                per_seed.append(float(np.sqrt(np.mean([m.msq_diff for m in metrics]))))
            rmse[(kind, split_name)] = float(np.median(per_seed))

    lf_in, lf_out = rmse[("late_fusion", "in")], rmse[("late_fusion", "out")]
    b_in, b_out = rmse[("baseline", "in")], rmse[("baseline", "out")]
    assert lf_in < 0.15, f"late-fusion in-domain median RMSE {lf_in:.4f} >= 0.15"
    assert lf_in <= 0.7 * b_in, \
        f"in-domain: late fusion {lf_in:.4f} not 30% below baseline {b_in:.4f}"
    assert lf_out <= 0.7 * b_out, \
        f"out-domain: late fusion {lf_out:.4f} not 30% below baseline {b_out:.4f}"
    report("criterion 4", f"late-fusion in {lf_in:.4f} / out {lf_out:.4f}; "
                          f"baseline in {b_in:.4f} / out {b_out:.4f}")


# ---------------------------------------------------------------------------
# criterion 5: Burgers desk ordering (out-domain only)
# ---------------------------------------------------------------------------

def test_criterion_5_burgers_ordering():
    preset = family_preset("burgers", "desk")
    train_ds = generate_dataset("burgers", preset.grid,
                                ranges_for("burgers", "train"), 40, seed=0,
                                ic_spec=preset.ic, split_label="train")
    out_ds = generate_dataset("burgers", preset.grid,
                              ranges_for("burgers", "out_domain_test"), 20, seed=2,
                              ic_spec=preset.ic, split_label="out_domain_test")
    lf, base = [], []
    for seed in DESK_SEEDS:
        cfg = TrainConfig(width=preset.width, modes=preset.modes, epochs=preset.epochs,
                          seed=seed, lambda_sparse=1e-4, library_text=preset.library)
        model, _ = train("late_fusion", train_ds, cfg)
        metrics = evaluate_dataset(model, out_ds)
        lf.append(float(np.sqrt(np.mean([m.msq_diff for m in metrics]))))
        cfg_b = TrainConfig(width=preset.width, modes=preset.modes, epochs=preset.epochs,
                            seed=seed)
        model_b, _ = train("baseline", train_ds, cfg_b)
        metrics_b = evaluate_dataset(model_b, out_ds)
        base.append(float(np.sqrt(np.mean([m.msq_diff for m in metrics_b]))))
    lf_med, base_med = float(np.median(lf)), float(np.median(base))
    assert lf_med < base_med, \
        f"burgers out-domain: late fusion {lf_med:.4f} not below baseline {base_med:.4f}"
    report("criterion 5", f"late-fusion {lf_med:.4f} < baseline {base_med:.4f}")


# ---------------------------------------------------------------------------
# criterion 6: ablation sweep (slow suite)
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_ablation(tmp_path):
    data = tmp_path / "data"
    gen_cfg = tmp_path / "gen.json"
    gen_cfg.write_text(json.dumps({"equation": "advection", "preset": "desk",
                                   "seed": 0, "out": str(data)}))
    ablate_cfg = tmp_path / "ablate.json"
    ablate_cfg.write_text(json.dumps({"data": str(data), "preset": "desk",
                                      "seeds": [0, 1, 2], "out": str(tmp_path / "abl")}))
    for cmd, cfg in (("gen", gen_cfg), ("ablate", ablate_cfg)):
        proc = subprocess.run([sys.executable, "-m", "latefuse.cli", cmd,
                               "--config", str(cfg)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr

    with (tmp_path / "abl" / "ablation.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    # full grid emitted: 4 libraries x 3 lambdas x 3 seeds x 2 splits
    assert len(rows) == 4 * 3 * 3 * 2
    assert all(r["status"] == "ok" for r in rows)

    med = defaultdict(list)
    for r in rows:
        if r["split"] == "out_domain_test":
            med[(int(r["num_terms"]), float(r["lambda"]))].append(float(r["rmse"]))
    spreads = {}
    for terms in (6, 18):
        medians = [float(np.median(v)) for (t, lam), v in sorted(med.items())
                   if t == terms]
        # a library whose rollouts diverge at some lambda has unbounded spread
        spreads[terms] = (max(medians) / min(medians)
                          if all(np.isfinite(m) for m in medians) else float("inf"))
    assert spreads[6] < spreads[18], \
        f"6-term spread {spreads[6]:.2f} not below 18-term spread {spreads[18]:.2f}"
    report("criterion 6", f"out-domain lambda spread: 6-term {spreads[6]:.2f} "
                          f"< 18-term {spreads[18]:.2f}")


# ---------------------------------------------------------------------------
# criterion 7: interpretability on the trained desk advection model
# ---------------------------------------------------------------------------

def test_criterion_7_interpretability(advection_desk_data, advection_desk_models):
    _, _, in_ds, _ = advection_desk_data
    grid = in_ds.grid
    dx = grid.spacings[0]
    corrs, dep_sq, indep_sq = [], [], []
    for seed in DESK_SEEDS:
        model = advection_desk_models[("late_fusion", seed)]
        with no_grad():
            for traj in in_ds.trajectories:
                u0 = traj.initial_state
                hidden = model.hidden_states(Tensor(u0)).data
                dep, indep = split_residual(model.library, model.coeffs, hidden,
                                            traj.params)
                ref = -(np.roll(u0[0], -1) - np.roll(u0[0], 1)) / (2.0 * dx)
                corrs.append(abs(float(np.corrcoef(dep[0], ref)[0, 1])))
                dep_sq.append(float(np.mean(dep ** 2)))
                indep_sq.append(float(np.mean(indep ** 2)))
    mean_corr = float(np.mean(corrs))
    rms_ratio = math.sqrt(np.mean(indep_sq)) / math.sqrt(np.mean(dep_sq))
    assert mean_corr >= 0.8, f"|corr(dep, -du/dx)| mean {mean_corr:.3f} < 0.8"
    assert rms_ratio <= 0.25, f"indep/dep RMS ratio {rms_ratio:.3f} > 0.25"
    report("criterion 7", f"|corr| {mean_corr:.3f} >= 0.8, "
                          f"indep/dep RMS {rms_ratio:.3f} <= 0.25")


# ---------------------------------------------------------------------------
# criterion 8: bitwise reproducibility of every command
# ---------------------------------------------------------------------------

def _run_cli(args):
    proc = subprocess.run([sys.executable, "-m", "latefuse.cli", *args],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_criterion_8_determinism(tmp_path):
    base = tmp_path
    gen_cfg = base / "gen.json"
    gen_cfg.write_text(json.dumps({"equation": "advection", "preset": "desk",
                                   "seed": 0, "out": str(base / "data"),
                                   "counts": {"train": 4, "in": 2, "out": 2}}))
    _run_cli(["gen", "--config", str(gen_cfg)])

    train_cfg = base / "train.json"
    train_cfg.write_text(json.dumps({"data": str(base / "data" / "train"),
                                     "model": "late_fusion", "epochs": 2,
                                     "width": 4, "modes": 3, "seed": 0,
                                     "out": str(base / "ckpt")}))
    _run_cli(["train", "--config", str(train_cfg)])

    eval_cfg = base / "eval.json"
    eval_cfg.write_text(json.dumps({"model": str(base / "ckpt"),
                                    "data": str(base / "data"),
                                    "out": str(base / "eval")}))
    _run_cli(["eval", "--config", str(eval_cfg)])

    inspect_cfg = base / "inspect.json"
    inspect_cfg.write_text(json.dumps({"model": str(base / "ckpt"),
                                       "data": str(base / "data" / "in_domain_test"),
                                       "out": str(base / "dump")}))
    _run_cli(["inspect", "--config", str(inspect_cfg)])

    ablate_cfg = base / "ablate.json"
    ablate_cfg.write_text(json.dumps({"data": str(base / "data"),
                                      "libraries": ["h0*beta, h1"], "lambdas": [1e-3],
                                      "seeds": [0], "epochs": 1, "width": 4,
                                      "modes": 3, "out": str(base / "abl")}))
    _run_cli(["ablate", "--config", str(ablate_cfg)])

    # re-run every command from its recorded config into a sibling directory
    comparisons = []
    for artifact_dir, cmd in (("data", "gen"), ("ckpt", "train"), ("eval", "eval"),
                              ("dump", "inspect"), ("abl", "ablate")):
        recorded = json.loads((base / artifact_dir / "config.json").read_text())
        recorded["out"] = str(base / f"{artifact_dir}_rerun")
        cfg = base / f"{cmd}_rerun.json"
        cfg.write_text(json.dumps(recorded))
        _run_cli([cmd, "--config", str(cfg)])
        comparisons.append(artifact_dir)

    volatile = {"timing.json", "config.json"}  # config differs only in "out"
    checked = 0
    for artifact_dir in comparisons:
        first = base / artifact_dir
        second = base / f"{artifact_dir}_rerun"
        for path in sorted(first.rglob("*")):
            if path.is_dir() or path.name in volatile:
                continue
            twin = second / path.relative_to(first)
            assert twin.is_file(), f"missing {twin}"
            assert path.read_bytes() == twin.read_bytes(), f"{path} not bitwise equal"
            checked += 1
    report("criterion 8", f"{checked} artifact files bitwise identical across reruns")
