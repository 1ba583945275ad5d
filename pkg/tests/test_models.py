"""Spectral layer identities, backbone contracts, and the baseline wiring."""
import numpy as np
import pytest

from latefuse import tensor as T
from latefuse.models import (ArchConfig, BaselineModel, FNOBackbone, ModelError,
                             SpectralConv1d, SpectralConv2d,
                             broadcast_param_channels)
from latefuse.optim import finite_diff_check
from latefuse.tensor import Tensor


def dense_lowpass(x: np.ndarray, modes: int) -> np.ndarray:
    """Band-limit with an explicit DFT matrix (oracle, not the fft library)."""
    n = x.shape[-1]
    j = np.arange(n)
    fwd = np.exp(-2j * np.pi * np.outer(j, j) / n)
    spec = fwd @ x
    keep = np.zeros(n)
    keep[: modes + 1] = 1.0
    keep[n - modes:] = 1.0  # conjugate bins
    inv = np.exp(2j * np.pi * np.outer(j, j) / n) / n
    return (inv @ (spec * keep)).real


def test_identity_weights_low_pass():
    rng = np.random.default_rng(0)
    layer = SpectralConv1d(1, 1, modes=3, rng=rng)
    layer.w_re.data[:] = 1.0
    layer.w_im.data[:] = 0.0
    x = rng.standard_normal(16)
    out = layer(Tensor(x[None, None])).data[0, 0]
    assert np.max(np.abs(out - dense_lowpass(x, 3))) < 1e-12


def test_zero_weights_zero_output():
    rng = np.random.default_rng(1)
    layer = SpectralConv1d(2, 3, modes=4, rng=rng)
    layer.w_re.data[:] = 0.0
    layer.w_im.data[:] = 0.0
    out = layer(Tensor(rng.standard_normal((2, 2, 16)))).data
    assert np.all(out == 0.0)


def test_mode_above_cutoff_produces_zero():
    rng = np.random.default_rng(2)
    layer = SpectralConv1d(1, 1, modes=3, rng=rng)
    n = 32
    x = np.cos(2 * np.pi * 5 * np.arange(n) / n)  # wavenumber 5 > cutoff 3
    out = layer(Tensor(x[None, None])).data
    assert np.max(np.abs(out)) < 1e-10


def test_spectral_layer_is_linear():
    rng = np.random.default_rng(3)
    layer = SpectralConv1d(2, 2, modes=5, rng=rng)
    x = rng.standard_normal((1, 2, 32))
    y = rng.standard_normal((1, 2, 32))
    a, b = 1.7, -0.6
    combined = layer(Tensor(a * x + b * y)).data
    separate = a * layer(Tensor(x)).data + b * layer(Tensor(y)).data
    assert np.max(np.abs(combined - separate)) < 1e-10


def test_spectral2d_mode_cutoff():
    rng = np.random.default_rng(4)
    layer = SpectralConv2d(1, 1, modes=2, rng=rng)
    n = 16
    xx, yy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    x = np.cos(2 * np.pi * (5 * xx + 4 * yy) / n)  # both wavenumbers above cutoff
    out = layer(Tensor(x[None, None])).data
    assert np.max(np.abs(out)) < 1e-10


def test_spectral2d_gradient():
    rng = np.random.default_rng(5)
    layer = SpectralConv2d(1, 2, modes=1, rng=rng)
    x = Tensor(rng.standard_normal((1, 1, 6, 6)))

    def f():
        out = layer(x)
        return T.reduce_sum(T.mul(out, out))

    params = [p for _, p in layer.named_params("sc")]
    assert finite_diff_check(f, params) < 1e-4


def test_backbone_zero_weights_zero_output():
    arch = ArchConfig(spatial_dims=1, in_channels=1, out_channels=2, width=3, modes=2)
    backbone = FNOBackbone(arch, seed=0)
    for _, p in backbone.named_params():
        p.data[:] = 0.0
    out = backbone(Tensor(np.random.default_rng(0).standard_normal((1, 1, 16))))
    assert np.all(out.data == 0.0)


def test_backbone_deterministic_across_instances():
    arch = ArchConfig(spatial_dims=1, in_channels=1, out_channels=2, width=4, modes=3)
    x = np.random.default_rng(1).standard_normal((2, 1, 16))
    a = FNOBackbone(arch, seed=7)(Tensor(x)).data
    b = FNOBackbone(arch, seed=7)(Tensor(x)).data
    assert np.array_equal(a, b)


def test_backbone_gradient_contract():
    arch = ArchConfig(spatial_dims=1, in_channels=1, out_channels=2, width=3, modes=3)
    backbone = FNOBackbone(arch, seed=2)
    x = Tensor(np.random.default_rng(2).standard_normal((2, 1, 16)))
    target = np.random.default_rng(3).standard_normal((2, 2, 16))

    def f():
        d = T.sub(backbone(x), Tensor(target))
        return T.reduce_sum(T.mul(d, d))

    assert finite_diff_check(f, [p for _, p in backbone.named_params()]) < 1e-4


def test_resolution_transfer_band_limited():
    """Spectral weights are indexed by wavenumber, so evaluating at double
    resolution and subsampling matches the coarse evaluation."""
    arch = ArchConfig(spatial_dims=1, in_channels=1, out_channels=1, width=4, modes=4)
    backbone = FNOBackbone(arch, seed=3)
    n = 32
    x_fine = np.arange(2 * n) / (2 * n)
    u_fine = (0.7 * np.sin(2 * np.pi * 2 * x_fine + 0.3)
              + 0.4 * np.sin(2 * np.pi * 4 * x_fine + 1.1))
    coarse = backbone(Tensor(u_fine[::2][None, None])).data[0, 0]
    fine = backbone(Tensor(u_fine[None, None])).data[0, 0]
    assert np.max(np.abs(fine[::2] - coarse)) < 1e-6


def test_too_many_modes_for_grid_rejected():
    rng = np.random.default_rng(6)
    layer = SpectralConv1d(1, 1, modes=9, rng=rng)
    with pytest.raises(ModelError):
        layer(Tensor(np.zeros((1, 1, 16))))


def test_baseline_input_channels_state_plus_params():
    arch = ArchConfig(spatial_dims=1, in_channels=2, out_channels=1, width=3, modes=2)
    model = BaselineModel(arch, "advection", ("beta",), seed=0)
    out = model.step(np.zeros((1, 16)), np.array([0.3]))
    assert out.shape == (1, 16)

    with pytest.raises(ValueError):
        BaselineModel(ArchConfig(spatial_dims=1, in_channels=1, out_channels=1,
                                 width=3, modes=2), "advection", ("beta",), seed=0)


def test_param_channels_are_constant_fields():
    fields = broadcast_param_channels(np.array([[0.3], [0.7]]), 2, (5,))
    assert fields.shape == (2, 1, 5)
    assert np.all(fields[0] == 0.3) and np.all(fields[1] == 0.7)
    zero = broadcast_param_channels(np.array([0.0]), 3, (4,))
    assert np.all(zero == 0.0)


def test_baseline_batched_output_shape():
    arch = ArchConfig(spatial_dims=1, in_channels=2, out_channels=1, width=3, modes=2)
    model = BaselineModel(arch, "advection", ("beta",), seed=1)
    out = model.step(np.zeros((4, 1, 16)), np.full((4, 1), 0.2))
    assert out.shape == (4, 1, 16)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_forward_flagged():
    arch = ArchConfig(spatial_dims=1, in_channels=2, out_channels=1, width=3, modes=2)
    model = BaselineModel(arch, "advection", ("beta",), seed=2)
    bad = np.full((1, 16), 1e308)
    with np.errstate(all="ignore"), pytest.raises(ModelError):
        model.step(bad, np.array([1e308]))
