"""Fourier neural operator backbone and the parameter-as-channel baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


class ModelError(RuntimeError):
    pass


ACTIVATIONS = ("tanh", "gelu")


@dataclass(frozen=True)
class ArchConfig:
    """Backbone architecture: 4 spectral blocks between a lifting and a
    projection pointwise linear.

    ``output_bound`` optionally wraps the projection in a scaled saturation,
    out = bound * tanh(linear / bound): near-identity inside the bound,
    hard-limited outside. Bounded output fields keep learned increments
    finite when autoregressive rollouts drift beyond the training amplitude
    range, which unbounded activations do not guarantee.
    """

    spatial_dims: int
    in_channels: int
    out_channels: int
    width: int
    modes: int
    levels: int = 4
    activation: str = "gelu"
    output_bound: float | None = None

    def __post_init__(self):
        if self.spatial_dims not in (1, 2):
            raise ValueError("spatial_dims must be 1 or 2")
        if self.levels != 4:
            raise ValueError("the backbone is fixed at 4 spectral blocks")
        if min(self.in_channels, self.out_channels, self.width, self.modes) < 1:
            raise ValueError("channel, width, and mode counts must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.output_bound is not None and self.output_bound <= 0:
            raise ValueError("output_bound must be positive")

    def to_dict(self) -> dict:
        return {
            "spatial_dims": self.spatial_dims,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "width": self.width,
            "modes": self.modes,
            "levels": self.levels,
            "activation": self.activation,
            "output_bound": self.output_bound,
        }

    @staticmethod
    def from_dict(d: dict) -> "ArchConfig":
        bound = d.get("output_bound")
        return ArchConfig(
            spatial_dims=int(d["spatial_dims"]),
            in_channels=int(d["in_channels"]),
            out_channels=int(d["out_channels"]),
            width=int(d["width"]),
            modes=int(d["modes"]),
            levels=int(d["levels"]),
            activation=str(d.get("activation", "gelu")),
            output_bound=float(bound) if bound is not None else None,
        )


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class PointwiseLinear:
    """1x1 channel mixing applied at every grid location."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        bound = np.sqrt(1.0 / in_channels)
        self.weight = Tensor(_uniform(rng, (in_channels, out_channels), bound),
                             requires_grad=True)
        self.bias = Tensor(_uniform(rng, (out_channels,), bound), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        out = T.channel_matmul(x, self.weight)
        bias_shape = (1, self.bias.shape[0]) + (1,) * (x.ndim - 2)
        return T.add(out, T.reshape(self.bias, bias_shape))

    def named_params(self, prefix: str):
        return [(f"{prefix}.w", self.weight), (f"{prefix}.b", self.bias)]


class SpectralConv1d:
    """Multiply the retained low wavenumbers of the input spectrum by learned
    complex weights (stored as real pairs); wavenumbers above the cutoff
    contribute zero.

    ``modes`` counts retained nonzero wavenumbers: bins 0..modes inclusive
    are kept, so the mean mode always passes through.
    """

    def __init__(self, in_channels: int, out_channels: int, modes: int,
                 rng: np.random.Generator):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.modes = modes
        scale = 1.0 / (in_channels * out_channels)
        shape = (in_channels, out_channels, modes + 1)
        self.w_re = Tensor(rng.uniform(0.0, scale, size=shape), requires_grad=True)
        self.w_im = Tensor(rng.uniform(0.0, scale, size=shape), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        n = x.shape[-1]
        kept = self.modes + 1
        if kept > n // 2 + 1:
            raise ModelError(f"{self.modes} modes need a grid of >= {2 * self.modes} points")
        spectrum = T.rfft(x, axes=(-1,))
        mixed = T.spectral_contract(spectrum[:, :, :kept], self.w_re, self.w_im)
        full = T.embed(mixed, (slice(None), slice(None), slice(0, kept)),
                       (x.shape[0], self.out_channels, n // 2 + 1))
        return T.irfft(full, axes=(-1,), out_lens=(n,))

    def named_params(self, prefix: str):
        return [(f"{prefix}.re", self.w_re), (f"{prefix}.im", self.w_im)]


class SpectralConv2d:
    """2D variant: keeps the two low-|k| corner blocks of the half spectrum.

    Along the full-FFT axis the retained rows are wavenumbers 0..modes
    (block 1) and the mirrored negative wavenumbers -modes..-1 (block 2);
    along the half-spectrum axis bins 0..modes are kept.
    """

    def __init__(self, in_channels: int, out_channels: int, modes: int,
                 rng: np.random.Generator):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.modes = modes
        scale = 1.0 / (in_channels * out_channels)
        self.w1_re = Tensor(rng.uniform(0.0, scale, size=(in_channels, out_channels,
                                                          modes + 1, modes + 1)),
                            requires_grad=True)
        self.w1_im = Tensor(rng.uniform(0.0, scale, size=(in_channels, out_channels,
                                                          modes + 1, modes + 1)),
                            requires_grad=True)
        self.w2_re = Tensor(rng.uniform(0.0, scale, size=(in_channels, out_channels,
                                                          modes, modes + 1)),
                            requires_grad=True)
        self.w2_im = Tensor(rng.uniform(0.0, scale, size=(in_channels, out_channels,
                                                          modes, modes + 1)),
                            requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        nx, ny = x.shape[-2], x.shape[-1]
        m = self.modes
        if 2 * m + 1 > nx or m + 1 > ny // 2 + 1:
            raise ModelError(f"{m} modes too many for a {nx}x{ny} grid")
        spectrum = T.rfft(x, axes=(-2, -1))
        half = ny // 2 + 1
        out_shape = (x.shape[0], self.out_channels, nx, half)
        low = T.spectral_contract(spectrum[:, :, :m + 1, :m + 1], self.w1_re, self.w1_im)
        high = T.spectral_contract(spectrum[:, :, nx - m:, :m + 1], self.w2_re, self.w2_im)
        full = T.add(
            T.embed(low, (slice(None), slice(None), slice(0, m + 1), slice(0, m + 1)),
                    out_shape),
            T.embed(high, (slice(None), slice(None), slice(nx - m, nx), slice(0, m + 1)),
                    out_shape),
        )
        return T.irfft(full, axes=(-2, -1), out_lens=(nx, ny))

    def named_params(self, prefix: str):
        return [(f"{prefix}.re1", self.w1_re), (f"{prefix}.im1", self.w1_im),
                (f"{prefix}.re2", self.w2_re), (f"{prefix}.im2", self.w2_im)]


class FNOBackbone:
    """Lifting, four (spectral conv + pointwise bypass + GELU) blocks, and a
    pointwise projection to the output channels."""

    def __init__(self, arch: ArchConfig, seed: int):
        self.arch = arch
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                           spawn_key=(0,)))
        conv_cls = SpectralConv1d if arch.spatial_dims == 1 else SpectralConv2d
        self.lift = PointwiseLinear(arch.in_channels, arch.width, rng)
        self.blocks = []
        for _ in range(arch.levels):
            self.blocks.append((conv_cls(arch.width, arch.width, arch.modes, rng),
                                PointwiseLinear(arch.width, arch.width, rng)))
        self.proj = PointwiseLinear(arch.width, arch.out_channels, rng)
        self._activation = T.tanh if arch.activation == "tanh" else T.gelu

    def forward(self, x: Tensor) -> Tensor:
        h = self.lift(x)
        for spectral, bypass in self.blocks:
            h = self._activation(T.add(spectral(h), bypass(h)))
        out = self.proj(h)
        if self.arch.output_bound is not None:
            bound = self.arch.output_bound
            out = T.mul(T.tanh(T.mul(out, 1.0 / bound)), bound)
        return out

    __call__ = forward

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = self.lift.named_params("lift")
        for i, (spectral, bypass) in enumerate(self.blocks):
            out += spectral.named_params(f"block{i}.spectral")
            out += bypass.named_params(f"block{i}.bypass")
        out += self.proj.named_params("proj")
        return out


def as_batched(u, spatial_dims: int) -> tuple[Tensor, bool]:
    """Accept [V, spatial...] or [B, V, spatial...]; return a batched tensor
    plus a flag telling the caller to squeeze the batch axis again."""
    t = u if isinstance(u, Tensor) else Tensor(np.asarray(u, dtype=np.float64))
    if t.ndim == spatial_dims + 1:    # [V, spatial...]
        return T.reshape(t, (1,) + t.shape), True
    if t.ndim == spatial_dims + 2:  # [B, V, spatial...]
        return t, False
    raise ValueError(f"state must have {spatial_dims + 1} or {spatial_dims + 2} dims, "
                     f"got shape {t.shape}")


def broadcast_param_channels(params: np.ndarray, batch: int,
                             spatial_shape: tuple[int, ...]) -> np.ndarray:
    """Spatially constant fields carrying each parameter component."""
    p = np.asarray(params, dtype=np.float64)
    if p.ndim == 1:
        p = np.broadcast_to(p, (batch, p.shape[0]))
    if p.shape[0] != batch:
        raise ValueError("parameter batch does not match state batch")
    reshaped = p.reshape(p.shape + (1,) * len(spatial_shape))
    return np.broadcast_to(reshaped, p.shape + spatial_shape).copy()


class BaselineModel:
    """Standard FNO usage: the parameters enter as extra constant input
    channels and the network predicts the next state directly."""

    kind = "baseline"

    def __init__(self, arch: ArchConfig, family: str, param_names: tuple[str, ...],
                 seed: int):
        expected_in = arch.out_channels + len(param_names)
        if arch.in_channels != expected_in:
            raise ValueError(f"baseline arch needs {expected_in} input channels")
        self.arch = arch
        self.family = family
        self.param_names = tuple(param_names)
        self.seed = int(seed)
        self.backbone = FNOBackbone(arch, seed)

    def step(self, u, params, check_finite: bool = True) -> Tensor:
        x, squeeze = as_batched(u, self.arch.spatial_dims)
        fields = broadcast_param_channels(params, x.shape[0], x.shape[2:])
        inp = T.concat([x, Tensor(fields)], axis=1)
        out = self.backbone(inp)
        if check_finite and not np.isfinite(out.data).all():
            raise ModelError("non-finite activations in baseline forward pass")
        return T.reshape(out, out.shape[1:]) if squeeze else out

    def named_params(self) -> list[tuple[str, Tensor]]:
        return self.backbone.named_params()

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_params()]

    def config_dict(self) -> dict:
        return {
            "kind": self.kind,
            "family": self.family,
            "param_names": list(self.param_names),
            "arch": self.arch.to_dict(),
            "seed": self.seed,
            "init": "spectral uniform(0, 1/(cin*cout)); pointwise uniform(+-sqrt(1/fan_in))",
        }
