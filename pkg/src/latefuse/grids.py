"""Grid and initial-condition specifications for the benchmark PDEs."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time discretization.

    ``snapshot_dt`` is the spacing of stored snapshots; the solvers may take
    ``internal_substeps`` explicit steps between consecutive snapshots.
    Periodic grids are node-centered without the duplicate endpoint;
    Neumann grids are cell-centered so zero-flux faces sit on the boundary.
    """

    spatial_dims: int
    points_per_dim: tuple[int, ...]
    domain_bounds: tuple[tuple[float, float], ...]
    snapshot_dt: float
    horizon: float
    internal_substeps: int = 1

    def __post_init__(self):
        if self.spatial_dims not in (1, 2):
            raise ValueError("spatial_dims must be 1 or 2")
        if len(self.points_per_dim) != self.spatial_dims:
            raise ValueError("points_per_dim length must match spatial_dims")
        if len(self.domain_bounds) != self.spatial_dims:
            raise ValueError("domain_bounds length must match spatial_dims")
        if any(n < 4 for n in self.points_per_dim):
            raise ValueError("need at least 4 points per dimension")
        if self.snapshot_dt <= 0:
            raise ValueError("snapshot_dt must be positive")
        ratio = self.horizon / self.snapshot_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("horizon must be a positive integer multiple of snapshot_dt")
        if self.internal_substeps < 1:
            raise ValueError("internal_substeps must be >= 1")
        if any(hi <= lo for lo, hi in self.domain_bounds):
            raise ValueError("domain bounds must be increasing")

    @property
    def num_snapshots(self) -> int:
        """Stored states including t = 0."""
        return int(round(self.horizon / self.snapshot_dt)) + 1

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in self.domain_bounds)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(length / n for length, n in zip(self.lengths, self.points_per_dim))

    def axis_coords(self, dim: int, centered: bool = False) -> np.ndarray:
        lo, _ = self.domain_bounds[dim]
        n = self.points_per_dim[dim]
        dx = self.spacings[dim]
        offset = 0.5 * dx if centered else 0.0
        return lo + offset + dx * np.arange(n)

    def with_substeps(self, substeps: int) -> "GridSpec":
        return GridSpec(self.spatial_dims, self.points_per_dim, self.domain_bounds,
                        self.snapshot_dt, self.horizon, substeps)

    def to_dict(self) -> dict:
        return {
            "spatial_dims": self.spatial_dims,
            "points_per_dim": list(self.points_per_dim),
            "domain_bounds": [list(b) for b in self.domain_bounds],
            "snapshot_dt": self.snapshot_dt,
            "horizon": self.horizon,
            "internal_substeps": self.internal_substeps,
        }

    @staticmethod
    def from_dict(d: dict) -> "GridSpec":
        return GridSpec(
            spatial_dims=int(d["spatial_dims"]),
            points_per_dim=tuple(int(n) for n in d["points_per_dim"]),
            domain_bounds=tuple((float(lo), float(hi)) for lo, hi in d["domain_bounds"]),
            snapshot_dt=float(d["snapshot_dt"]),
            horizon=float(d["horizon"]),
            internal_substeps=int(d["internal_substeps"]),
        )


@dataclass(frozen=True)
class InitialConditionSpec:
    """Superposed random sinusoids for the 1D cases (noise for the 2D case)."""

    num_waves: int = 2
    max_wavenumber: int = 8
    amplitude_range: tuple[float, float] = (0.0, 1.0)
    phase_range: tuple[float, float] = (0.0, TWO_PI)
    kind: str = "sine_sum"  # or "gaussian_noise"

    def __post_init__(self):
        if self.num_waves < 1:
            raise ValueError("num_waves must be >= 1")
        if self.max_wavenumber < 1:
            raise ValueError("max_wavenumber must be >= 1")
        if self.kind not in ("sine_sum", "gaussian_noise"):
            raise ValueError(f"unknown initial-condition kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "num_waves": self.num_waves,
            "max_wavenumber": self.max_wavenumber,
            "amplitude_range": list(self.amplitude_range),
            "phase_range": list(self.phase_range),
            "kind": self.kind,
        }

    @staticmethod
    def from_dict(d: dict) -> "InitialConditionSpec":
        return InitialConditionSpec(
            num_waves=int(d["num_waves"]),
            max_wavenumber=int(d["max_wavenumber"]),
            amplitude_range=tuple(float(v) for v in d["amplitude_range"]),
            phase_range=tuple(float(v) for v in d["phase_range"]),
            kind=str(d["kind"]),
        )


@dataclass(frozen=True)
class SineWaveIC:
    """A drawn sum of sinusoids; keeps the wave parameters so shifted
    evaluations (exact advection) stay available."""

    amplitudes: tuple[float, ...]
    wavenumbers: tuple[int, ...]   # integer mode counts n_i
    phases: tuple[float, ...]
    length: float                  # spatial period L_x

    def evaluate(self, x: np.ndarray, shift: float = 0.0) -> np.ndarray:
        u = np.zeros_like(x, dtype=np.float64)
        for a, n, phi in zip(self.amplitudes, self.wavenumbers, self.phases):
            k = TWO_PI * n / self.length
            u += a * np.sin(k * (x - shift) + phi)
        return u

    def to_dict(self) -> dict:
        return {
            "amplitudes": list(self.amplitudes),
            "wavenumbers": list(self.wavenumbers),
            "phases": list(self.phases),
            "length": self.length,
        }


def sample_wave_ic(spec: InitialConditionSpec, grid: GridSpec, seed: int) -> SineWaveIC:
    """Draw the amplitudes, integer wavenumbers, and phases for one 1D field."""
    if grid.spatial_dims != 1:
        raise ValueError("sinusoidal initial conditions are defined on 1D grids")
    n = grid.points_per_dim[0]
    if n < 2 * spec.max_wavenumber:
        raise ValueError(
            f"grid with {n} points aliases wavenumbers up to {spec.max_wavenumber}"
        )
    rng = np.random.default_rng(seed)
    amps = rng.uniform(*spec.amplitude_range, size=spec.num_waves)
    modes = rng.integers(1, spec.max_wavenumber + 1, size=spec.num_waves)
    phases = rng.uniform(*spec.phase_range, size=spec.num_waves)
    return SineWaveIC(
        amplitudes=tuple(float(a) for a in amps),
        wavenumbers=tuple(int(m) for m in modes),
        phases=tuple(float(p) for p in phases),
        length=grid.lengths[0],
    )


def sample_initial_condition(spec: InitialConditionSpec, grid: GridSpec, seed: int) -> np.ndarray:
    """Field form of the sampled initial condition on the grid nodes."""
    if spec.kind == "gaussian_noise":
        rng = np.random.default_rng(seed)
        return rng.standard_normal(grid.points_per_dim)
    waves = sample_wave_ic(spec, grid, seed)
    return waves.evaluate(grid.axis_coords(0))
