"""Benchmark presets: parameter ranges, grids, libraries, architectures.

``full`` mirrors the benchmark-scale setup (128-point 1D grids, 16 modes /
width 64, 100 epochs, 100/50/50 trajectories); ``desk`` is the reduced CPU
preset (64-point grids, 8 modes / width 16, 50 epochs, 40/20/20) used by the
fast experiment suite.
"""
from __future__ import annotations

from dataclasses import dataclass

from .equations import canonical_family
from .grids import GridSpec, InitialConditionSpec
from .solvers import required_substeps

PRESETS = ("desk", "full")

# sampling intervals per family: (in-domain, out-domain) per parameter
PARAM_RANGES: dict[str, dict[str, dict[str, tuple[float, float]]]] = {
    "advection": {
        "in": {"beta": (0.0, 0.5)},
        "out": {"beta": (0.5, 1.0)},
    },
    "burgers": {
        "in": {"nu": (0.01, 0.02)},
        "out": {"nu": (0.0, 0.01)},
    },
    "reaction_diffusion_1d": {
        "in": {"nu": (0.0, 0.1), "rho": (0.0, 1.0)},
        "out": {"nu": (0.1, 0.2), "rho": (0.0, 1.0)},
    },
    "reaction_diffusion_2d": {
        "in": {"k": (0.0, 0.05)},
        "out": {"k": (0.05, 0.075)},
    },
}

LIBRARIES: dict[str, str] = {
    "advection": "h0*beta, h1",
    "burgers": "h0*nu, h1",
    "reaction_diffusion_1d": ("1, h0, h1, h0^2, h1^2, h0*h1, "
                              "rho*h0^2, rho*h1^2, rho*h0*h1, "
                              "nu*h0^2, nu*h1^2, nu*h0*h1"),
    "reaction_diffusion_2d": "1, h0, h1, h2, k, k*h0, k*h1, k*h2",
}

# the four advection libraries of increasing polynomial order used by the
# library-complexity study (6, 9, 12, and 18 terms)
ABLATION_LIBRARIES: list[str] = [
    "1, h0, h1, beta, beta*h0, beta*h1",
    "1, h0, h1, beta, beta*h0, beta*h1, beta^2, beta^2*h0, beta^2*h1",
    ("1, h0, h1, h0^2, h1^2, h0*h1, "
     "beta, beta*h0, beta*h1, beta*h0^2, beta*h1^2, beta*h0*h1"),
    ("1, h0, h1, h0^2, h1^2, h0*h1, "
     "beta, beta*h0, beta*h1, beta*h0^2, beta*h1^2, beta*h0*h1, "
     "beta^2, beta^2*h0, beta^2*h1, beta^2*h0^2, beta^2*h1^2, beta^2*h0*h1"),
]

LAMBDA_GRID = (1e-2, 1e-3, 1e-4)
SELECTED_LAMBDA = 1e-4

# effective-step accuracy cap for the 1D reaction-diffusion generator
RD1D_ACCURACY_DT = 1e-4


@dataclass(frozen=True)
class FamilyPreset:
    family: str
    grid: GridSpec
    ic: InitialConditionSpec
    counts: tuple[int, int, int]      # train / in-domain test / out-domain test
    width: int
    modes: int
    epochs: int
    library: str


def _grid_for(family: str, preset: str) -> GridSpec:
    desk = preset == "desk"
    if family == "advection":
        n = 64 if desk else 128
        return GridSpec(1, (n,), ((0.0, 1.0),), snapshot_dt=0.05, horizon=0.5)
    if family == "burgers":
        n = 64 if desk else 128
        return GridSpec(1, (n,), ((0.0, 1.0),), snapshot_dt=0.005, horizon=0.5)
    if family == "reaction_diffusion_1d":
        n = 64 if desk else 128
        return GridSpec(1, (n,), ((0.0, 1.0),), snapshot_dt=0.005, horizon=0.5)
    if family == "reaction_diffusion_2d":
        n = 32 if desk else 64
        return GridSpec(2, (n, n), ((-1.0, 1.0), (-1.0, 1.0)),
                        snapshot_dt=0.1, horizon=4.0)
    raise ValueError(family)


def _substeps_for(family: str, grid: GridSpec, ic: InitialConditionSpec) -> int:
    ranges = PARAM_RANGES[family]
    nu_max = max(ranges["in"].get("nu", (0, 0))[1], ranges["out"].get("nu", (0, 0))[1])
    # worst-case amplitude bound for the sinusoid sum
    max_abs_u = ic.num_waves * ic.amplitude_range[1]
    accuracy_dt = RD1D_ACCURACY_DT if family == "reaction_diffusion_1d" else None
    return required_substeps(family, grid, max_abs_u, nu_max=nu_max,
                             accuracy_dt=accuracy_dt)


def family_preset(family: str, preset: str) -> FamilyPreset:
    family = canonical_family(family)
    if preset not in PRESETS:
        raise ValueError(f"preset must be one of {PRESETS}")
    desk = preset == "desk"
    if family == "reaction_diffusion_2d":
        ic = InitialConditionSpec(kind="gaussian_noise")
        width, modes = (16, 8) if desk else (32, 12)
    else:
        ic = InitialConditionSpec(num_waves=2, max_wavenumber=8)
        width, modes = (16, 8) if desk else (64, 16)
    grid = _grid_for(family, preset)
    grid = grid.with_substeps(_substeps_for(family, grid, ic))
    return FamilyPreset(
        family=family,
        grid=grid,
        ic=ic,
        counts=(40, 20, 20) if desk else (100, 50, 50),
        width=width,
        modes=modes,
        epochs=50 if desk else 100,
        library=LIBRARIES[family],
    )


def ranges_for(family: str, split: str) -> dict[str, tuple[float, float]]:
    family = canonical_family(family)
    key = "in" if split in ("train", "in_domain_test", "in") else "out"
    return {k: tuple(v) for k, v in PARAM_RANGES[family][key].items()}
