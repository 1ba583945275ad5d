"""The four benchmark equations and their parameter bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PERIODIC = "periodic"
NEUMANN = "neumann_no_flow"


@dataclass(frozen=True)
class Advection:
    """u_t = -beta * u_x on a periodic domain."""

    beta: float

    family = "advection"
    boundary = PERIODIC
    param_names = ("beta",)
    num_variables = 1

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise ValueError("beta must be finite")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.beta], dtype=np.float64)


@dataclass(frozen=True)
class Burgers:
    """u_t = -(u^2/2)_x + nu*pi * u_xx on a periodic domain."""

    nu: float

    family = "burgers"
    boundary = PERIODIC
    param_names = ("nu",)
    num_variables = 1

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("diffusion coefficient must be >= 0")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.nu], dtype=np.float64)


@dataclass(frozen=True)
class ReactionDiffusion1D:
    """Fisher-KPP: u_t = nu * u_xx + rho * u * (1 - u), periodic."""

    nu: float
    rho: float

    family = "reaction_diffusion_1d"
    boundary = PERIODIC
    param_names = ("nu", "rho")
    num_variables = 1

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("diffusion coefficient must be >= 0")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.nu, self.rho], dtype=np.float64)


@dataclass(frozen=True)
class ReactionDiffusion2D:
    """FitzHugh-Nagumo activator/inhibitor with no-flow Neumann boundaries.

    Only ``k`` is a sampled system parameter; the diffusivities are fixed
    equation constants.
    """

    k: float
    du: float = 1e-3
    dv: float = 5e-3

    family = "reaction_diffusion_2d"
    boundary = NEUMANN
    param_names = ("k",)
    num_variables = 2

    def __post_init__(self):
        if self.du < 0 or self.dv < 0:
            raise ValueError("diffusion coefficients must be >= 0")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.k], dtype=np.float64)


EquationSpec = Advection | Burgers | ReactionDiffusion1D | ReactionDiffusion2D

FAMILIES = {
    "advection": Advection,
    "burgers": Burgers,
    "reaction_diffusion_1d": ReactionDiffusion1D,
    "reaction_diffusion_2d": ReactionDiffusion2D,
}

FAMILY_ALIASES = {
    "advection": "advection",
    "adv": "advection",
    "burgers": "burgers",
    "reaction_diffusion_1d": "reaction_diffusion_1d",
    "rd1d": "reaction_diffusion_1d",
    "reaction_diffusion_2d": "reaction_diffusion_2d",
    "rd2d": "reaction_diffusion_2d",
}


def canonical_family(name: str) -> str:
    key = name.strip().lower()
    if key not in FAMILY_ALIASES:
        raise ValueError(f"unknown equation family {name!r}")
    return FAMILY_ALIASES[key]


def param_names_for(family: str) -> tuple[str, ...]:
    return FAMILIES[canonical_family(family)].param_names


def num_variables_for(family: str) -> int:
    return FAMILIES[canonical_family(family)].num_variables


def equation_from_params(family: str, params: np.ndarray, constants: dict | None = None) -> EquationSpec:
    """Rebuild an equation instance from its sampled parameter vector."""
    family = canonical_family(family)
    values = [float(v) for v in np.asarray(params).reshape(-1)]
    cls = FAMILIES[family]
    names = cls.param_names
    if len(values) != len(names):
        raise ValueError(f"{family} expects {len(names)} parameters, got {len(values)}")
    kwargs = dict(zip(names, values))
    if constants:
        kwargs.update(constants)
    return cls(**kwargs)
