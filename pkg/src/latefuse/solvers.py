"""Classical solvers that generate the benchmark trajectories.

Advection is evaluated analytically (the initial condition is a finite sum
of sinusoids, so the characteristic solution is available in closed form).
Burgers uses a conservative local Lax-Friedrichs flux with central
diffusion; the 1D reaction-diffusion case is operator-split with an exact
logistic reaction step; the 2D FitzHugh-Nagumo system is integrated with
RK4 and a zero-flux Laplacian.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .equations import (Advection, Burgers, EquationSpec, ReactionDiffusion1D,
                        ReactionDiffusion2D)
from .grids import GridSpec, SineWaveIC

ADVECTIVE_CFL = 0.4
DIFFUSIVE_CFL = 0.45
RK4_STABILITY = 2.78
RD2D_REACTION_DT_CAP = 0.02


class SolverError(RuntimeError):
    pass


class NonFiniteError(SolverError):
    """The solution blew up (NaN/Inf) at some snapshot."""

    def __init__(self, message: str, snapshot: int):
        super().__init__(message)
        self.snapshot = snapshot


class CFLViolationError(SolverError):
    """internal_substeps too small for the declared stability bounds."""


@dataclass
class Trajectory:
    """One discretized solution with its parameters: the dataset atom."""

    params: np.ndarray              # [P]
    states: np.ndarray              # [T_steps+1, V, X(, Y)]
    equation: EquationSpec
    grid: GridSpec

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        if not np.isfinite(self.states).all():
            raise NonFiniteError("trajectory contains non-finite states", snapshot=-1)
        expected = (self.grid.num_snapshots, self.equation.num_variables) + self.grid.points_per_dim
        if self.states.shape != expected:
            raise ValueError(f"states shape {self.states.shape} != expected {expected}")

    @property
    def num_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]


def _as_state(u0, grid: GridSpec, num_variables: int) -> np.ndarray:
    if isinstance(u0, SineWaveIC):
        u0 = u0.evaluate(grid.axis_coords(0))
    arr = np.asarray(u0, dtype=np.float64)
    if arr.shape == grid.points_per_dim:
        arr = arr[None]
    expected = (num_variables,) + grid.points_per_dim
    if arr.shape != expected:
        raise ValueError(f"initial state shape {arr.shape} != expected {expected}")
    return arr.copy()


def _check_finite(u: np.ndarray, snapshot: int, t: float) -> None:
    if not np.isfinite(u).all():
        raise NonFiniteError(f"solution blew up at snapshot {snapshot} (t={t:g})", snapshot)


# advection ---------------------------------------------------------------

def _advect_exact(waves: SineWaveIC, grid: GridSpec, beta: float) -> np.ndarray:
    x = grid.axis_coords(0)
    states = np.empty((grid.num_snapshots, 1, grid.points_per_dim[0]))
    for s in range(grid.num_snapshots):
        states[s, 0] = waves.evaluate(x, shift=beta * (s * grid.snapshot_dt))
    return states


def _advect_spectral(u0: np.ndarray, grid: GridSpec, beta: float) -> np.ndarray:
    """Fourier phase shift; exact for fields band-limited below Nyquist."""
    n = grid.points_per_dim[0]
    length = grid.lengths[0]
    spectrum = np.fft.rfft(u0[0])
    if n % 2 == 0 and abs(spectrum[-1]) > 1e-9 * (1.0 + np.abs(spectrum).max()):
        raise SolverError("initial condition has Nyquist energy; exact shift undefined")
    k = 2.0 * np.pi * np.arange(spectrum.size) / length
    states = np.empty((grid.num_snapshots, 1, n))
    for s in range(grid.num_snapshots):
        phase = np.exp(-1j * k * beta * (s * grid.snapshot_dt))
        states[s, 0] = np.fft.irfft(spectrum * phase, n)
    return states


# burgers -----------------------------------------------------------------

def _burgers_rhs(u: np.ndarray, diffusivity: float, dx: float) -> np.ndarray:
    flux_cell = 0.5 * u * u
    u_right = np.roll(u, -1)
    wave_speed = np.maximum(np.abs(u), np.abs(u_right))
    # Rusanov flux at the i+1/2 interface
    flux = 0.5 * (flux_cell + np.roll(flux_cell, -1)) - 0.5 * wave_speed * (u_right - u)
    divergence = (flux - np.roll(flux, 1)) / dx
    laplacian = (u_right - 2.0 * u + np.roll(u, 1)) / (dx * dx)
    return -divergence + diffusivity * laplacian


def burgers_max_dt(u_abs_max: float, nu: float, dx: float) -> float:
    dt = ADVECTIVE_CFL * dx / max(u_abs_max, 1e-12)
    diffusivity = nu * math.pi
    if diffusivity > 0:
        dt = min(dt, DIFFUSIVE_CFL * dx * dx / diffusivity)
    return dt


def _solve_burgers(u0: np.ndarray, grid: GridSpec, nu: float) -> np.ndarray:
    dx = grid.spacings[0]
    diffusivity = nu * math.pi
    dt = grid.snapshot_dt / grid.internal_substeps
    states = np.empty((grid.num_snapshots, 1, grid.points_per_dim[0]))
    u = u0[0].copy()
    states[0, 0] = u
    for s in range(1, grid.num_snapshots):
        limit = burgers_max_dt(float(np.max(np.abs(u))), nu, dx)
        if dt > limit * (1.0 + 1e-12):
            needed = math.ceil(grid.snapshot_dt / limit)
            raise CFLViolationError(
                f"internal_substeps={grid.internal_substeps} gives dt={dt:g} "
                f"> stable limit {limit:g}; need >= {needed} substeps"
            )
        for _ in range(grid.internal_substeps):
            u = u + dt * _burgers_rhs(u, diffusivity, dx)
        _check_finite(u, s, s * grid.snapshot_dt)
        states[s, 0] = u
    return states


# 1D reaction-diffusion -----------------------------------------------------

def _logistic_step(u: np.ndarray, rho: float, dt: float, snapshot: int, t: float) -> np.ndarray:
    growth = math.exp(rho * dt)
    denom = 1.0 - u + u * growth
    if np.any(denom <= 0.0):
        raise NonFiniteError(
            f"logistic reaction step diverged at snapshot {snapshot} (t={t:g})", snapshot
        )
    return u * growth / denom


def rd1d_max_dt(nu: float, dx: float) -> float:
    return 0.5 * dx * dx / nu if nu > 0 else math.inf


def _solve_rd1d(u0: np.ndarray, grid: GridSpec, nu: float, rho: float) -> np.ndarray:
    dx = grid.spacings[0]
    dt = grid.snapshot_dt / grid.internal_substeps
    limit = rd1d_max_dt(nu, dx)
    if dt > limit * (1.0 + 1e-12):
        needed = math.ceil(grid.snapshot_dt / limit)
        raise CFLViolationError(
            f"internal_substeps={grid.internal_substeps} gives dt={dt:g} "
            f"> diffusion limit {limit:g}; need >= {needed} substeps"
        )
    coef = nu * dt / (dx * dx)
    states = np.empty((grid.num_snapshots, 1, grid.points_per_dim[0]))
    u = u0[0].copy()
    states[0, 0] = u
    for s in range(1, grid.num_snapshots):
        t = s * grid.snapshot_dt
        for _ in range(grid.internal_substeps):
            u = u + coef * (np.roll(u, -1) - 2.0 * u + np.roll(u, 1))
            if rho != 0.0:
                u = _logistic_step(u, rho, dt, s, t)
        _check_finite(u, s, t)
        states[s, 0] = u
    return states


# 2D reaction-diffusion ------------------------------------------------------

def neumann_laplacian(f: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Five-point Laplacian with zero-flux faces (cell-centered mirror)."""
    padded = np.pad(f, 1, mode="edge")
    return ((padded[2:, 1:-1] - 2.0 * f + padded[:-2, 1:-1]) / (dx * dx)
            + (padded[1:-1, 2:] - 2.0 * f + padded[1:-1, :-2]) / (dy * dy))


def rd2d_max_dt(du: float, dv: float, dx: float, dy: float) -> float:
    lam = 4.0 * max(du, dv) * (1.0 / (dx * dx) + 1.0 / (dy * dy))
    diffusion_dt = 0.5 * RK4_STABILITY / lam if lam > 0 else math.inf
    return min(diffusion_dt, RD2D_REACTION_DT_CAP)


def _solve_rd2d(u0: np.ndarray, grid: GridSpec, eq: ReactionDiffusion2D) -> np.ndarray:
    dx, dy = grid.spacings
    dt = grid.snapshot_dt / grid.internal_substeps
    limit = rd2d_max_dt(eq.du, eq.dv, dx, dy)
    if dt > limit * (1.0 + 1e-12):
        needed = math.ceil(grid.snapshot_dt / limit)
        raise CFLViolationError(
            f"internal_substeps={grid.internal_substeps} gives dt={dt:g} "
            f"> stable limit {limit:g}; need >= {needed} substeps"
        )

    def rhs(u, v):
        fu = eq.du * neumann_laplacian(u, dx, dy) + u - u ** 3 - eq.k - v
        fv = eq.dv * neumann_laplacian(v, dx, dy) + u - v
        return fu, fv

    states = np.empty((grid.num_snapshots, 2) + grid.points_per_dim)
    u, v = u0[0].copy(), u0[1].copy()
    states[0, 0], states[0, 1] = u, v
    for s in range(1, grid.num_snapshots):
        t = s * grid.snapshot_dt
        for _ in range(grid.internal_substeps):
            k1u, k1v = rhs(u, v)
            k2u, k2v = rhs(u + 0.5 * dt * k1u, v + 0.5 * dt * k1v)
            k3u, k3v = rhs(u + 0.5 * dt * k2u, v + 0.5 * dt * k2v)
            k4u, k4v = rhs(u + dt * k3u, v + dt * k3v)
            u = u + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            v = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        _check_finite(u, s, t)
        _check_finite(v, s, t)
        states[s, 0], states[s, 1] = u, v
    return states


# dispatch ------------------------------------------------------------------

def solve_trajectory(eq: EquationSpec, grid: GridSpec, u0) -> Trajectory:
    """Integrate one trajectory; ``u0`` is a field array or a SineWaveIC."""
    if isinstance(eq, Advection):
        if isinstance(u0, SineWaveIC):
            states = _advect_exact(u0, grid, eq.beta)
        else:
            states = _advect_spectral(_as_state(u0, grid, 1), grid, eq.beta)
    elif isinstance(eq, Burgers):
        states = _solve_burgers(_as_state(u0, grid, 1), grid, eq.nu)
    elif isinstance(eq, ReactionDiffusion1D):
        states = _solve_rd1d(_as_state(u0, grid, 1), grid, eq.nu, eq.rho)
    elif isinstance(eq, ReactionDiffusion2D):
        states = _solve_rd2d(_as_state(u0, grid, 2), grid, eq)
    else:
        raise TypeError(f"unsupported equation {type(eq).__name__}")
    return Trajectory(params=eq.params, states=states, equation=eq, grid=grid)


def required_substeps(family: str, grid: GridSpec, max_abs_u: float,
                      nu_max: float = 0.0, accuracy_dt: float | None = None) -> int:
    """Smallest substep count that satisfies the relevant stability bounds
    (plus an optional accuracy cap on the effective step size)."""
    if family == "advection":
        limit = math.inf  # analytic evaluation
    elif family == "burgers":
        limit = burgers_max_dt(max_abs_u, nu_max, grid.spacings[0])
    elif family == "reaction_diffusion_1d":
        limit = rd1d_max_dt(nu_max, grid.spacings[0])
    elif family == "reaction_diffusion_2d":
        limit = rd2d_max_dt(ReactionDiffusion2D(0.0).du, ReactionDiffusion2D(0.0).dv,
                            *grid.spacings)
    else:
        raise ValueError(f"unknown family {family!r}")
    if accuracy_dt is not None:
        limit = min(limit, accuracy_dt)
    if math.isinf(limit):
        return 1
    return max(1, math.ceil(grid.snapshot_dt / limit - 1e-12))
