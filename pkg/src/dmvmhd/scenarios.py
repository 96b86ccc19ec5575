"""Initial data: a uniform equilibrium plus one named admissible perturbation.

All perturbations vanish on the boundary so the initial state matches the
equilibrium boundary data exactly:

* ``solenoidal-B``: ``delta B = curl(psi e_z)`` with ``psi = a b**2``,
  ``b`` the polynomial bubble; divergence free with zero trace.
* ``velocity-bump``: ``delta u = a b (1, 1/2, 0)``.
* ``temperature-bump``: ``theta = theta_bar (1 + a b)``.
* ``mixed``: all three plus a density bump, used for ensembles.
"""

from __future__ import annotations

import numpy as np

from .config import RunConfig
from .errors import ConfigError
from .grid import BoundaryData, FluidState, Grid
from .solver import Solver, corner_stream_field, make_equilibrium


def bubble(grid: Grid, X=None):
    """``prod_k 4 x_k (L_k - x_k) / L_k**2``: 1 at the centre, 0 on every face."""
    X = grid.centers() if X is None else X
    out = np.ones(np.broadcast_shapes(*(np.shape(x) for x in X)))
    for x, L in zip(X, grid.lengths):
        out = out * 4.0 * x * (L - x) / L**2
    return out


def _bubble_grad(grid: Grid, X):
    """Gradient of ``bubble`` (components along the grid axes)."""
    f = [4.0 * x * (L - x) / L**2 for x, L in zip(X, grid.lengths)]
    df = [4.0 * (L - 2.0 * x) / L**2 for x, L in zip(X, grid.lengths)]
    out = []
    for k in range(grid.dim):
        g = df[k]
        for j in range(grid.dim):
            if j != k:
                g = g * f[j]
        out.append(g)
    return out


def solenoidal_increment(grid: Grid, amplitude, div_control="projection"):
    """``curl(a b**2 e_z)`` sampled so that the active discrete divergence vanishes."""
    dB = np.zeros((3,) + grid.shape)
    if amplitude == 0.0:
        return dB
    if grid.dim == 2 and div_control == "ct":
        Xc = np.meshgrid(*(np.linspace(0.0, L, n + 1) for n, L in zip(grid.shape, grid.lengths)), indexing="ij")
        psi = amplitude * bubble(grid, Xc) ** 2
        dB[0], dB[1] = corner_stream_field(psi, grid)
        return dB
    X = grid.centers()
    b = bubble(grid, X)
    gb = _bubble_grad(grid, X)
    # curl(psi e_z) = (d_y psi, -d_x psi, 0), psi = a b**2
    dpsi = [2.0 * amplitude * b * g for g in gb]
    if grid.dim >= 2:
        dB[0] = dpsi[1]
    dB[1] = -dpsi[0]
    return dB


def perturbed_primitives(grid: Grid, cfg: RunConfig, kind=None, amplitude=None):
    """Cell-centre primitives ``(rho, u, theta, B)`` of the configured initial state."""
    kind = cfg.perturbation_kind if kind is None else kind
    a = cfg.amplitude if amplitude is None else float(amplitude)
    rho0, theta0, B0 = cfg.equilibrium_state
    b = bubble(grid)
    rho = np.full(grid.shape, rho0)
    theta = np.full(grid.shape, theta0)
    u = np.zeros((3,) + grid.shape)
    B = np.broadcast_to(np.asarray(B0).reshape((3,) + (1,) * grid.dim), (3,) + grid.shape).copy()
    if kind not in ("none", "solenoidal-B", "velocity-bump", "temperature-bump", "mixed"):
        raise ConfigError(f"unknown perturbation {kind!r}")
    if kind in ("velocity-bump", "mixed"):
        u[0] += a * b
        u[1] += 0.5 * a * b
    if kind in ("temperature-bump", "mixed"):
        theta = theta0 * (1.0 + a * b)
    if kind == "mixed":
        rho = rho0 * (1.0 + 0.5 * a * b)
    if kind in ("solenoidal-B", "mixed"):
        B = B + solenoidal_increment(grid, a, cfg.build_solver_config().div_control)
    return rho, u, theta, B


def initial_state(cfg: RunConfig, grid: Grid | None = None, eos=None, kind=None, amplitude=None):
    """``(state, boundary)`` for the configured equilibrium and perturbation."""
    grid = cfg.build_grid() if grid is None else grid
    eos = cfg.build_eos() if eos is None else eos
    rho0, theta0, B0 = cfg.equilibrium_state
    eq, boundary = make_equilibrium(grid, eos, rho0, theta0, B0)
    kind = cfg.perturbation_kind if kind is None else kind
    a = cfg.amplitude if amplitude is None else float(amplitude)
    if kind == "none" or a == 0.0:
        return eq, boundary
    rho, u, theta, B = perturbed_primitives(grid, cfg, kind, a)
    # keep the exact equilibrium temperature recovered by make_equilibrium
    theta = theta * (float(boundary.theta_B.expr) / theta0)
    state = FluidState.from_primitives(grid, eos, rho, u, theta, B)
    return state, boundary


def build_solver(cfg: RunConfig, grid: Grid, boundary: BoundaryData, eos=None, transport=None) -> Solver:
    eos = cfg.build_eos() if eos is None else eos
    transport = cfg.build_transport() if transport is None else transport
    return Solver(grid, boundary, eos, transport, cfg.build_solver_config())


def project_initial(solver: Solver, state: FluidState) -> FluidState:
    """Apply the solver's divergence projection to the initial magnetic field."""
    if solver.config.div_control != "projection" or solver.grid.dim == 1:
        return state
    B = solver.project(np.array(state.B))
    return FluidState(state.grid, state.t, state.rho, state.m, state.eps, B)


def ensemble_amplitudes(cfg: RunConfig, n: int, seed: int | None = None):
    """Seeded member amplitudes ``a * U(0.25, 1)``, member 0 at full amplitude."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    f = rng.uniform(0.25, 1.0, size=n)
    f[0] = 1.0
    return [cfg.amplitude * float(v) for v in f]


__all__ = [
    "bubble",
    "build_solver",
    "ensemble_amplitudes",
    "initial_state",
    "perturbed_primitives",
    "project_initial",
    "solenoidal_increment",
]
