"""Finite-volume evolution of the viscous, heat and electrically conducting
MHD system in internal-energy form.

Unknowns per cell: ``rho``, ``m = rho u``, ``eps = rho e`` and ``B``.

* Hyperbolic fluxes: Rusanov (local Lax-Friedrichs) with wave speed
  ``|u_n| + c_f``, ``c_f**2 = c_s**2 + |B|**2 / rho``; the normal magnetic
  component carries no flux and no numerical dissipation.
* Viscous, resistive and heat fluxes: compact face gradients (normal part
  from the two adjacent cells, tangential parts averaged from centered
  differences).
* Cell sources: ``curl B x B`` in the momentum balance and
  ``-p div u + S:D + zeta |curl B|**2`` in the internal energy balance.
* SSP-RK2 in time with a step fixed at the start of a run.
* Divergence control: minimum-norm projection for the face-averaged
  divergence, or flux-CT (2D) preserving the corner divergence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import lsqr

from .constitutive import TransportModel
from .errors import CflError, ConfigError, DomainError, PositivityError, SolveError
from .grid import GHOST, BoundaryData, FluidState, Grid, Primitives, _fill_scalar, cell_gradients, extend, fill_ghosts

logger = logging.getLogger(__name__)

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_i, _j, _k] = 1.0
    LEVI_CIVITA[_i, _k, _j] = -1.0

DIV_CONTROLS = ("projection", "ct", "none")


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.4
    t_end: float = 0.1
    steps: int | None = None
    div_control: str = "projection"
    snapshot_every: int = 1
    fault_resistive_heating: bool = False
    numerical_heating: bool = True
    div_tol: float = 1e-10
    max_iter: int = 10_000

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ConfigError(f"CFL must lie in (0, 1], got {self.cfl}")
        if self.steps is None and not self.t_end > 0:
            raise ConfigError("end time must be positive")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be positive")
        if self.div_control not in DIV_CONTROLS:
            raise ConfigError(f"unknown divergence control {self.div_control!r}")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot cadence must be positive")


# ---------------------------------------------------------------------------
# slicing helpers on ghost-extended arrays (spatial axes trailing)
# ---------------------------------------------------------------------------


def _slices(f, grid, spec):
    lead = f.ndim - grid.dim
    sl = [slice(None)] * f.ndim
    for a in range(grid.dim):
        sl[lead + a] = spec.get(a, slice(GHOST, GHOST + grid.shape[a]))
    return f[tuple(sl)]


def face_pair(f_ext, grid, j):
    """Left/right cell values at the ``n_j + 1`` faces normal to axis ``j``."""
    n = grid.shape[j]
    return (
        _slices(f_ext, grid, {j: slice(GHOST - 1, GHOST + n)}),
        _slices(f_ext, grid, {j: slice(GHOST, GHOST + n + 1)}),
    )


def face_gradient(f_ext, grid, j):
    """Gradient at faces normal to ``j``: ``(..., 3, *face_shape)``."""
    n = grid.shape[j]
    L, R = face_pair(f_ext, grid, j)
    parts = []
    for k in range(3):
        if k == j:
            parts.append((R - L) / grid.h[j])
        elif k < grid.dim:
            nk = grid.shape[k]
            span = slice(GHOST - 1, GHOST + n + 1)
            hi = _slices(f_ext, grid, {j: span, k: slice(GHOST + 1, GHOST + nk + 1)})
            lo = _slices(f_ext, grid, {j: span, k: slice(GHOST - 1, GHOST + nk - 1)})
            d = (hi - lo) / (2.0 * grid.h[k])
            ax = d.ndim - grid.dim + j
            parts.append(0.5 * (np.take(d, np.arange(0, n + 1), axis=ax) + np.take(d, np.arange(1, n + 2), axis=ax)))
        else:
            parts.append(np.zeros_like(L))
    return np.stack(parts, axis=f_ext.ndim - grid.dim)


def flux_divergence(F, grid, j):
    """``(F_{i+1/2} - F_{i-1/2}) / h_j`` for face arrays along ``j``."""
    ax = F.ndim - grid.dim + j
    n = grid.shape[j]
    return (np.take(F, np.arange(1, n + 1), axis=ax) - np.take(F, np.arange(0, n), axis=ax)) / grid.h[j]


# ---------------------------------------------------------------------------
# divergence operators
# ---------------------------------------------------------------------------


def _axis_average_operator(n, h, lo_free, hi_free):
    """1D face-average divergence: faces 1/2 (x_i + x_{i+1}); boundary face = x
    (free) or a fixed datum (not free)."""
    rows, cols, vals = [], [], []
    for i in range(n):
        # right face
        if i < n - 1:
            rows += [i, i]
            cols += [i, i + 1]
            vals += [0.5 / h, 0.5 / h]
        elif hi_free:
            rows.append(i)
            cols.append(i)
            vals.append(1.0 / h)
        # left face
        if i > 0:
            rows += [i, i]
            cols += [i - 1, i]
            vals += [-0.5 / h, -0.5 / h]
        elif lo_free:
            rows.append(i)
            cols.append(i)
            vals.append(-1.0 / h)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def divergence_operator(grid: Grid):
    """Sparse linear part ``D_0`` of the face-averaged divergence acting on
    ``B[:dim]`` flattened component by component (C order)."""
    blocks = []
    for a in range(grid.dim):
        lo_free = grid.magnetic_bc[a][0] == "tangential"
        hi_free = grid.magnetic_bc[a][1] == "tangential"
        op = sparse.identity(1, format="csr")
        for b in range(grid.dim):
            f = (
                _axis_average_operator(grid.shape[b], grid.h[b], lo_free, hi_free)
                if b == a
                else sparse.identity(grid.shape[b], format="csr")
            )
            op = sparse.kron(op, f, format="csr")
        blocks.append(op)
    return sparse.hstack(blocks, format="csr")


def divergence_offset(grid: Grid, boundary: BoundaryData):
    """Constant part of the face-averaged divergence from ``b_nu`` on normal faces."""
    c = np.zeros(grid.shape)
    for a, s in grid.faces():
        if grid.magnetic_bc[a][s] != "normal":
            continue
        b = boundary.b_face(grid, a, s)[a]
        idx = [slice(None)] * grid.dim
        idx[a] = 0 if s == 0 else grid.shape[a] - 1
        c[tuple(idx)] += (-b if s == 0 else b) / grid.h[a]
    return c


def divergence_face_average(B, grid: Grid, boundary: BoundaryData):
    """Cell divergence from face averages; normal faces use ``b_nu``, tangential faces the cell value."""
    B = np.asarray(B, float)
    div = np.zeros(grid.shape)
    for a in range(grid.dim):
        comp = B[a]
        n = grid.shape[a]
        inner = 0.5 * (np.take(comp, np.arange(0, n - 1), axis=a) + np.take(comp, np.arange(1, n), axis=a))
        faces = []
        for s in (0, 1):
            if grid.magnetic_bc[a][s] == "normal":
                faces.append(np.expand_dims(boundary.b_face(grid, a, s)[a], a))
            else:
                faces.append(np.take(comp, [0 if s == 0 else n - 1], axis=a))
        full = np.concatenate([faces[0], inner, faces[1]], axis=a)
        div += (np.take(full, np.arange(1, n + 1), axis=a) - np.take(full, np.arange(0, n), axis=a)) / grid.h[a]
    return div


def divergence_corner(B, grid: Grid):
    """2D corner divergence at interior corners (the quantity flux-CT preserves)."""
    if grid.dim != 2:
        raise ConfigError("corner divergence is defined for 2D grids")
    bx, by = np.asarray(B[0]), np.asarray(B[1])
    hx, hy = grid.h
    dx = (bx[1:, 1:] + bx[1:, :-1] - bx[:-1, 1:] - bx[:-1, :-1]) / (2.0 * hx)
    dy = (by[1:, 1:] + by[:-1, 1:] - by[1:, :-1] - by[:-1, :-1]) / (2.0 * hy)
    return dx + dy


def corner_stream_field(psi, grid: Grid):
    """In-plane field from a corner stream function ``psi`` of shape ``(nx+1, ny+1)``
    whose corner divergence vanishes identically."""
    if grid.dim != 2:
        raise ConfigError("corner stream functions need a 2D grid")
    hx, hy = grid.h
    bx = (psi[:-1, 1:] + psi[1:, 1:] - psi[:-1, :-1] - psi[1:, :-1]) / (2.0 * hy)
    by = -(psi[1:, :-1] + psi[1:, 1:] - psi[:-1, :-1] - psi[:-1, 1:]) / (2.0 * hx)
    return bx, by


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: Grid
    boundary: BoundaryData
    eos: object
    transport: TransportModel
    config: SolverConfig
    dt: float
    states: tuple
    steps_per_snapshot: int = 1

    @property
    def times(self):
        return np.array([s.t for s in self.states])


def _mirror_ext(f, grid):
    f = extend(f, grid.dim)
    for a in range(grid.dim):
        for s in (0, 1):
            _fill_scalar(f, grid.dim, a, s, grid.shape[a], "mirror")
    return f


class Solver:
    """Time integrator bound to one grid, boundary data, closures and config."""

    def __init__(self, grid: Grid, boundary: BoundaryData, eos, transport: TransportModel, config: SolverConfig):
        if config.div_control == "ct" and grid.dim != 2:
            raise ConfigError("constrained transport is available in 2D only")
        self.grid, self.boundary, self.eos, self.transport, self.config = grid, boundary, eos, transport, config
        self._D0 = None
        self._c = None

    # -- primitive recovery -------------------------------------------------
    def _recover(self, U, t, guess=None):
        rho, m, eps, B = U[0], U[1:4], U[4], U[5:8]
        if not np.all(np.isfinite(U)):
            bad = np.argwhere(~np.isfinite(U).all(axis=0))[0]
            raise PositivityError(f"non-finite state in cell {tuple(int(i) for i in bad)} at t={t:.6g}")
        if np.any(rho <= 0):
            bad = np.argwhere(rho <= 0)[0]
            raise PositivityError(f"rho <= 0 in cell {tuple(int(i) for i in bad)} at t={t:.6g}")
        if np.any(eps <= 0):
            bad = np.argwhere(eps <= 0)[0]
            raise PositivityError(f"rho e <= 0 in cell {tuple(int(i) for i in bad)} at t={t:.6g}")
        theta = self.eos.temperature(rho, eps, guess=guess)
        if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
            bad = np.argwhere(~(theta > 0))[0]
            raise PositivityError(f"theta <= 0 in cell {tuple(int(i) for i in bad)} at t={t:.6g}")
        return rho, m / rho, theta, B

    def extended_primitives(self, rho, u, theta, B, t):
        g = self.grid
        prims = Primitives(extend(rho, g.dim), extend(u, g.dim), extend(theta, g.dim), extend(B, g.dim))
        return fill_ghosts(prims, g, self.boundary, t)

    # -- stability -----------------------------------------------------------
    def stability_limits(self, rho, u, theta, B):
        """``(hyperbolic, parabolic)`` admissible steps at CFL 1."""
        g = self.grid
        cs2 = self.eos.sound_speed_sq(rho, theta)
        cf = np.sqrt(cs2 + np.sum(B * B, axis=0) / rho)
        rate = sum((np.abs(u[a]) + cf) / g.h[a] for a in range(g.dim))
        hyp = 1.0 / float(np.max(rate))
        tm = self.transport
        mu, eta, kappa, zeta = tm.mu(rho, theta), tm.eta(rho, theta), tm.kappa(rho, theta), tm.zeta(rho, theta)
        nu = (4.0 * mu / 3.0 + eta / 3.0) / rho
        chi = kappa / (rho * self.eos.heat_capacity(rho, theta))
        diff = float(np.max(np.maximum(np.maximum(nu, chi), zeta)))
        par = math.inf if diff <= 0 else g.h_min**2 / (2.0 * g.dim * diff)
        return hyp, par

    def compute_dt(self, state: FluidState):
        for arr in (state.rho, state.m, state.eps, state.B):
            if not np.all(np.isfinite(arr)):
                raise DomainError("non-finite state passed to compute_dt")
        rho, u, theta, B = self._recover(state.stacked(), state.t, state.theta_hint)
        hyp, par = self.stability_limits(rho, u, theta, B)
        return self.config.cfl * min(hyp, par)

    # -- right-hand side -----------------------------------------------------
    def rhs(self, U, t, dt, guess=None):
        g, eos, tm = self.grid, self.eos, self.transport
        dim = g.dim
        rho, u, theta, B = self._recover(U, t, guess)
        hyp, par = self.stability_limits(rho, u, theta, B)
        if dt > min(hyp, par) * (1.0 + 1e-12):
            raise CflError(f"dt={dt:.3e} exceeds the stability limit {min(hyp, par):.3e} at t={t:.6g}")
        p = eos.pressure(rho, theta)
        cf = np.sqrt(eos.sound_speed_sq(rho, theta) + np.sum(B * B, axis=0) / rho)

        ext = self.extended_primitives(rho, u, theta, B, t)
        rho_e, u_e, th_e, B_e = ext
        eps_e = _mirror_ext(U[4], g)
        p_e = _mirror_ext(p, g)
        cf_e = _mirror_ext(cf, g)
        m_e = rho_e * u_e

        dU = np.zeros_like(U)
        heat = np.zeros(g.shape)
        ez_faces = {}
        for j in range(dim):
            (rL, rR), (uL, uR), (mL, mR), (eL, eR), (pL, pR), (BL, BR), (cL, cR) = (
                face_pair(f, g, j) for f in (rho_e, u_e, m_e, eps_e, p_e, B_e, cf_e)
            )
            thL, thR = face_pair(th_e, g, j)
            a = np.maximum(np.abs(uL[j]) + cL, np.abs(uR[j]) + cR)
            F = np.empty((8,) + rL.shape)
            F[0] = 0.5 * (rL * uL[j] + rR * uR[j]) - 0.5 * a * (rR - rL)
            Fm = 0.5 * (mL * uL[j] + mR * uR[j]) - 0.5 * a * (mR - mL)
            Fm[j] += 0.5 * (pL + pR)
            F[1:4] = Fm
            F[4] = 0.5 * (eL * uL[j] + eR * uR[j]) - 0.5 * a * (eR - eL)
            FB = 0.5 * ((uL[j] * BL - BL[j] * uL) + (uR[j] * BR - BR[j] * uR)) - 0.5 * a * (BR - BL)
            FB[j] = 0.0
            if self.config.numerical_heating:
                # kinetic and magnetic energy removed by the upwind terms, returned as heat
                du2 = np.sum((uR - uL) ** 2, axis=0)
                dB2 = np.sum((BR - BL) ** 2, axis=0) - (BR[j] - BL[j]) ** 2
                w = 0.25 * a / g.h[j]
                hL, hR = w * (rR * du2 + dB2), w * (rL * du2 + dB2)
                ax = j
                heat += np.take(hL, np.arange(1, g.shape[j] + 1), axis=ax) + np.take(hR, np.arange(0, g.shape[j]), axis=ax)
            # diffusive fluxes
            rf, thf = 0.5 * (rL + rR), 0.5 * (thL + thR)
            mu, eta = tm.mu(rf, thf), tm.eta(rf, thf)
            kappa, zeta = tm.kappa(rf, thf), tm.zeta(rf, thf)
            Gu = face_gradient(u_e, g, j)
            div_u = Gu[0, 0] + Gu[1, 1] + Gu[2, 2]
            S_j = mu * (Gu[:, j] + Gu[j, :])
            S_j[j] += (eta / 3.0 - 2.0 * mu / 3.0) * div_u
            F[1:4] -= S_j
            F[4] -= kappa * (thR - thL) / g.h[j]
            GB = face_gradient(B_e, g, j)
            J = np.stack([GB[2, 1] - GB[1, 2], GB[0, 2] - GB[2, 0], GB[1, 0] - GB[0, 1]])
            FB += np.einsum("ik,k...->i...", LEVI_CIVITA[:, j, :], zeta * J)
            FB[j] = 0.0
            F[5:8] = FB
            if self.config.div_control == "ct":
                ez_faces[j] = F[5 + (1 - j)].copy()  # F_x(B_y) or F_y(B_x)
            dU -= flux_divergence(F, g, j) if self.config.div_control != "ct" else self._non_B(F, g, j)
        if self.config.div_control == "ct":
            dU[5:8] -= self._ct_update(ez_faces)
        # cell sources
        cg = cell_gradients(ext, g)
        J = cg.curl_B
        dU[1:4] += np.cross(J, B, axis=0)
        D = cg.D
        T = D - (cg.div_u / 3.0) * np.eye(3).reshape(3, 3, *([1] * dim))
        mu_c, eta_c, zeta_c = tm.mu(rho, theta), tm.eta(rho, theta), tm.zeta(rho, theta)
        power = 2.0 * mu_c * np.sum(T * T, axis=(0, 1)) + eta_c / 3.0 * cg.div_u**2
        joule = zeta_c * np.sum(J * J, axis=0)
        if self.config.fault_resistive_heating:
            joule = -joule
        dU[4] += -p * cg.div_u + power + joule + heat
        return dU, theta

    def _non_B(self, F, g, j):
        out = flux_divergence(F, g, j)
        # in CT mode the in-plane magnetic components are updated from corner fields
        out[5] = 0.0
        out[6] = 0.0
        return out

    def _ct_update(self, ez_faces):
        """Flux-CT: corner E_z from neighbouring face values, then face fluxes from corner averages."""
        g = self.grid
        nx, ny = g.shape
        ex = -ez_faces[0]  # E_z = -F_x(B_y) on x-faces, shape (nx+1, ny)
        ey = ez_faces[1]  # E_z = F_y(B_x) on y-faces, shape (nx, ny+1)
        total = np.zeros((nx + 1, ny + 1))
        count = np.zeros((nx + 1, ny + 1))
        total[:, 1:] += ex
        count[:, 1:] += 1
        total[:, :-1] += ex
        count[:, :-1] += 1
        total[1:, :] += ey
        count[1:, :] += 1
        total[:-1, :] += ey
        count[:-1, :] += 1
        Ec = total / count
        fx_by = -0.5 * (Ec[:, :-1] + Ec[:, 1:])  # x-faces
        fy_bx = 0.5 * (Ec[:-1, :] + Ec[1:, :])  # y-faces
        out = np.zeros((3, nx, ny))
        out[0] = (fy_bx[:, 1:] - fy_bx[:, :-1]) / g.h[1]
        out[1] = (fx_by[1:, :] - fx_by[:-1, :]) / g.h[0]
        return out

    # -- divergence control ---------------------------------------------------
    @property
    def divergence_matrix(self):
        if self._D0 is None:
            self._D0 = divergence_operator(self.grid)
            self._c = divergence_offset(self.grid, self.boundary)
        return self._D0

    def divergence(self, B):
        if self.config.div_control == "ct":
            return divergence_corner(B, self.grid)
        return divergence_face_average(B, self.grid, self.boundary)

    def project(self, B):
        """Remove the minimum-norm correction making the face-averaged divergence vanish."""
        g = self.grid
        D0 = self.divergence_matrix
        r = divergence_face_average(B, g, self.boundary)
        scale = 1.0 + float(np.max(np.abs(B)))
        if np.max(np.abs(r)) <= 1e-15 * scale / g.h_min:
            return B
        sol = lsqr(D0, r.ravel(), atol=1e-15, btol=1e-15, iter_lim=self.config.max_iter)
        x, istop, itn = sol[0], sol[1], sol[2]
        B = np.array(B, dtype=float)
        n = int(np.prod(g.shape))
        for a in range(g.dim):
            B[a] -= x[a * n : (a + 1) * n].reshape(g.shape)
        res = float(np.max(np.abs(divergence_face_average(B, g, self.boundary))))
        if not res <= self.config.div_tol or istop == 7:
            raise SolveError(f"divergence projection failed: residual {res:.3e} after {itn} iterations")
        return B

    # -- time stepping -------------------------------------------------------
    def step(self, state: FluidState, dt: float) -> FluidState:
        U0 = state.stacked()
        t = state.t
        L0, th = self.rhs(U0, t, dt, state.theta_hint)
        U1 = U0 + dt * L0
        L1, _ = self.rhs(U1, t + dt, dt, th)
        U2 = 0.5 * U0 + 0.5 * (U1 + dt * L1)
        if self.config.div_control == "projection":
            U2[5:8] = self.project(U2[5:8])
        _, _, theta, _ = self._recover(U2, t + dt, th)
        return FluidState.from_stacked(self.grid, t + dt, U2, theta_hint=theta)

    def schedule(self, state: FluidState):
        """Fixed step and step count for a run starting at ``state``."""
        dt_max = self.compute_dt(state)
        if self.config.steps is not None:
            return dt_max, int(self.config.steps)
        n = max(1, math.ceil(self.config.t_end / dt_max - 1e-12))
        return self.config.t_end / n, n

    def run(self, state: FluidState, dt=None, steps=None, monitor=None, snapshot_every=None) -> Trajectory:
        if dt is None or steps is None:
            dt0, n0 = self.schedule(state)
            dt = dt0 if dt is None else dt
            steps = n0 if steps is None else steps
        every = snapshot_every or self.config.snapshot_every
        if state.theta_hint is None:
            state = FluidState.from_stacked(self.grid, state.t, state.stacked(), state.temperature(self.eos))
        states = [state]
        if monitor is not None:
            monitor(state)
        t0 = state.t
        for k in range(1, steps + 1):
            state = self.step(state, dt)
            # keep the time grid exactly uniform
            state = state.with_time(t0 + k * dt)
            if monitor is not None:
                monitor(state)
            if k % every == 0 or k == steps:
                states.append(state)
        logger.debug("run finished: %d steps, dt=%.3e", steps, dt)
        return Trajectory(self.grid, self.boundary, self.eos, self.transport, self.config, dt, tuple(states), every)


def make_equilibrium(grid: Grid, eos, rho_bar, theta_bar, B_bar):
    """Uniform state and boundary data matching it exactly.

    The boundary temperature is set to the temperature recovered from the
    discrete energy density, so the state is a bitwise fixed point.
    """
    if not (rho_bar > 0 and theta_bar > 0):
        raise DomainError("equilibrium needs positive density and temperature")
    B_bar = np.asarray(B_bar, float)
    if B_bar.shape != (3,) or not np.all(np.isfinite(B_bar)):
        raise DomainError("B_bar must be a finite 3-vector")
    B_cells = np.broadcast_to(B_bar.reshape((3,) + (1,) * grid.dim), (3,) + grid.shape)
    state = FluidState.from_primitives(grid, eos, rho_bar, np.zeros(3), theta_bar, B_cells)
    theta = state.temperature(eos)
    theta_rec = float(theta.flat[0])
    boundary = BoundaryData.constant(theta_rec, B_bar)
    state = FluidState.from_stacked(grid, 0.0, state.stacked(), theta_hint=theta)
    return state, boundary


__all__ = [
    "Solver",
    "SolverConfig",
    "Trajectory",
    "corner_stream_field",
    "divergence_corner",
    "divergence_face_average",
    "divergence_offset",
    "divergence_operator",
    "face_gradient",
    "face_pair",
    "make_equilibrium",
]
