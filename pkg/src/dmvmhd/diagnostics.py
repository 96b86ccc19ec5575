"""Conserved totals, ballistic energy, entropy production and the entropy audit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constitutive import StateSample, TensorPoint, TransportModel, entropy_production
from .errors import ConstraintError
from .fields import ScalarField, VectorField
from .grid import BoundaryData, FluidState, apply_boundary, cell_gradients, tensor_last

CONSTRAINT_TOL = 1e-8


def totals(state: FluidState, eos) -> dict:
    """Mass, momentum, total energy and total entropy (midpoint rule)."""
    g = state.grid
    theta = state.temperature(eos)
    kinetic = 0.5 * np.sum(state.m * state.m, axis=0) / state.rho
    magnetic = 0.5 * np.sum(state.B * state.B, axis=0)
    mom = g.integrate(state.m)
    return {
        "mass": float(g.integrate(state.rho)),
        "momentum": tuple(float(v) for v in mom),
        "energy": float(g.integrate(kinetic + state.eps + magnetic)),
        "entropy": float(g.integrate(eos.entropy_density(state.rho, theta))),
    }


def gradients(state: FluidState, boundary: BoundaryData, eos, theta=None):
    """Primitive fields and their discrete cell gradients (``D u``, ``grad theta``, ``curl B``)."""
    theta = state.temperature(eos) if theta is None else theta
    ext = apply_boundary(state, boundary, eos, theta)
    return theta, cell_gradients(ext, state.grid)


def production_field(state: FluidState, boundary: BoundaryData, eos, transport: TransportModel, theta=None, cg=None):
    """Pointwise entropy production rate on cells."""
    if cg is None:
        theta, cg = gradients(state, boundary, eos, theta)
    tp = TensorPoint(tensor_last(cg.D), tensor_last(cg.grad_theta), tensor_last(cg.curl_B))
    return entropy_production(transport, StateSample(state.rho, theta), tp)


def boundary_entropy_flux(state: FluidState, boundary: BoundaryData, eos, transport: TransportModel, theta=None):
    """``int_{Gamma_D^theta} (q . n) / theta_B`` with the solver's face gradient."""
    g = state.grid
    theta = state.temperature(eos) if theta is None else theta
    total = 0.0
    for a, s in g.faces():
        if g.theta_bc[a][s] != "dirichlet":
            continue
        idx = 0 if s == 0 else g.shape[a] - 1
        th_in = np.take(theta, idx, axis=a)
        rho_in = np.take(state.rho, idx, axis=a)
        tb = boundary.theta_face(g, a, s, state.t)
        th_ghost = 2.0 * tb - th_in
        kappa = transport.kappa(rho_in, 0.5 * (th_in + th_ghost))
        qn = -kappa * (th_ghost - th_in) / g.h[a]
        area = g.cell_volume / g.h[a]
        total += float(np.sum(qn / tb) * area)
    return total


def _field_values(f, state):
    if isinstance(f, (ScalarField, VectorField)):
        return f(state.t, state.grid.centers())
    return np.asarray(f, float)


def check_ballistic_pair(state: FluidState, theta_tilde, B_tilde, boundary: BoundaryData | None, tol=CONSTRAINT_TOL):
    """Admissibility of ``(theta_tilde, B_tilde)`` for the ballistic energy."""
    g = state.grid
    th = _field_values(theta_tilde, state)
    Bt = _field_values(B_tilde, state)
    if th.shape != g.shape or Bt.shape != (3,) + g.shape:
        raise ConstraintError("theta_tilde / B_tilde do not match the grid")
    if not (np.all(np.isfinite(th)) and np.all(th > 0)):
        raise ConstraintError("theta_tilde must be positive")
    if boundary is None:
        return th, Bt
    if isinstance(theta_tilde, ScalarField):
        for a, s in g.faces():
            if g.theta_bc[a][s] == "dirichlet":
                X = g.face_points(a, s)
                err = np.max(np.abs(theta_tilde(state.t, X) - boundary.theta_B(state.t, X)))
                if err > tol:
                    raise ConstraintError(f"theta_tilde differs from theta_B on face {(a, s)} by {err:.2e}")
    if isinstance(B_tilde, VectorField):
        div = np.max(np.abs(B_tilde.div(state.t, g.centers())))
        if div > tol:
            raise ConstraintError(f"B_tilde is not solenoidal (|div| = {div:.2e})")
        for a, s in g.faces():
            X = g.face_points(a, s)
            diff = B_tilde(state.t, X) - boundary.B_B(0.0, X)
            if g.magnetic_bc[a][s] == "tangential":
                err = np.max(np.abs(np.delete(diff, a, axis=0)))
            else:
                err = np.max(np.abs(diff[a]))
            if err > tol:
                raise ConstraintError(f"B_tilde violates the magnetic boundary data on face {(a, s)} ({err:.2e})")
    return th, Bt


def ballistic_energy(state: FluidState, eos, theta_tilde, B_tilde, boundary: BoundaryData | None = None):
    """``int 1/2 rho|u|^2 + rho e + 1/2|B|^2 - theta_tilde rho s - B_tilde . B``."""
    th, Bt = check_ballistic_pair(state, theta_tilde, B_tilde, boundary)
    theta = state.temperature(eos)
    dens = (
        0.5 * np.sum(state.m * state.m, axis=0) / state.rho
        + state.eps
        + 0.5 * np.sum(state.B * state.B, axis=0)
        - th * eos.entropy_density(state.rho, theta)
        - np.sum(Bt * state.B, axis=0)
    )
    return float(state.grid.integrate(dens))


@dataclass
class EntropyAuditRow:
    t0: float
    t1: float
    dS_dt: float
    boundary_flux: float
    production: float
    residual: float
    min_production: float


@dataclass
class EntropyAuditReport:
    rows: list
    tol: float

    @property
    def residuals(self):
        return np.array([r.residual for r in self.rows])

    @property
    def worst(self):
        return float(self.residuals.min()) if self.rows else 0.0

    @property
    def passed(self):
        return self.worst >= -self.tol


def entropy_audit(trajectory, eos=None, transport=None, C_audit=10.0) -> EntropyAuditReport:
    """Signed residual of the entropy balance on each snapshot interval.

    ``residual = d/dt int rho s + int_{Gamma_D} q.n / theta_B - int sigma``
    with the production ``sigma`` averaged by the trapezoid rule. The
    balance is an inequality (residual >= 0) up to ``C_audit * h``.
    """
    eos = eos or trajectory.eos
    transport = transport or trajectory.transport
    g, bd = trajectory.grid, trajectory.boundary
    per = []
    for st in trajectory.states:
        theta = st.temperature(eos)
        sigma = production_field(st, bd, eos, transport, theta)
        per.append(
            (
                st.t,
                float(g.integrate(eos.entropy_density(st.rho, theta))),
                boundary_entropy_flux(st, bd, eos, transport, theta),
                float(g.integrate(sigma)),
                float(sigma.min()),
            )
        )
    rows = []
    for (t0, S0, f0, p0, m0), (t1, S1, f1, p1, m1) in zip(per[:-1], per[1:]):
        dS = (S1 - S0) / (t1 - t0)
        flux = 0.5 * (f0 + f1)
        prod = 0.5 * (p0 + p1)
        rows.append(EntropyAuditRow(t0, t1, dS, flux, prod, dS + flux - prod, min(m0, m1)))
    return EntropyAuditReport(rows, C_audit * g.h_min)


def divergence_max(state: FluidState, solver) -> float:
    return float(np.max(np.abs(solver.divergence(state.B))))


__all__ = [
    "EntropyAuditReport",
    "EntropyAuditRow",
    "ballistic_energy",
    "boundary_entropy_flux",
    "check_ballistic_pair",
    "divergence_max",
    "entropy_audit",
    "gradients",
    "production_field",
    "totals",
]
