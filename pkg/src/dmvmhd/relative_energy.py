"""Relative energy (Bregman distance of the total energy), cut-off
decomposition, the two sides of the relative energy inequality, Gronwall
envelope fitting and a discrete Korn-Poincare quotient.

Vectors use a leading component axis of length 3, as on the grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constitutive import TransportModel
from .errors import AlignmentError, ConstraintError, DataError, DegenerateError, DomainError, GridMismatch
from .fields import ScalarField, VectorField
from .grid import BoundaryData, FluidState, Grid, apply_boundary, cell_gradients

logger = logging.getLogger(__name__)


class PhasePoint(NamedTuple):
    """``(rho, theta, u, B)``; scalars or arrays, vectors with leading axis 3."""

    rho: np.ndarray
    theta: np.ndarray
    u: np.ndarray
    B: np.ndarray


def _sq(v):
    return np.sum(np.asarray(v, float) ** 2, axis=0)


def rel_energy_terms(pt: PhasePoint, ref: PhasePoint, eos):
    """The individual summands of the relative energy density (for scaling and inspection)."""
    rho, theta = np.asarray(pt.rho, float), np.asarray(pt.theta, float)
    r, Th = np.asarray(ref.rho, float), np.asarray(ref.theta, float)
    if np.any(rho < 0) or np.any(theta <= 0) or np.any(r <= 0) or np.any(Th <= 0):
        raise DomainError("relative energy needs rho >= 0, theta > 0, r > 0, Theta > 0")
    e_r = eos.internal_energy(r, Th)
    s_r = eos.entropy(r, Th)
    p_r = eos.pressure(r, Th)
    gibbs = e_r - Th * s_r + p_r / r
    return {
        "kinetic": 0.5 * rho * _sq(np.asarray(pt.u) - np.asarray(ref.u)),
        "magnetic": 0.5 * _sq(np.asarray(pt.B) - np.asarray(ref.B)),
        "rho_e": eos.energy_density(rho, theta),
        "theta_rho_s": -Th * eos.entropy_density(rho, theta),
        "theta_r_s": Th * r * s_r,
        "gibbs": -gibbs * (rho - r),
        "r_e": -r * e_r,
    }


def rel_energy_density(pt: PhasePoint, ref: PhasePoint, eos):
    """``E(rho, theta, u, B | r, Theta, U, H)``.

    ``1/2 rho|u-U|^2 + 1/2|B-H|^2 + rho e - Theta (rho s - r s(r,Theta))
    - (e - Theta s + p/r)(r,Theta) (rho - r) - r e(r,Theta)``.
    """
    terms = rel_energy_terms(pt, ref, eos)
    return sum(terms.values())


def rel_energy_scale(pt: PhasePoint, ref: PhasePoint, eos):
    return sum(np.abs(v) for v in rel_energy_terms(pt, ref, eos).values())


# ---------------------------------------------------------------------------
# reference solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RefFields:
    """Reference quadruple and its spatial derivatives on cell centres."""

    grid: Grid
    t: float
    r: np.ndarray
    Theta: np.ndarray
    U: np.ndarray
    H: np.ndarray
    grad_Theta: np.ndarray  # (3, *shape)
    D_U: np.ndarray  # (3, 3, *shape)
    curl_H: np.ndarray  # (3, *shape)

    @property
    def div_U(self):
        return self.D_U[0, 0] + self.D_U[1, 1] + self.D_U[2, 2]

    @property
    def point(self):
        return PhasePoint(self.r, self.Theta, self.U, self.H)


class ReferenceSolution:
    """Strong-solution proxy evaluated on a grid at given times."""

    def fields(self, t, grid: Grid) -> RefFields:
        raise NotImplementedError

    def check_admissible(self, grid: Grid, boundary: BoundaryData, times=(0.0,), tol=1e-8):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class AnalyticReference(ReferenceSolution):
    r: ScalarField
    Theta: ScalarField
    U: VectorField
    H: VectorField

    def fields(self, t, grid):
        X = grid.centers()
        G = self.U.grad_values(t, X)
        return RefFields(
            grid,
            float(t),
            self.r(t, X),
            self.Theta(t, X),
            self.U(t, X),
            self.H(t, X),
            self.Theta.grad(t, X),
            0.5 * (G + np.swapaxes(G, 0, 1)),
            self.H.curl(t, X),
        )

    def check_admissible(self, grid, boundary, times=(0.0,), tol=1e-8):
        X = grid.centers()
        for t in times:
            if np.any(self.r(t, X) <= 0) or np.any(self.Theta(t, X) <= 0):
                raise ConstraintError("reference density and temperature must be positive")
            if np.max(np.abs(self.H.div(t, X))) > tol:
                raise ConstraintError("reference magnetic field is not solenoidal")
            for a, s in grid.faces():
                Xf = grid.face_points(a, s)
                if np.max(np.abs(self.U(t, Xf))) > tol:
                    raise ConstraintError(f"reference velocity does not vanish on face {(a, s)}")
                if grid.theta_bc[a][s] == "dirichlet":
                    if np.max(np.abs(self.Theta(t, Xf) - boundary.theta_B(t, Xf))) > tol:
                        raise ConstraintError(f"reference temperature differs from theta_B on face {(a, s)}")
                diff = self.H(t, Xf) - boundary.B_B(0.0, Xf)
                bad = np.delete(diff, a, axis=0) if grid.magnetic_bc[a][s] == "tangential" else diff[a]
                if np.max(np.abs(bad)) > tol:
                    raise ConstraintError(f"reference magnetic field violates boundary data on face {(a, s)}")
        return self


def equilibrium_reference(rho, theta, B):
    return AnalyticReference(
        ScalarField.constant(rho, "r"),
        ScalarField.constant(theta, "Theta"),
        VectorField.constant((0.0, 0.0, 0.0), "U"),
        VectorField.constant(B, "H"),
    )


def restrict(f, fine: Grid, coarse: Grid):
    """Cell-average restriction over trailing spatial axes."""
    k = fine.shape[0] // coarse.shape[0]
    if fine.shape != tuple(n * k for n in coarse.shape):
        raise GridMismatch("fine grid is not an integer refinement of the coarse grid")
    lead = f.shape[: f.ndim - fine.dim]
    shape = list(lead)
    for n in coarse.shape:
        shape += [n, k]
    g = f.reshape(shape)
    axes = tuple(len(lead) + 2 * a + 1 for a in range(fine.dim))
    return g.mean(axis=axes)


@dataclass(frozen=True, eq=False)
class DiscreteReference(ReferenceSolution):
    """Fine-grid trajectory restricted to a coarse grid by cell averaging.

    Conservative variables are averaged; derivatives come from centered
    differences on the fine grid and are averaged in the same way.
    """

    trajectory: object
    time_tol: float = 1e-9

    def _snapshot(self, t):
        times = self.trajectory.times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > self.time_tol * max(1.0, abs(t)):
            raise AlignmentError(f"no fine snapshot at t={t} (nearest {times[k]})")
        return self.trajectory.states[k]

    def fields(self, t, grid):
        st = self._snapshot(t)
        tr = self.trajectory
        fine = tr.grid
        theta_f = st.temperature(tr.eos)
        ext = apply_boundary(st, tr.boundary, tr.eos, theta_f)
        cg = cell_gradients(ext, fine)
        rho = restrict(st.rho, fine, grid)
        m = restrict(st.m, fine, grid)
        eps = restrict(st.eps, fine, grid)
        B = restrict(st.B, fine, grid)
        Theta = tr.eos.temperature(rho, eps, guess=restrict(theta_f, fine, grid))
        return RefFields(
            grid,
            float(t),
            rho,
            Theta,
            m / rho,
            B,
            restrict(cg.grad_theta, fine, grid),
            restrict(cg.D, fine, grid),
            restrict(cg.curl_B, fine, grid),
        )

    def check_admissible(self, grid, boundary, times=(0.0,), tol=1e-8):
        if self.trajectory.boundary is not boundary and not _same_boundary(self.trajectory.boundary, boundary):
            raise ConstraintError("fine reference was computed with different boundary data")
        for st in self.trajectory.states:
            if np.any(st.rho <= 0) or np.any(st.eps <= 0):
                raise ConstraintError("fine reference lost positivity")
        return self


def _same_boundary(a: BoundaryData, b: BoundaryData):
    return a.theta_B.expr == b.theta_B.expr and tuple(a.B_B.exprs) == tuple(b.B_B.exprs)


def state_point(state: FluidState, eos) -> PhasePoint:
    return PhasePoint(state.rho, state.temperature(eos), state.u, state.B)


def rel_energy_total(state: FluidState, ref, eos) -> float:
    """Midpoint-rule integral of the relative energy density (Dirac measure)."""
    if isinstance(ref, ReferenceSolution):
        ref = ref.fields(state.t, state.grid)
    state.grid.check_same(ref.grid)
    dens = rel_energy_density(state_point(state, eos), ref.point, eos)
    return float(state.grid.integrate(dens))


# ---------------------------------------------------------------------------
# cut-off and the lower bound
# ---------------------------------------------------------------------------


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


@dataclass(frozen=True)
class CutoffSpec:
    """C^1 product cut-off: 1 on ``[delta, 1/delta]^2``, 0 outside ``[delta/2, 2/delta]^2``."""

    delta: float = 0.05

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise DomainError("cut-off delta must lie in (0, 1)")

    @property
    def ramp_width(self):
        return self.delta / 2.0

    def ramp(self, v):
        d = self.delta
        v = np.asarray(v, float)
        up = _smoothstep((v - d / 2.0) / (d / 2.0))
        down = _smoothstep((2.0 / d - v) / (1.0 / d))
        return np.where(v <= 1.0 / d, up, down)

    def weight(self, rho, theta):
        return self.ramp(rho) * self.ramp(theta)

    def ess(self, h, rho, theta):
        return self.weight(rho, theta) * h

    def res(self, h, rho, theta):
        return (1.0 - self.weight(rho, theta)) * h


def cutoff_weight(spec: CutoffSpec, pt) -> float:
    return spec.weight(pt.rho, pt.theta)


def lower_bound_bracket(pt: PhasePoint, ref: PhasePoint, spec: CutoffSpec, eos):
    """The bracket multiplying ``c(delta)`` in the lower bound of the relative energy."""
    rho, theta = np.asarray(pt.rho, float), np.asarray(pt.theta, float)
    psi = spec.weight(rho, theta)
    ess = (
        (psi * (rho - ref.rho)) ** 2
        + (psi * (theta - ref.theta)) ** 2
        + psi**2 * _sq(np.asarray(pt.u) - np.asarray(ref.u))
        + psi**2 * _sq(np.asarray(pt.B) - np.asarray(ref.B))
    )
    res = (1.0 - psi) * (
        1.0
        + rho
        + np.abs(eos.entropy_density(rho, theta))
        + eos.energy_density(rho, theta)
        + rho * _sq(pt.u)
        + _sq(pt.B)
    )
    return ess + res


@dataclass
class LowerBoundReport:
    c_delta: float
    samples_used: int
    samples_skipped: int
    vacuous: bool
    min_energy: float


def lower_bound_check(states: PhasePoint, refs: PhasePoint, spec: CutoffSpec, eos, floor=1e-14) -> LowerBoundReport:
    """Largest ``c`` with ``E >= c * bracket`` over all (state, reference) samples."""
    d = spec.delta
    r, Th = np.asarray(refs.rho, float), np.asarray(refs.theta, float)
    if np.any(r < d) or np.any(r > 1 / d) or np.any(Th < d) or np.any(Th > 1 / d):
        raise DomainError("reference samples must lie in the essential window [delta, 1/delta]^2")
    E = rel_energy_density(states, refs, eos)
    br = lower_bound_bracket(states, refs, spec, eos)
    use = br > floor
    # pairs with equal state and reference have a vanishing essential bracket
    E, br = np.atleast_1d(E), np.atleast_1d(br)
    use = np.atleast_1d(use)
    if not use.any():
        return LowerBoundReport(math.nan, 0, int(use.size), True, float(E.min()) if E.size else 0.0)
    return LowerBoundReport(float(np.min(E[use] / br[use])), int(use.sum()), int((~use).sum()), False, float(E.min()))


# ---------------------------------------------------------------------------
# relative energy inequality (Dirac case)
# ---------------------------------------------------------------------------

REI_TERMS = ("mu_square", "mu_cross", "eta_square", "eta_cross", "kappa_square", "kappa_cross", "zeta_square", "zeta_cross")


@dataclass
class ReiRow:
    t: float
    H: float
    lhs: float
    rhs: float
    terms: dict
    residual: float

    @property
    def margin(self):
        return self.rhs - self.lhs


@dataclass
class ReiReport:
    rows: list
    c: float

    @property
    def margins(self):
        return np.array([r.margin for r in self.rows])

    @property
    def H(self):
        return np.array([r.H for r in self.rows])

    @property
    def times(self):
        return np.array([r.t for r in self.rows])

    @property
    def worst_margin(self):
        return float(self.margins.min())


def rei_integrands(state: FluidState, ref: RefFields, eos, transport: TransportModel, spec: CutoffSpec, boundary):
    """Spatial integrals of the dissipative terms and of the residual bracket at one time."""
    g = state.grid
    g.check_same(ref.grid)
    theta = state.temperature(eos)
    ext = apply_boundary(state, boundary, eos, theta)
    cg = cell_gradients(ext, g)
    return rei_integrands_from(
        state.rho, theta, state.u, state.B, cg.D, cg.grad_theta, cg.curl_B, ref, eos, transport, spec
    )


def _tl(T):
    """Traceless part of a ``(3, 3, ...)`` tensor field."""
    tr = T[0, 0] + T[1, 1] + T[2, 2]
    return T - tr / 3.0 * np.eye(3).reshape((3, 3) + (1,) * (T.ndim - 2))


def rei_integrands_from(rho, theta, u, B, D_u, D_theta, C_B, ref: RefFields, eos, transport, spec):
    g = ref.grid
    r, Th, U = ref.r, ref.Theta, ref.U
    TDu, TDU = _tl(D_u), _tl(ref.D_U)
    tr_u, divU = D_u[0, 0] + D_u[1, 1] + D_u[2, 2], ref.div_U
    gT, cH = ref.grad_Theta, ref.curl_H
    a, b = np.sqrt(Th / theta), np.sqrt(theta / Th)
    tm = transport
    mu, mu_r = tm.mu(rho, theta), tm.mu(r, Th)
    eta, eta_r = tm.eta(rho, theta), tm.eta(r, Th)
    ka, ka_r = tm.kappa(rho, theta), tm.kappa(r, Th)
    ze, ze_r = tm.zeta(rho, theta), tm.zeta(r, Th)
    terms = {
        "mu_square": mu / 2.0 * np.sum((a * TDu - b * TDU) ** 2, axis=(0, 1)),
        "mu_cross": -0.5 * np.sum(TDU * ((mu - mu_r) * (theta / Th * TDU - TDu)), axis=(0, 1)),
        "eta_square": eta * (a * tr_u - b * divU) ** 2,
        "eta_cross": -divU * (eta - eta_r) * (theta / Th * divU - tr_u),
        "kappa_square": Th * ka * _sq(D_theta / theta - gT / Th)
        + ka_r * np.sum(gT / Th * (theta - Th) * (gT / Th - D_theta / theta), axis=0),
        "kappa_cross": -np.sum(gT * (ka - ka_r) * (gT / Th - D_theta / theta), axis=0),
        "zeta_square": ze * _sq(a * C_B - b * cH),
        "zeta_cross": -np.sum(cH * (ze - ze_r) * (theta / Th * cH - C_B), axis=0),
    }
    p = eos.pressure(rho, theta)
    s = eos.entropy(rho, theta)
    du = np.sqrt(_sq(u - U))
    bracket = theta + np.abs(p) + du + rho * np.abs(s) * np.sqrt(_sq(u)) + np.sqrt(_sq(B)) * du
    residual = spec.res(bracket, rho, theta)
    return {k: float(g.integrate(v)) for k, v in terms.items()}, float(g.integrate(residual))


def _cumtrapz(t, f):
    out = np.zeros_like(f)
    if len(f) > 1:
        out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return out


def rei_sides(trajectory, ref: ReferenceSolution, eos=None, transport=None, spec: CutoffSpec = CutoffSpec(), c=10.0) -> ReiReport:
    """Both sides of the relative energy inequality along a Dirac trajectory.

    ``LHS(tau) = H(tau) + int_0^tau (dissipative terms)`` and
    ``RHS(tau) = H(0) + c int_0^tau H + int_0^tau (residual bracket)``,
    with time integrals by the trapezoid rule over snapshots.
    """
    eos = eos or trajectory.eos
    transport = transport or trajectory.transport
    g = trajectory.grid
    Hs, terms, res, ts = [], [], [], []
    for st in trajectory.states:
        rf = ref.fields(st.t, g)
        if abs(rf.t - st.t) > 1e-9 * max(1.0, abs(st.t)):
            raise AlignmentError("reference and trajectory are not time aligned")
        Hs.append(rel_energy_total(st, rf, eos))
        tm, rr = rei_integrands(st, rf, eos, transport, spec, trajectory.boundary)
        terms.append(tm)
        res.append(rr)
        ts.append(st.t)
    t = np.array(ts)
    H = np.array(Hs)
    diss = np.array([sum(tm.values()) for tm in terms])
    term_int = {k: _cumtrapz(t, np.array([tm[k] for tm in terms])) for k in REI_TERMS}
    lhs = H + _cumtrapz(t, diss)
    rhs = H[0] + c * _cumtrapz(t, H) + _cumtrapz(t, np.array(res))
    rows = [
        ReiRow(float(t[k]), float(H[k]), float(lhs[k]), float(rhs[k]), {n: float(term_int[n][k]) for n in REI_TERMS}, float(res[k]))
        for k in range(len(t))
    ]
    return ReiReport(rows, c)


# ---------------------------------------------------------------------------
# Gronwall envelope
# ---------------------------------------------------------------------------


@dataclass
class GronwallFit:
    c_fit: float
    max_violation: float


def gronwall_fit(H, t=None, iterations=60, slack=1e-9) -> GronwallFit:
    """Smallest ``c >= 0`` with ``H(tau) <= H(0) exp(c tau) (1 + slack)`` (bisection)."""
    H = np.asarray(H, float)
    if H.ndim != 1 or H.size == 0:
        raise DataError("H must be a nonempty 1D series")
    if np.any(H < -1e-12) or not np.all(np.isfinite(H)):
        raise DataError("H series contains negative or non-finite values")
    t = np.arange(H.size, dtype=float) if t is None else np.asarray(t, float)
    if t.shape != H.shape:
        raise DataError("time grid does not match H")
    if H.size > 2:
        dt = np.diff(t)
        if np.max(np.abs(dt - dt.mean())) > 1e-9 * abs(dt.mean()):
            raise DataError("time grid must be uniform")
    H = np.maximum(H, 0.0)
    H0 = H[0]
    if H0 == 0.0:
        if np.all(H == 0.0):
            return GronwallFit(0.0, 0.0)
        return GronwallFit(math.inf, math.inf)
    tau = t - t[0]
    # compare in log space so a tiny H(0) cannot overflow the envelope
    pos = H > 0
    logr = np.log(H[pos]) - math.log(H0)
    tp = tau[pos]
    lslack = math.log1p(slack)

    def ok(c):
        return bool(np.all(logr <= c * tp + lslack))

    if ok(0.0):
        c = 0.0
    else:
        later = tp > 0
        hi = float(np.max(logr[later] / tp[later])) * 2.0 + 1.0
        while not ok(hi):
            hi *= 2.0
        lo = 0.0
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
        c = hi
    viol = float(np.expm1(np.max(logr - c * tp)))
    return GronwallFit(c, viol)


# ---------------------------------------------------------------------------
# Korn-Poincare quotient on node-based fields
# ---------------------------------------------------------------------------


@dataclass
class KPResult:
    ratio: float
    numerator: float
    denominator: float
    identical: bool = False


def node_grid_coords(grid: Grid):
    return tuple(np.meshgrid(*(np.linspace(0.0, L, n + 1) for L, n in zip(grid.lengths, grid.shape)), indexing="ij"))


def _trapezoid_weights(grid: Grid):
    w = np.ones(tuple(n + 1 for n in grid.shape))
    for a in range(grid.dim):
        for idx in (0, -1):
            sl = [slice(None)] * grid.dim
            sl[a] = idx
            w[tuple(sl)] *= 0.5
    return w * grid.cell_volume


def _boundary_mask(grid: Grid):
    m = np.zeros(tuple(n + 1 for n in grid.shape), bool)
    for a in range(grid.dim):
        for idx in (0, -1):
            sl = [slice(None)] * grid.dim
            sl[a] = idx
            m[tuple(sl)] = True
    return m


def node_cell_gradient(w, grid: Grid):
    """Cell-centre gradient of nodal (multi)linear interpolants: ``(3, 3, *cells)``."""
    dim = grid.dim
    G = np.zeros((3, 3) + grid.shape)
    for k in range(dim):
        d = np.diff(w, axis=1 + k) / grid.h[k]
        # average over the other axes' two nodes of each cell
        for a in range(dim):
            if a != k:
                d = 0.5 * (np.take(d, np.arange(0, grid.shape[a]), axis=1 + a) + np.take(d, np.arange(1, grid.shape[a] + 1), axis=1 + a))
        G[:, k] = d
    return G


def korn_poincare_ratio(u, u_ref, grid: Grid, trace_tol=1e-10, floor=1e-14) -> KPResult:
    """``int |u - u_ref|^2 / int |T[D u] - T[D u_ref]|^2`` for nodal fields vanishing on the boundary."""
    u = np.asarray(u, float)
    u_ref = np.asarray(u_ref, float)
    shp = (3,) + tuple(n + 1 for n in grid.shape)
    if u.shape != shp or u_ref.shape != shp:
        raise GridMismatch(f"nodal fields must have shape {shp}")
    mask = _boundary_mask(grid)
    for f, name in ((u, "u"), (u_ref, "u_ref")):
        tr = float(np.max(np.abs(f[:, mask])))
        if tr > trace_tol:
            raise ConstraintError(f"{name} has nonzero boundary trace ({tr:.2e})")
    w = u - u_ref
    num = float(np.sum(_sq(w) * _trapezoid_weights(grid)))
    G = node_cell_gradient(w, grid)
    D = 0.5 * (G + np.swapaxes(G, 0, 1))
    T = _tl(D)
    den = float(grid.integrate(np.sum(T * T, axis=(0, 1))))
    if den <= floor:
        if num <= floor:
            return KPResult(0.0, num, den, identical=True)
        raise DegenerateError(f"Korn-Poincare denominator vanishes with numerator {num:.3e}")
    return KPResult(num / den, num, den)


def random_zero_trace_field(grid: Grid, rng, modes=3):
    """Nodal field: a random combination of low sine modes (zero on the boundary)."""
    X = node_grid_coords(grid)
    out = np.zeros((3,) + X[0].shape)
    for c in range(3):
        for idx in np.ndindex(*(modes,) * grid.dim):
            coef = rng.normal() / (1.0 + sum(idx)) ** 2
            term = np.ones_like(X[0])
            for a, k in enumerate(idx):
                term = term * np.sin((k + 1) * np.pi * X[a] / grid.lengths[a])
            out[c] += coef * term
    return out


__all__ = [
    "AnalyticReference",
    "CutoffSpec",
    "DiscreteReference",
    "GronwallFit",
    "KPResult",
    "LowerBoundReport",
    "PhasePoint",
    "REI_TERMS",
    "RefFields",
    "ReferenceSolution",
    "ReiReport",
    "ReiRow",
    "cutoff_weight",
    "equilibrium_reference",
    "gronwall_fit",
    "korn_poincare_ratio",
    "lower_bound_bracket",
    "lower_bound_check",
    "node_grid_coords",
    "random_zero_trace_field",
    "rel_energy_density",
    "rel_energy_scale",
    "rel_energy_terms",
    "rel_energy_total",
    "restrict",
    "rei_integrands",
    "rei_sides",
]
