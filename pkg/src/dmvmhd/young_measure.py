"""Empirical (atomic) Young measures and residual audits of the weak
formulation: continuity, momentum with defect budget, induction, weak
divergence, entropy and ballistic energy inequalities, compatibility
conditions.

Space integrals use the cell midpoint rule. Derivatives of test functions
are exact cell averages (face differences of the closed-form function), and
time derivatives of test functions are paired with the snapshot
differences, so every audit vanishes identically on constant states.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import sympy as sp

from .constitutive import StateSample, TensorPoint, TransportModel, entropy_production, viscous_stress
from .errors import ConstraintError, GridMismatch, WeightError
from .fields import COORDS, ScalarField, VectorField, exact_float, t_sym
from .grid import BoundaryData, FluidState, Grid, apply_boundary, cell_gradients
from .solver import divergence_corner, divergence_face_average

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-12
TRACE_TOL = 1e-8


# ---------------------------------------------------------------------------
# atoms and measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Atoms:
    """A stack of ``K`` atoms per cell; every array has a leading ``K`` axis.

    Shapes: ``rho, theta (K, *s)``; ``u, B, D_theta, C_B (K, 3, *s)``;
    ``D_u (K, 3, 3, *s)``.
    """

    rho: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    B: np.ndarray
    D_u: np.ndarray
    D_theta: np.ndarray
    C_B: np.ndarray

    def __post_init__(self):
        arrs = {k: np.asarray(getattr(self, k), float) for k in ("rho", "u", "theta", "B", "D_u", "D_theta", "C_B")}
        K = arrs["rho"].shape[0]
        s = arrs["rho"].shape[1:]
        want = {"rho": s, "theta": s, "u": (3,) + s, "B": (3,) + s, "D_theta": (3,) + s, "C_B": (3,) + s, "D_u": (3, 3) + s}
        for k, a in arrs.items():
            if a.shape != (K,) + want[k]:
                raise GridMismatch(f"atom slot {k} has shape {a.shape}, expected {(K,) + want[k]}")
            if not np.all(np.isfinite(a)):
                raise ConstraintError(f"atom slot {k} is not finite")
            object.__setattr__(self, k, a)
        if np.any(arrs["rho"] < 0) or np.any(arrs["theta"] < 0):
            raise ConstraintError("atoms need rho >= 0 and theta >= 0")
        D = arrs["D_u"]
        if np.max(np.abs(D - np.swapaxes(D, 1, 2)), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(D), initial=0.0)):
            raise ConstraintError("atom D_u slot is not symmetric")

    @property
    def K(self):
        return self.rho.shape[0]

    @property
    def m(self):
        return self.rho[:, None] * self.u

    def sample(self):
        return StateSample(self.rho, self.theta)

    @classmethod
    def stack(cls, atoms):
        return cls(*(np.concatenate([getattr(a, k) for a in atoms]) for k in ("rho", "u", "theta", "B", "D_u", "D_theta", "C_B")))


def atoms_from_state(state: FluidState, boundary: BoundaryData, eos) -> Atoms:
    """Single atom per cell from the state and its discrete gradients."""
    theta = state.temperature(eos)
    cg = cell_gradients(apply_boundary(state, boundary, eos, theta), state.grid)
    return Atoms(
        state.rho[None], state.u[None], theta[None], state.B[None], cg.D[None], cg.grad_theta[None], cg.curl_B[None]
    )


@dataclass(frozen=True, eq=False)
class EmpiricalYoungMeasure:
    """Time-indexed atomic measure on a grid.

    ``weights`` has shape ``(K,)`` (same mixture in every cell) or
    ``(K, *grid.shape)``.
    """

    grid: Grid
    times: np.ndarray
    atoms: tuple
    weights: np.ndarray
    boundary: BoundaryData
    eos: object
    transport: TransportModel
    dt: float = 0.0
    divergence: str = "projection"

    def __post_init__(self):
        times = np.asarray(self.times, float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if len(self.atoms) != times.size:
            raise GridMismatch("one atom stack per snapshot time is required")
        K = self.atoms[0].K
        for a in self.atoms:
            if a.rho.shape != (K,) + self.grid.shape:
                raise GridMismatch("atoms do not match the grid")
        w = np.asarray(self.weights, float)
        if w.shape == (K,):
            w = w.reshape((K,) + (1,) * self.grid.dim)
        if w.shape not in ((K,) + (1,) * self.grid.dim, (K,) + self.grid.shape):
            raise WeightError(f"weights of shape {w.shape} do not fit {K} atoms")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise WeightError("weights must be nonnegative")
        if np.max(np.abs(w.sum(axis=0) - 1.0)) > WEIGHT_TOL:
            raise WeightError("weights must sum to 1 in every cell")
        object.__setattr__(self, "weights", w)

    @property
    def K(self):
        return self.atoms[0].K

    @property
    def dt_snap(self):
        return float(np.max(np.diff(self.times))) if self.times.size > 1 else 0.0

    def expectation(self, observable, k):
        return expectation(self, observable, k)


def from_ensemble(trajectories, weights=None, boundary=None, eos=None, transport=None) -> EmpiricalYoungMeasure:
    """Empirical measure of time-aligned trajectories on one grid."""
    if not trajectories:
        raise GridMismatch("at least one trajectory is required")
    tr0 = trajectories[0]
    for tr in trajectories[1:]:
        if not tr.grid.same_as(tr0.grid):
            raise GridMismatch("ensemble members live on different grids")
        if tr.times.shape != tr0.times.shape or np.any(tr.times != tr0.times):
            raise GridMismatch("ensemble members have different snapshot times")
    K = len(trajectories)
    w = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, float)
    boundary = boundary or tr0.boundary
    eos = eos or tr0.eos
    transport = transport or tr0.transport
    atoms = [
        Atoms.stack([atoms_from_state(tr.states[k], boundary, eos) for tr in trajectories]) for k in range(len(tr0.states))
    ]
    return EmpiricalYoungMeasure(
        tr0.grid, tr0.times, atoms, w, boundary, eos, transport, tr0.dt, tr0.config.div_control
    )


def expectation(eym: EmpiricalYoungMeasure, observable, k):
    """``<V_{t_k, x}; f>`` per cell; ``observable`` maps an ``Atoms`` stack to ``(K, ..., *s)``."""
    f = np.asarray(observable(eym.atoms[k]), float)
    w = eym.weights
    extra = f.ndim - w.ndim
    w = w.reshape(w.shape[:1] + (1,) * extra + w.shape[1:])
    return np.sum(w * f, axis=0)


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TensorField:
    """Symmetric tensor test field from a 3x3 sympy matrix."""

    exprs: tuple
    name: str = ""

    def rows(self):
        return tuple(VectorField(tuple(self.exprs[i]), f"{self.name}[{i}]") for i in range(3))


def _bubble(grid: Grid, power=1):
    b = sp.Integer(1)
    for a in range(grid.dim):
        L = exact_float(grid.lengths[a])
        b = b * (4 * COORDS[a] * (L - COORDS[a]) / L**2) ** power
    return b


def _poly(grid: Grid, rng, degree=2):
    q = sp.Integer(1)
    for a in range(grid.dim):
        k = int(rng.integers(0, degree + 1))
        c = exact_float(round(float(rng.uniform(-0.5, 0.5)), 3))
        q = q * (1 + c * (COORDS[a] / exact_float(grid.lengths[a])) ** k)
    return q


def _time_factor(rng):
    return sp.exp(exact_float(round(float(rng.uniform(-1.0, 1.0)), 3)) * t_sym)


def _curl_expr(A):
    x, y, z = COORDS
    a, b, c = A
    return (sp.diff(c, y) - sp.diff(b, z), sp.diff(a, z) - sp.diff(c, x), sp.diff(b, x) - sp.diff(a, y))


@dataclass(frozen=True, eq=False)
class TestFunctionDictionary:
    """Finite families of test functions for each identity.

    Members are built to satisfy their constraints in closed form; ``verify``
    checks them numerically (traces, divergence, sign).
    """

    continuity: tuple = ()
    momentum: tuple = ()
    induction: tuple = ()
    div_b: tuple = ()
    entropy: tuple = ()
    ballistic: tuple = ()
    cc_s: tuple = ()
    cc_t: tuple = ()
    cc_b: tuple = ()
    grid: Grid | None = None

    __test__ = False  # not a pytest class

    def verify(self, grid: Grid, boundary: BoundaryData, t_samples=(0.0, 0.5, 1.0), tol=TRACE_TOL):
        for t in t_samples:
            for i, phi in enumerate(self.momentum):
                _check_trace(grid, phi, t, "all", tol, f"momentum[{i}]")
            for i, phi in enumerate(self.induction):
                _check_div(grid, phi, t, tol, f"induction[{i}]")
                _check_magnetic_trace(grid, phi, t, None, tol, f"induction[{i}]")
            for i, phi in enumerate(self.entropy):
                X = _sample_points(grid)
                if np.min(phi(t, X)) < -1e-14:
                    raise ConstraintError(f"entropy[{i}] takes negative values")
                for a, s in grid.faces():
                    if grid.theta_bc[a][s] == "dirichlet" and np.max(np.abs(phi(t, grid.face_points(a, s)))) > tol:
                        raise ConstraintError(f"entropy[{i}] does not vanish on Gamma_D^theta face {(a, s)}")
            for i, (th, Bt) in enumerate(self.ballistic):
                _check_pair(grid, boundary, th, Bt, t, tol, f"ballistic[{i}]")
            for i, (psi, th) in enumerate(self.cc_t):
                for a, s in grid.faces():
                    if grid.theta_bc[a][s] == "neumann" and np.max(np.abs(psi(t, grid.face_points(a, s))[a])) > tol:
                        raise ConstraintError(f"cc_t[{i}] psi.n does not vanish on Gamma_N^theta face {(a, s)}")
                _check_pair(grid, boundary, th, None, t, tol, f"cc_t[{i}]")
            for i, (Bt, G) in enumerate(self.cc_b):
                _check_pair(grid, boundary, None, Bt, t, tol, f"cc_b[{i}]", full=False)
                for a, s in grid.faces():
                    if grid.magnetic_bc[a][s] == "normal":
                        g = G(t, grid.face_points(a, s))
                        cross = np.delete(g, a, axis=0)
                        if np.max(np.abs(cross)) > tol and np.max(np.abs(g)) > tol:
                            raise ConstraintError(f"cc_b[{i}] G violates its trace condition on face {(a, s)}")
            for i, chi in enumerate(self.div_b):
                _check_trace(grid, chi, t, "all", tol, f"div_b[{i}]")
        return self

    def counts(self):
        return {k: len(getattr(self, k)) for k in ("continuity", "momentum", "induction", "div_b", "entropy", "ballistic", "cc_s", "cc_t", "cc_b")}


def _sample_points(grid: Grid, n=9):
    axes = [np.linspace(0.0, L, n) for L in grid.lengths]
    return tuple(np.meshgrid(*axes, indexing="ij"))


def _check_trace(grid, f, t, which, tol, name):
    for a, s in grid.faces():
        v = f(t, grid.face_points(a, s))
        if np.max(np.abs(v)) > tol:
            raise ConstraintError(f"{name} does not vanish on face {(a, s)}")


def _check_div(grid, phi, t, tol, name):
    d = phi.div(t, _sample_points(grid))
    if np.max(np.abs(d)) > tol:
        raise ConstraintError(f"{name} is not divergence free ({np.max(np.abs(d)):.2e})")


def _check_magnetic_trace(grid, phi, t, data: VectorField | None, tol, name):
    for a, s in grid.faces():
        X = grid.face_points(a, s)
        v = phi(t, X)
        if data is not None:
            v = v - data(0.0, X)
        bad = np.delete(v, a, axis=0) if grid.magnetic_bc[a][s] == "tangential" else v[a]
        if np.max(np.abs(bad)) > tol:
            raise ConstraintError(f"{name} violates the magnetic trace condition on face {(a, s)}")


def _check_pair(grid, boundary, th, Bt, t, tol, name, full=True):
    """Admissibility of ``(theta_tilde, B_tilde)``; ``full=False`` checks only ``B x n = b_tau``."""
    if th is not None:
        if np.min(th(t, _sample_points(grid))) <= 0:
            raise ConstraintError(f"{name} theta_tilde must be positive")
        for a, s in grid.faces():
            if grid.theta_bc[a][s] == "dirichlet":
                X = grid.face_points(a, s)
                if np.max(np.abs(th(t, X) - boundary.theta_B(t, X))) > tol:
                    raise ConstraintError(f"{name} theta_tilde differs from theta_B on face {(a, s)}")
    if Bt is None:
        return
    if full:
        _check_div(grid, Bt, t, tol, name)
    for a, s in grid.faces():
        tangential = grid.magnetic_bc[a][s] == "tangential"
        if not (tangential or full):
            continue
        X = grid.face_points(a, s)
        v = Bt(t, X) - boundary.B_B(0.0, X)
        bad = np.delete(v, a, axis=0) if tangential else v[a]
        if np.max(np.abs(bad)) > tol:
            raise ConstraintError(f"{name} B_tilde violates the magnetic boundary data on face {(a, s)}")


def build_dictionary(grid: Grid, boundary: BoundaryData, n=20, seed=0, amplitude=0.1) -> TestFunctionDictionary:
    """Certified dictionary: polynomials times boundary bubbles times ``exp(alpha t)``."""
    rng = np.random.default_rng(seed)
    b1, b2 = _bubble(grid, 1), _bubble(grid, 2)
    dim = grid.dim

    def scalar(expr, name):
        return ScalarField(sp.expand(expr), name)

    continuity, momentum, induction, div_b, entropy = [], [], [], [], []
    ballistic, cc_s, cc_t, cc_b = [], [], [], []
    th_B, B_B = boundary.theta_B, boundary.B_B
    ballistic.append((th_B, B_B))
    for i in range(n):
        tf = _time_factor(rng)
        continuity.append(scalar(_poly(grid, rng) * tf, f"continuity[{i}]"))
        c = i % 3
        comps = [sp.Integer(0)] * 3
        comps[c] = b1 * _poly(grid, rng) * tf
        momentum.append(VectorField(tuple(comps), f"momentum[{i}]"))
        A = [sp.Integer(0)] * 3
        # potentials along invariant axes give nonzero curls in any dimension
        A[(i + 2) % 3 if dim < 3 else c] = b2 * _poly(grid, rng) * tf
        curlA = tuple(sp.expand(e) for e in _curl_expr(A))
        if all(e == 0 for e in curlA):
            A = [sp.Integer(0), sp.Integer(0), b2 * _poly(grid, rng) * tf]
            curlA = tuple(sp.expand(e) for e in _curl_expr(A))
        induction.append(VectorField(curlA, f"induction[{i}]"))
        div_b.append(scalar(b2 * _poly(grid, rng) * tf, f"div_b[{i}]"))
        entropy.append(ScalarField(b2 * _poly(grid, rng) ** 2 * tf, f"entropy[{i}]"))
        # ballistic pairs perturb the boundary extensions by boundary-vanishing fields
        th_min = float(np.min(th_B(0.0, _sample_points(grid))))
        eps_th = exact_float(round(amplitude * th_min, 6))
        th_t = ScalarField(th_B.expr + eps_th * b1 * _poly(grid, rng) * tf, f"theta_tilde[{i}]")
        A2 = [sp.Integer(0)] * 3
        A2[(i + 1) % 3] = exact_float(amplitude) * b2 * _poly(grid, rng) * tf
        Bt = VectorField(tuple(sp.expand(e0 + e1) for e0, e1 in zip(B_B.exprs, _curl_expr(A2))), f"B_tilde[{i}]")
        if i < n - 1:
            ballistic.append((th_t, Bt))
        Z = [[sp.Integer(0)] * 3 for _ in range(3)]
        for p in range(3):
            for q in range(p, 3):
                Z[p][q] = Z[q][p] = _poly(grid, rng) * exact_float(round(float(rng.uniform(-1, 1)), 3)) * tf
        cc_s.append(TensorField(tuple(tuple(r) for r in Z), f"cc_s[{i}]"))
        psi = []
        for a in range(3):
            f = _poly(grid, rng) * tf
            if a < dim and "neumann" in grid.theta_bc[a]:
                L = exact_float(grid.lengths[a])
                f = f * 4 * COORDS[a] * (L - COORDS[a]) / L**2
            psi.append(sp.expand(f))
        cc_t.append((VectorField(tuple(psi), f"cc_t_psi[{i}]"), th_t))
        G = [sp.Integer(0)] * 3
        G[c] = b1 * _poly(grid, rng) * tf
        cc_b.append((Bt, VectorField(tuple(G), f"cc_b_G[{i}]")))
    d = TestFunctionDictionary(
        tuple(continuity),
        tuple(momentum),
        tuple(induction),
        tuple(div_b),
        tuple(entropy),
        tuple(ballistic),
        tuple(cc_s),
        tuple(cc_t),
        tuple(cc_b),
        grid,
    )
    return d.verify(grid, boundary)


# ---------------------------------------------------------------------------
# evaluation of test functions on a grid over time
# ---------------------------------------------------------------------------


class _Evaluator:
    def __init__(self, grid: Grid, times):
        self.grid = grid
        self.times = np.asarray(times, float)
        self.X = grid.centers()
        self.faces = []
        for k in range(grid.dim):
            axes = []
            for a in range(grid.dim):
                if a == k:
                    axes.append(np.linspace(0.0, grid.lengths[a], grid.shape[a] + 1))
                else:
                    axes.append(grid.axis_centers(a))
            self.faces.append(tuple(np.meshgrid(*axes, indexing="ij")))

    def scalar(self, f):
        return f.at_times(self.times, self.X)

    def vector(self, f):
        return f.at_times(self.times, self.X)

    def grad(self, f):
        """Cell-average gradient ``(T, [3,] 3, *s)`` from face values."""
        g = self.grid
        T = self.times.size
        lead = (T,) if isinstance(f, ScalarField) else (T, 3)
        parts = []
        for k in range(3):
            if k < g.dim:
                v = f.at_times(self.times, self.faces[k])
                parts.append(np.diff(v, axis=len(lead) + k) / g.h[k])
            else:
                parts.append(np.zeros(lead + g.shape))
        return np.stack(parts, axis=len(lead))

    def div(self, f):
        G = self.grad(f)
        return G[:, 0, 0] + G[:, 1, 1] + G[:, 2, 2]

    def curl(self, f):
        G = self.grad(f)
        return np.stack([G[:, 2, 1] - G[:, 1, 2], G[:, 0, 2] - G[:, 2, 0], G[:, 1, 0] - G[:, 0, 1]], axis=1)

    def tensor(self, Z: TensorField):
        return np.stack([self.vector(r) for r in Z.rows()], axis=1)

    def tensor_div(self, Z: TensorField):
        return np.stack([self.div(r) for r in Z.rows()], axis=1)


# ---------------------------------------------------------------------------
# audit results
# ---------------------------------------------------------------------------


@dataclass
class AuditResult:
    """Residual (or signed margin) history of one identity for one test function."""

    identity: str
    test_id: str
    times: np.ndarray
    values: np.ndarray
    scale: np.ndarray
    tol: np.ndarray
    kind: str = "equality"  # or "inequality"
    extra: dict = field(default_factory=dict)

    @property
    def worst(self):
        if self.kind == "equality":
            return float(np.max(np.abs(self.values)))
        return float(np.min(self.values))

    @property
    def ratio(self):
        """Worst value relative to the pointwise tolerance (pass iff ``ratio <= 1``)."""
        allowed = self.tol + (self.extra.get("budget", 0.0) if self.kind == "equality" else 0.0)
        v = np.abs(self.values) if self.kind == "equality" else -np.asarray(self.values)
        return float(np.max(v / allowed))

    @property
    def passed(self):
        if self.kind == "equality":
            return bool(np.all(np.abs(self.values) <= self.tol + self.extra.get("budget", 0.0)))
        return bool(np.all(self.values >= -self.tol))

    def to_dict(self):
        return {
            "identity": self.identity,
            "test": self.test_id,
            "kind": self.kind,
            "worst": self.worst,
            "tol": float(np.max(self.tol)) if np.size(self.tol) else 0.0,
            "passed": self.passed,
        }


def _cumtrapz(t, f):
    f = np.asarray(f, float)
    out = np.zeros_like(f)
    if len(f) > 1:
        out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return out


def _space(grid, f):
    """Signed and absolute space integrals of ``f`` (component axes summed)."""
    if f.ndim > grid.dim:
        lead = tuple(range(f.ndim - grid.dim))
        return float(grid.integrate(np.sum(f, axis=lead))), float(grid.integrate(np.sum(np.abs(f), axis=lead)))
    return float(grid.integrate(f)), float(grid.integrate(np.abs(f)))


class _Int(NamedTuple):
    """Per-snapshot integrals of ``f`` (``val``) and of ``|f|`` (``abs``)."""

    val: np.ndarray
    abs: np.ndarray

    def __neg__(self):
        return _Int(-self.val, self.abs)


def _integrate_each(grid, fields) -> _Int:
    pairs = [_space(grid, f) for f in fields]
    return _Int(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))


def _cum_pair(A, phi, grid):
    """``sum_k int 1/2 (A_k + A_{k+1}) . (phi_{k+1} - phi_k)`` cumulated over snapshots."""
    inc, inc_abs = [0.0], [0.0]
    for k in range(len(A) - 1):
        v, va = _space(grid, 0.5 * (A[k] + A[k + 1]) * (phi[k + 1] - phi[k]))
        inc.append(v)
        inc_abs.append(va)
    return np.cumsum(inc), np.cumsum(inc_abs)


ABS_FLOOR = 1e-12


def _tolerance(eym, scale, C_audit):
    return C_audit * (eym.grid.h_min + eym.dt_snap) * scale + ABS_FLOOR


def _balance(eym, test_id, identity, Q, pairs, terms, C_audit, kind="equality", extra=None):
    """``R(tau) = [Q]_0^tau - sum (paired time terms) - sum int_0^tau terms``."""
    t = eym.times
    Q = Q.val
    R = Q - Q[0]
    scale = np.abs(R)
    for cum, cum_abs in pairs:
        R = R - cum
        scale = scale + cum_abs
    for arr in terms.values():
        R = R - _cumtrapz(t, arr.val)
        scale = scale + _cumtrapz(t, arr.abs)
    return AuditResult(identity, test_id, t, R, scale, _tolerance(eym, scale, C_audit), kind, extra or {})


def _exp(eym, f):
    return np.stack([expectation(eym, f, k) for k in range(len(eym.times))])


class _Cache:
    """Expectations of standard observables, computed once per measure."""

    def __init__(self, eym: EmpiricalYoungMeasure):
        self.eym = eym
        self._d = {}

    def get(self, name):
        if name not in self._d:
            self._d[name] = _exp(self.eym, _OBSERVABLES[name](self.eym))
        return self._d[name]


def _comp_last(a, n):
    """Move the ``n`` component axes after the leading atom axis to the end."""
    return np.moveaxis(a, tuple(range(1, n + 1)), tuple(range(-n, 0)))


def _sigma(eym):
    tm = eym.transport

    def f(A):
        tp = TensorPoint(_comp_last(A.D_u, 2), _comp_last(A.D_theta, 1), _comp_last(A.C_B, 1))
        return entropy_production(tm, A.sample(), tp)

    return f


def _stress(eym):
    tm = eym.transport
    return lambda A: np.moveaxis(viscous_stress(tm, A.sample(), _comp_last(A.D_u, 2)), (-2, -1), (1, 2))


def _rho_s(eym):
    return lambda A: eym.eos.entropy_density(A.rho, A.theta)


def _s_flux(eym):
    tm = eym.transport

    def f(A):
        return eym.eos.entropy_density(A.rho, A.theta)[:, None] * A.u - (tm.kappa(A.rho, A.theta) / A.theta)[:, None] * A.D_theta

    return f


def _electric(eym):
    tm = eym.transport
    return lambda A: np.cross(A.B, A.u, axis=1) + tm.zeta(A.rho, A.theta)[:, None] * A.C_B


_OBSERVABLES = {
    "rho": lambda e: (lambda A: A.rho),
    "m": lambda e: (lambda A: A.m),
    "u": lambda e: (lambda A: A.u),
    "theta": lambda e: (lambda A: A.theta),
    "B": lambda e: (lambda A: A.B),
    "D_u": lambda e: (lambda A: A.D_u),
    "D_theta": lambda e: (lambda A: A.D_theta),
    "C_B": lambda e: (lambda A: A.C_B),
    "conv": lambda e: (lambda A: A.rho[:, None, None] * A.u[:, :, None] * A.u[:, None, :] - A.B[:, :, None] * A.B[:, None, :]),
    "ptot": lambda e: (lambda A: e.eos.pressure(A.rho, A.theta) + 0.5 * np.sum(A.B**2, axis=1)),
    "S": _stress,
    "sigma": _sigma,
    "rho_s": _rho_s,
    "s_flux": _s_flux,
    "E": _electric,
    "energy": lambda e: (
        lambda A: 0.5 * A.rho * np.sum(A.u**2, axis=1) + e.eos.energy_density(A.rho, A.theta) + 0.5 * np.sum(A.B**2, axis=1)
    ),
}


def _cache(eym, cache):
    return cache if cache is not None else _Cache(eym)


# ---------------------------------------------------------------------------
# weak identities
# ---------------------------------------------------------------------------


def weak_residual_continuity(eym, phi: ScalarField, C_audit=10.0, cache=None) -> AuditResult:
    c = _cache(eym, cache)
    ev = _Evaluator(eym.grid, eym.times)
    g = eym.grid
    rho, m = c.get("rho"), c.get("m")
    ph = ev.scalar(phi)
    Q = _integrate_each(g, rho * ph)
    terms = {"flux": _integrate_each(g, m * ev.grad(phi))}
    return _balance(eym, phi.name, "continuity", Q, [_cum_pair(rho, ph, g)], terms, C_audit)


def weak_residual_momentum(eym, phi: VectorField, defect=None, C_cd=1.0, C_audit=10.0, cache=None) -> AuditResult:
    """Momentum identity; ``defect`` is the measured dissipation defect per snapshot.

    The concentration defect integrals are replaced by the budget
    ``C_cd |grad phi|_inf int_0^tau defect``.
    """
    g = eym.grid
    for a, s in g.faces():
        for t in (eym.times[0], eym.times[-1]):
            if np.max(np.abs(phi(t, g.face_points(a, s)))) > TRACE_TOL:
                raise ConstraintError(f"{phi.name} does not vanish on the no-slip boundary face {(a, s)}")
    c = _cache(eym, cache)
    ev = _Evaluator(g, eym.times)
    m = c.get("m")
    ph = ev.vector(phi)
    G = ev.grad(phi)
    div = G[:, 0, 0] + G[:, 1, 1] + G[:, 2, 2]
    Q = _integrate_each(g, m * ph)
    terms = {
        "viscous": -_integrate_each(g, c.get("S") * G),
        "convective": _integrate_each(g, c.get("conv") * G),
        "pressure": _integrate_each(g, c.get("ptot") * div),
    }
    res = _balance(eym, phi.name, "momentum", Q, [_cum_pair(m, ph, g)], terms, C_audit)
    if defect is None:
        defect = np.zeros_like(eym.times)
    grad_inf = float(np.max(np.abs(G)))
    budget = C_cd * grad_inf * _cumtrapz(eym.times, np.asarray(defect, float))
    res.extra = {"budget": budget, "defect_integral": _cumtrapz(eym.times, np.asarray(defect, float)), "C_cd": C_cd, "grad_inf": grad_inf}
    return res


def weak_residual_induction(eym, phi: VectorField, C_audit=10.0, cache=None) -> AuditResult:
    g = eym.grid
    _check_div(g, phi, eym.times[0], TRACE_TOL, phi.name)
    _check_magnetic_trace(g, phi, eym.times[0], None, TRACE_TOL, phi.name)
    c = _cache(eym, cache)
    ev = _Evaluator(g, eym.times)
    B = c.get("B")
    ph = ev.vector(phi)
    Q = _integrate_each(g, B * ph)
    terms = {"electric": -_integrate_each(g, c.get("E") * ev.curl(phi))}
    return _balance(eym, phi.name, "induction", Q, [_cum_pair(B, ph, g)], terms, C_audit)


def weak_divB(eym, chi: ScalarField, C_audit=10.0, cache=None) -> AuditResult:
    """``int_0^tau int <B> . grad_h chi`` with the discrete gradient dual to the active divergence."""
    g = eym.grid
    _check_trace(g, chi, eym.times[0], "all", TRACE_TOL, chi.name)
    c = _cache(eym, cache)
    B = c.get("B")
    ev = _Evaluator(g, eym.times)
    scale = _integrate_each(g, B * ev.grad(chi)).abs
    vals = []
    for k, t in enumerate(eym.times):
        if eym.divergence == "ct" and g.dim == 2:
            d = divergence_corner(B[k], g)
            xs = np.arange(1, g.shape[0]) * g.h[0]
            ys = np.arange(1, g.shape[1]) * g.h[1]
            chi_c = chi(t, tuple(np.meshgrid(xs, ys, indexing="ij")))
            vals.append(-float(np.sum(chi_c * d) * g.cell_volume))
        else:
            d = divergence_face_average(B[k], g, eym.boundary)
            vals.append(-float(g.integrate(chi(t, g.centers()) * d)))
    R = _cumtrapz(eym.times, np.array(vals))
    sc = _cumtrapz(eym.times, scale)
    return AuditResult("div_b", chi.name, eym.times, R, sc, _tolerance(eym, sc, C_audit))


# ---------------------------------------------------------------------------
# inequalities
# ---------------------------------------------------------------------------


def entropy_inequality_audit(eym, phi: ScalarField, C_audit=10.0, cache=None) -> AuditResult:
    """Signed margin ``LHS - RHS`` of the entropy inequality (PASS when ``>= -tol``)."""
    g = eym.grid
    ev = _Evaluator(g, eym.times)
    ph = ev.scalar(phi)
    if np.min(ph) < -1e-14:
        raise ConstraintError(f"{phi.name} takes negative values")
    for a, s in g.faces():
        if g.theta_bc[a][s] == "dirichlet" and np.max(np.abs(phi(eym.times[0], g.face_points(a, s)))) > TRACE_TOL:
            raise ConstraintError(f"{phi.name} does not vanish on Gamma_D^theta face {(a, s)}")
    c = _cache(eym, cache)
    rs, flux, sigma = c.get("rho_s"), c.get("s_flux"), c.get("sigma")
    grad = ev.grad(phi)
    terms = {"production": _integrate_each(g, sigma * ph), "flux": _integrate_each(g, flux * grad)}
    res = _balance(eym, phi.name, "entropy", _integrate_each(g, rs * ph), [_cum_pair(rs, ph, g)], terms, C_audit, kind="inequality")
    # entropy is fixed up to a constant; measure term sizes modulo that constant
    rho, m = c.get("rho"), c.get("m")
    s_ref = float(g.integrate(rs[0]) / g.integrate(rho[0]))
    rs0, flux0 = rs - s_ref * rho, flux - s_ref * m
    terms0 = {"production": terms["production"], "flux": _integrate_each(g, flux0 * grad)}
    ref = _balance(eym, phi.name, "entropy", _integrate_each(g, rs0 * ph), [_cum_pair(rs0, ph, g)], terms0, C_audit)
    res.scale, res.tol = ref.scale, ref.tol
    res.extra = {"production": _cumtrapz(eym.times, terms["production"].val)}
    return res


def ballistic_inequality_audit(eym, theta_tilde: ScalarField, B_tilde: VectorField, C_audit=10.0, cache=None, name=None) -> AuditResult:
    """Both sides of the ballistic energy inequality.

    ``values`` holds ``RHS - LHS`` without defects; the measured dissipation
    defect is its nonnegative part (``extra["defect"]``).
    """
    g = eym.grid
    _check_pair(g, eym.boundary, theta_tilde, B_tilde, eym.times[0], TRACE_TOL, name or "ballistic pair")
    c = _cache(eym, cache)
    ev = _Evaluator(g, eym.times)
    th = ev.scalar(theta_tilde)
    Bt = ev.vector(B_tilde)
    rs, B = c.get("rho_s"), c.get("B")
    Eb = _integrate_each(g, c.get("energy") - th * rs - np.sum(Bt * B, axis=1)).val
    t = eym.times
    diss = _integrate_each(g, c.get("sigma") * th)
    cs, cs_abs = _cum_pair(rs, th, g)
    cb, cb_abs = _cum_pair(B, Bt, g)
    flux = _integrate_each(g, c.get("s_flux") * ev.grad(theta_tilde))
    elec = _integrate_each(g, c.get("E") * ev.curl(B_tilde))
    lhs = (Eb - Eb[0]) + _cumtrapz(t, diss.val)
    rhs = -cs - _cumtrapz(t, flux.val) - cb + _cumtrapz(t, elec.val)
    margin = rhs - lhs
    scale = np.abs(Eb - Eb[0]) + cs_abs + cb_abs + sum(_cumtrapz(t, v.abs) for v in (diss, flux, elec))
    defect = np.maximum(0.0, margin)
    return AuditResult(
        "ballistic",
        name or f"({theta_tilde.name}, {B_tilde.name})",
        t,
        margin,
        scale,
        _tolerance(eym, scale, C_audit),
        "inequality",
        {"defect": defect, "lhs": lhs, "rhs": rhs},
    )


# ---------------------------------------------------------------------------
# compatibility conditions
# ---------------------------------------------------------------------------


def _full_time(eym, name, integrands, C_audit, test_id):
    t = eym.times
    total = sum(_cumtrapz(t, v.val) for v in integrands)
    scale = sum(_cumtrapz(t, v.abs) for v in integrands)
    return AuditResult(name, test_id, t, total, scale, _tolerance(eym, scale, C_audit))


def cc_s_residual(eym, Z: TensorField, C_audit=10.0, cache=None):
    c = _cache(eym, cache)
    ev = _Evaluator(eym.grid, eym.times)
    g = eym.grid
    a = -_integrate_each(g, c.get("u") * ev.tensor_div(Z))
    b = -_integrate_each(g, c.get("D_u") * ev.tensor(Z))
    return _full_time(eym, "cc_S", [a, b], C_audit, Z.name)


def cc_t_residual(eym, psi: VectorField, theta_tilde: ScalarField, C_audit=10.0, cache=None):
    c = _cache(eym, cache)
    ev = _Evaluator(eym.grid, eym.times)
    g = eym.grid
    a = -_integrate_each(g, (c.get("theta") - ev.scalar(theta_tilde)) * ev.div(psi))
    G = ev.grad(theta_tilde)
    b = -_integrate_each(g, (c.get("D_theta") - G) * ev.vector(psi))
    return _full_time(eym, "cc_t", [a, b], C_audit, psi.name)


def cc_b_residual(eym, B_tilde: VectorField, G: VectorField, C_audit=10.0, cache=None):
    c = _cache(eym, cache)
    ev = _Evaluator(eym.grid, eym.times)
    g = eym.grid
    a = _integrate_each(g, (c.get("B") - ev.vector(B_tilde)) * ev.curl(G))
    b = -_integrate_each(g, ev.vector(G) * (c.get("C_B") - ev.curl(B_tilde)))
    return _full_time(eym, "cc_B", [a, b], C_audit, G.name)


def compatibility_audit(eym, dictionary: TestFunctionDictionary, C_audit=10.0, cache=None):
    c = _cache(eym, cache)
    return {
        "cc_S": [cc_s_residual(eym, Z, C_audit, c) for Z in dictionary.cc_s],
        "cc_t": [cc_t_residual(eym, psi, th, C_audit, c) for psi, th in dictionary.cc_t],
        "cc_B": [cc_b_residual(eym, Bt, G, C_audit, c) for Bt, G in dictionary.cc_b],
    }


# ---------------------------------------------------------------------------
# full audit
# ---------------------------------------------------------------------------


@dataclass
class AuditReport:
    results: dict
    defect: np.ndarray
    times: np.ndarray
    C_cd: float
    C_audit: float

    def summary(self):
        out = {}
        for name, rs in self.results.items():
            if not rs:
                continue
            kind = rs[0].kind
            worst = max(rs, key=lambda r: r.ratio)
            out[name] = {
                "worst": worst.worst,
                "test": worst.test_id,
                "tol": float(np.max(worst.tol)),
                "ratio": worst.ratio,
                "passed": all(r.passed for r in rs),
                "kind": kind,
            }
        return out

    @property
    def passed(self):
        return all(v["passed"] for v in self.summary().values())

    @property
    def budget_consistent(self):
        """The momentum budgets equal ``C_cd |grad phi| int defect`` and defects are nonnegative."""
        if np.any(self.defect < 0):
            return False
        ref = _cumtrapz(self.times, self.defect)
        for r in self.results.get("momentum", []):
            if not np.allclose(r.extra["budget"], self.C_cd * r.extra["grad_inf"] * ref, rtol=1e-12, atol=0.0):
                return False
        return True

    def to_dict(self):
        return {
            "identities": self.summary(),
            "defect_max": float(np.max(self.defect)) if self.defect.size else 0.0,
            "defect_min": float(np.min(self.defect)) if self.defect.size else 0.0,
            "budget_consistent": self.budget_consistent,
            "C_audit": self.C_audit,
            "C_cd": self.C_cd,
            "passed": self.passed,
        }


def run_audits(eym, dictionary: TestFunctionDictionary, C_audit=10.0, C_cd=1.0, threads=1) -> AuditReport:
    """Every identity against every dictionary member.

    Test functions are audited independently (optionally in a thread pool);
    results keep dictionary order, so the report does not depend on the
    thread count.
    """
    cache = _Cache(eym)
    for name in _OBSERVABLES:
        cache.get(name)

    def pmap(fn, items):
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                return list(ex.map(fn, items))
        return [fn(x) for x in items]

    ball = pmap(lambda p: ballistic_inequality_audit(eym, p[0], p[1], C_audit, cache, f"ballistic[{p[2]}]"), [(a, b, i) for i, (a, b) in enumerate(dictionary.ballistic)])
    defect = np.min(np.stack([r.extra["defect"] for r in ball]), axis=0) if ball else np.zeros_like(eym.times)
    results = {
        "continuity": pmap(lambda f: weak_residual_continuity(eym, f, C_audit, cache), dictionary.continuity),
        "momentum": pmap(lambda f: weak_residual_momentum(eym, f, defect, C_cd, C_audit, cache), dictionary.momentum),
        "induction": pmap(lambda f: weak_residual_induction(eym, f, C_audit, cache), dictionary.induction),
        "div_b": pmap(lambda f: weak_divB(eym, f, C_audit, cache), dictionary.div_b),
        "entropy": pmap(lambda f: entropy_inequality_audit(eym, f, C_audit, cache), dictionary.entropy),
        "ballistic": ball,
    }
    results.update(compatibility_audit(eym, dictionary, C_audit, cache))
    return AuditReport(results, defect, eym.times, C_cd, C_audit)


__all__ = [
    "AuditReport",
    "AuditResult",
    "Atoms",
    "EmpiricalYoungMeasure",
    "TensorField",
    "TestFunctionDictionary",
    "atoms_from_state",
    "ballistic_inequality_audit",
    "build_dictionary",
    "cc_b_residual",
    "cc_s_residual",
    "cc_t_residual",
    "compatibility_audit",
    "entropy_inequality_audit",
    "expectation",
    "from_ensemble",
    "run_audits",
    "weak_divB",
    "weak_residual_continuity",
    "weak_residual_induction",
    "weak_residual_momentum",
]
