"""Box grids, boundary tags, fluid states and ghost-cell filling.

Conventions
-----------
* Scalars have shape ``grid.shape``; vectors ``(3, *grid.shape)`` and
  tensors ``(3, 3, *grid.shape)`` (2.5D embedding: three components even
  for 1D/2D grids; missing coordinates are invariant directions).
* Ghost-extended arrays carry ``GHOST`` layers on each side of every
  spatial axis. Ghosts are filled axis by axis over the already extended
  range, which makes edge and corner ghosts consistent.
* Faces are addressed by ``(axis, side)`` with ``side`` 0 (low) or 1 (high).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError, GridMismatch, PositivityError
from .fields import ScalarField, VectorField

logger = logging.getLogger(__name__)

GHOST = 1
THETA_TAGS = ("dirichlet", "neumann")
# "tangential": Gamma_D^B (B x n = b_tau); "normal": Gamma_N^B (B . n = b_nu, curl B x n = 0)
MAGNETIC_TAGS = ("tangential", "normal")


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on ``[0, L_1] x ... x [0, L_dim]``."""

    shape: tuple
    lengths: tuple = None
    theta_bc: tuple = None
    magnetic_bc: tuple = None

    def __post_init__(self):
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        if not 1 <= len(shape) <= 3:
            raise ConfigError("grid dimension must be 1, 2 or 3")
        if any(n < 2 for n in shape):
            raise ConfigError("need at least 2 cells per axis")
        dim = len(shape)
        lengths = (1.0,) * dim if self.lengths is None else tuple(float(v) for v in self.lengths)
        if len(lengths) != dim or any(not v > 0 for v in lengths):
            raise ConfigError("lengths must be positive, one per axis")
        tb = self.theta_bc or (("dirichlet", "dirichlet"),) * dim
        mb = self.magnetic_bc or (("tangential", "tangential"),) * dim
        tb = tuple(tuple(p) for p in tb)
        mb = tuple(tuple(p) for p in mb)
        if len(tb) != dim or len(mb) != dim or any(len(p) != 2 for p in tb + mb):
            raise ConfigError("boundary tags need a (low, high) pair per axis")
        for tag in (t for p in tb for t in p):
            if tag not in THETA_TAGS:
                raise ConfigError(f"unknown temperature tag {tag!r}")
        for tag in (t for p in mb for t in p):
            if tag not in MAGNETIC_TAGS:
                raise ConfigError(f"unknown magnetic tag {tag!r}")
        if not any(t == "dirichlet" for p in tb for t in p):
            raise ConfigError("at least one face must carry a temperature Dirichlet condition")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "theta_bc", tb)
        object.__setattr__(self, "magnetic_bc", mb)

    @property
    def dim(self):
        return len(self.shape)

    @property
    def h(self):
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def h_min(self):
        return min(self.h)

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def ext_shape(self):
        return tuple(n + 2 * GHOST for n in self.shape)

    def axis_centers(self, a, ghosts=0):
        n, h = self.shape[a], self.h[a]
        return (np.arange(-ghosts, n + ghosts) + 0.5) * h

    def centers(self, ghosts=0):
        """Cell-centre coordinate arrays (``indexing="ij"``)."""
        return tuple(np.meshgrid(*(self.axis_centers(a, ghosts) for a in range(self.dim)), indexing="ij"))

    def face_points(self, axis, side, ghosts=0):
        """Coordinates of the boundary face centres ``(axis, side)``.

        The normal coordinate is the face position; tangential ones are
        cell-centre coordinates (including ``ghosts`` layers).
        """
        axes = []
        for a in range(self.dim):
            if a == axis:
                axes.append(np.array([0.0 if side == 0 else self.lengths[a]]))
            else:
                axes.append(self.axis_centers(a, ghosts))
        X = np.meshgrid(*axes, indexing="ij")
        return tuple(np.take(c, 0, axis=axis) for c in X)

    def faces(self):
        for a in range(self.dim):
            for s in (0, 1):
                yield a, s

    def refine(self, k):
        return Grid(tuple(n * k for n in self.shape), self.lengths, self.theta_bc, self.magnetic_bc)

    def same_as(self, other):
        return (
            self.shape == other.shape
            and np.allclose(self.lengths, other.lengths, rtol=1e-14, atol=0.0)
            and self.theta_bc == other.theta_bc
            and self.magnetic_bc == other.magnetic_bc
        )

    def check_same(self, other):
        if not self.same_as(other):
            raise GridMismatch(f"grids differ: {self.shape} vs {other.shape}")

    def integrate(self, f):
        """Midpoint-rule integral over the trailing spatial axes (pairwise summation)."""
        f = np.asarray(f, float)
        axes = tuple(range(f.ndim - self.dim, f.ndim))
        return np.sum(f, axis=axes) * self.cell_volume

    def to_dict(self):
        return {
            "shape": list(self.shape),
            "lengths": list(self.lengths),
            "theta_bc": [list(p) for p in self.theta_bc],
            "magnetic_bc": [list(p) for p in self.magnetic_bc],
        }


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Boundary temperature (positive, possibly time dependent) and a
    stationary harmonic magnetic field ``B_B`` supplying ``b_tau`` and ``b_nu``.

    Both are analytic fields defined on the whole box; the temperature field
    doubles as the default ``theta_tilde`` extension for ballistic energies.
    """

    theta_B: ScalarField
    B_B: VectorField

    def __post_init__(self):
        object.__setattr__(self, "_cache", {})

    def theta_face(self, grid: Grid, axis, side, t, ghosts=0):
        if self.theta_B.is_stationary:
            key = ("theta", grid, axis, side, ghosts)
            if key not in self._cache:
                self._cache[key] = self.theta_B(0.0, grid.face_points(axis, side, ghosts))
            return self._cache[key]
        return self.theta_B(t, grid.face_points(axis, side, ghosts))

    def validate(self, grid: Grid, t_samples=(0.0,), tol=1e-8):
        if self.theta_B is None or self.B_B is None:
            raise ConfigError("boundary data needs theta_B and B_B")
        if not self.B_B.is_stationary:
            raise ConfigError("B_B must be stationary")
        for a, s in grid.faces():
            X = grid.face_points(a, s)
            for t in t_samples:
                if np.any(self.theta_B(t, X) <= 0):
                    raise ConfigError(f"theta_B must be positive on face {(a, s)}")
        X = grid.centers()
        div = np.max(np.abs(self.B_B.div(0.0, X)))
        rot = np.max(np.abs(self.B_B.curl(0.0, X)))
        if div > tol or rot > tol:
            raise ConfigError(f"B_B must be divergence and curl free (div {div:.2e}, curl {rot:.2e})")
        return self

    @classmethod
    def constant(cls, theta_B, B_B):
        return cls(ScalarField.constant(theta_B, "theta_B"), VectorField.constant(B_B, "B_B"))

    def b_face(self, grid: Grid, axis, side, ghosts=0):
        key = ("B", grid, axis, side, ghosts)
        if key not in self._cache:
            self._cache[key] = self.B_B(0.0, grid.face_points(axis, side, ghosts))
        return self._cache[key]


class Primitives(NamedTuple):
    rho: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    B: np.ndarray


@dataclass(frozen=True, eq=False)
class FluidState:
    """Conservative cell data ``(rho, m = rho u, eps = rho e, B)`` at time ``t``.

    Arrays are stored read-only so snapshots can be shared safely.
    """

    grid: Grid
    t: float
    rho: np.ndarray
    m: np.ndarray
    eps: np.ndarray
    B: np.ndarray
    theta_hint: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        g = self.grid.shape
        for name, arr, shp in (
            ("rho", self.rho, g),
            ("m", self.m, (3,) + g),
            ("eps", self.eps, g),
            ("B", self.B, (3,) + g),
        ):
            a = np.array(arr, dtype=float)
            if a.shape != shp:
                raise GridMismatch(f"{name} has shape {a.shape}, expected {shp}")
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if self.theta_hint is not None:
            h = np.array(self.theta_hint, dtype=float)
            h.flags.writeable = False
            object.__setattr__(self, "theta_hint", h)
        object.__setattr__(self, "t", float(self.t))

    @property
    def u(self):
        return self.m / self.rho

    def stacked(self):
        return np.concatenate([self.rho[None], self.m, self.eps[None], self.B])

    @classmethod
    def from_stacked(cls, grid, t, U, theta_hint=None):
        return cls(grid, t, U[0], U[1:4], U[4], U[5:8], theta_hint)

    @classmethod
    def from_primitives(cls, grid, eos, rho, u, theta, B, t=0.0):
        rho = np.broadcast_to(np.asarray(rho, float), grid.shape)
        theta = np.broadcast_to(np.asarray(theta, float), grid.shape)
        u, B = (_vector_field(v, grid) for v in (u, B))
        if np.any(rho <= 0) or np.any(theta <= 0):
            raise DomainError("initial density and temperature must be positive")
        return cls(grid, t, rho, rho * u, eos.energy_density(rho, theta), B)

    def temperature(self, eos):
        try:
            return eos.temperature(self.rho, self.eps, guess=self.theta_hint)
        except PositivityError as exc:
            raise PositivityError(f"{exc} at t={self.t:.6g} ({self.positivity_report(eos)})") from None

    def primitives(self, eos) -> Primitives:
        return Primitives(self.rho, self.u, self.temperature(eos), self.B)

    def positivity_report(self, eos=None):
        bad = np.argwhere(~(self.rho > 0))
        if bad.size:
            return f"rho <= 0 in cell {tuple(int(i) for i in bad[0])}"
        bad = np.argwhere(~(self.eps > 0))
        if bad.size:
            return f"rho e <= 0 in cell {tuple(int(i) for i in bad[0])}"
        return "state positive"

    def with_time(self, t):
        return FluidState(self.grid, t, self.rho, self.m, self.eps, self.B, self.theta_hint)


def _vector_field(v, grid):
    v = np.asarray(v, float)
    if v.shape == (3,):
        v = v.reshape((3,) + (1,) * grid.dim)
    return np.broadcast_to(v, (3,) + grid.shape)


# ---------------------------------------------------------------------------
# ghost cells
# ---------------------------------------------------------------------------


def _index(ndim, axis, idx):
    sl = [slice(None)] * ndim
    sl[axis] = idx
    return tuple(sl)


def interior(f, dim):
    """Strip the ghost layers of an extended array (spatial axes trailing)."""
    sl = [slice(None)] * (f.ndim - dim) + [slice(GHOST, -GHOST)] * dim
    return f[tuple(sl)]


def extend(f, dim):
    """Embed an interior array in a zero-filled ghost-extended one."""
    pad = [(0, 0)] * (f.ndim - dim) + [(GHOST, GHOST)] * dim
    return np.pad(np.asarray(f, float), pad)


def _mirror_pairs(n, side):
    """(ghost index, mirrored interior index) pairs in extended coordinates."""
    if side == 0:
        return [(GHOST - 1 - k, GHOST + k) for k in range(GHOST)]
    return [(GHOST + n + k, GHOST + n - 1 - k) for k in range(GHOST)]


def _fill_scalar(f, dim, axis, side, n, rule, face_value=None):
    ax = axis - dim
    for g, m in _mirror_pairs(n, side):
        src = f[_index(f.ndim, ax, m)]
        if rule == "mirror":
            f[_index(f.ndim, ax, g)] = src
        elif rule == "odd":
            f[_index(f.ndim, ax, g)] = -src
        elif rule == "dirichlet":
            f[_index(f.ndim, ax, g)] = 2.0 * face_value - src
        else:  # pragma: no cover - internal
            raise ValueError(rule)


def fill_ghosts(prims_ext: Primitives, grid: Grid, boundary: BoundaryData | None, t: float, theta=True, magnetic=True):
    """Fill ghost layers of extended primitive arrays in place.

    Rules: ``rho`` mirrored; ``u`` odd (no slip); ``theta`` ``2 theta_B -
    theta`` on Dirichlet faces and mirrored on Neumann faces; on tangential
    (Gamma_D^B) faces the tangential components of ``B`` follow
    ``2 B_B - B`` and the normal component is mirrored, on normal
    (Gamma_N^B) faces the normal component follows ``2 b_nu - B_n`` and the
    tangential components are mirrored.
    """
    if boundary is None and (theta or magnetic):
        raise ConfigError("missing boundary data")
    dim = grid.dim
    rho, u, th, B = prims_ext
    for a in range(dim):
        n = grid.shape[a]
        for s in (0, 1):
            if rho is not None:
                _fill_scalar(rho, dim, a, s, n, "mirror")
            if u is not None:
                _fill_scalar(u, dim, a, s, n, "odd")
            # face data live on the extended tangential range (corners included)
            if theta and th is not None:
                if grid.theta_bc[a][s] == "dirichlet":
                    tb = boundary.theta_face(grid, a, s, t, GHOST)
                    if np.any(tb <= 0):
                        raise PositivityError(f"theta_B <= 0 on face {(a, s)} at t={t}")
                    _fill_scalar(th, dim, a, s, n, "dirichlet", tb)
                else:
                    _fill_scalar(th, dim, a, s, n, "mirror")
            if magnetic and B is not None:
                bb = boundary.b_face(grid, a, s, GHOST)
                tangential = grid.magnetic_bc[a][s] == "tangential"
                for c in range(3):
                    comp = B[c]
                    if (c == a) != tangential:
                        # tangential component on Gamma_D^B, normal component on Gamma_N^B
                        _fill_scalar(comp, dim, a, s, n, "dirichlet", bb[c])
                    else:
                        _fill_scalar(comp, dim, a, s, n, "mirror")
    if th is not None and theta and np.any(th <= 0):
        idx = np.argwhere(th <= 0)[0]
        raise PositivityError(f"ghost temperature <= 0 at extended index {tuple(int(i) for i in idx)}, t={t}")
    return prims_ext


def apply_boundary(state: FluidState, boundary: BoundaryData, eos, theta=None) -> Primitives:
    """Ghost-extended primitive fields ``(rho, u, theta, B)`` of ``state``."""
    grid = state.grid
    if theta is None:
        theta = state.temperature(eos)
    prims = Primitives(
        extend(state.rho, grid.dim),
        extend(state.u, grid.dim),
        extend(theta, grid.dim),
        extend(state.B, grid.dim),
    )
    return fill_ghosts(prims, grid, boundary, state.t)


# ---------------------------------------------------------------------------
# cell-centred differential operators on extended arrays
# ---------------------------------------------------------------------------


def centered_diff(f_ext, grid: Grid, k):
    """Centered derivative along spatial axis ``k`` on interior cells."""
    dim = grid.dim
    if k >= dim:
        return np.zeros(f_ext.shape[: f_ext.ndim - dim] + grid.shape)
    ax = f_ext.ndim - dim + k
    n = f_ext.shape[ax]
    hi = np.take(f_ext, np.arange(2, n), axis=ax)
    lo = np.take(f_ext, np.arange(0, n - 2), axis=ax)
    d = (hi - lo) / (2.0 * grid.h[k])
    sl = [slice(None)] * d.ndim
    for a in range(dim):
        if a != k:
            sl[d.ndim - dim + a] = slice(GHOST, -GHOST)
    return d[tuple(sl)]


def cell_gradient(f_ext, grid):
    """Gradient with a trailing-derivative axis inserted after components: ``(..., 3, *shape)``."""
    parts = [centered_diff(f_ext, grid, k) for k in range(3)]
    lead = f_ext.ndim - grid.dim
    return np.stack(parts, axis=lead)


def cell_curl(B_ext, grid):
    G = cell_gradient(B_ext, grid)  # G[i, k] = d_k B_i
    return np.stack([G[2, 1] - G[1, 2], G[0, 2] - G[2, 0], G[1, 0] - G[0, 1]])


@dataclass(frozen=True)
class CellGradients:
    grad_u: np.ndarray  # (3, 3, *shape), [i, k] = d_k u_i
    grad_theta: np.ndarray  # (3, *shape)
    curl_B: np.ndarray  # (3, *shape)

    @property
    def D(self):
        return 0.5 * (self.grad_u + np.swapaxes(self.grad_u, 0, 1))

    @property
    def div_u(self):
        return self.grad_u[0, 0] + self.grad_u[1, 1] + self.grad_u[2, 2]


def cell_gradients(prims_ext: Primitives, grid: Grid) -> CellGradients:
    return CellGradients(
        grad_u=cell_gradient(prims_ext.u, grid),
        grad_theta=cell_gradient(prims_ext.theta, grid),
        curl_B=cell_curl(prims_ext.B, grid),
    )


def tensor_last(a):
    """Move leading ``(3, 3)`` or ``(3,)`` component axes to the end."""
    if a.ndim >= 2 and a.shape[:2] == (3, 3):
        return np.moveaxis(a, (0, 1), (-2, -1))
    return np.moveaxis(a, 0, -1)


__all__ = [
    "GHOST",
    "BoundaryData",
    "CellGradients",
    "FluidState",
    "Grid",
    "Primitives",
    "apply_boundary",
    "cell_curl",
    "cell_gradient",
    "cell_gradients",
    "centered_diff",
    "extend",
    "fill_ghosts",
    "interior",
    "tensor_last",
]
