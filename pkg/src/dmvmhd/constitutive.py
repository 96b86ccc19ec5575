"""Transport coefficients, Newtonian stress, Fourier heat flux, Lorentz force
and the pointwise entropy production rate.

Tensors are always embedded in three dimensions ("2.5D" convention): the
trace factor of the deviatoric part is 1/3 regardless of the grid dimension.
Array arguments broadcast over leading axes; matrices occupy the last two.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .eos import ThermoPoint, _check_domain
from .errors import DomainError, StencilError

COEFFICIENTS = ("mu", "eta", "kappa", "zeta")


class StateSample(NamedTuple):
    """Array-valued (rho, theta) pair, the vectorised analogue of ThermoPoint."""

    rho: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class CoefficientTable:
    """Bilinear (rho, theta) table for one or more coefficients.

    ``values`` maps a coefficient name to an array of shape
    ``(len(rho_nodes), len(theta_nodes))``. Tabulated coefficients replace
    the affine law for that name.
    """

    rho_nodes: tuple
    theta_nodes: tuple
    values: dict

    def __post_init__(self):
        for name, arr in self.values.items():
            if name not in COEFFICIENTS:
                raise DomainError(f"unknown coefficient {name!r} in table")
            if np.shape(arr) != (len(self.rho_nodes), len(self.theta_nodes)):
                raise DomainError(f"table for {name} has the wrong shape")

    def interpolant(self, name):
        return RegularGridInterpolator(
            (np.asarray(self.rho_nodes, float), np.asarray(self.theta_nodes, float)),
            np.asarray(self.values[name], float),
            method="linear",
            bounds_error=True,
        )


@dataclass(frozen=True)
class TransportModel:
    """Affine-in-temperature transport coefficients ``c(theta) = c0 + c1*theta``."""

    mu0: float = 1e-2
    mu1: float = 0.0
    eta0: float = 0.0
    eta1: float = 0.0
    kappa0: float = 1e-2
    kappa1: float = 0.0
    zeta0: float = 1e-2
    zeta1: float = 0.0
    table: CoefficientTable | None = None

    def __post_init__(self):
        for f in fields(self):
            if f.name == "table":
                continue
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise DomainError(f"transport coefficient {f.name} must be finite and nonnegative, got {v}")
        if self.mu0 <= 0 and self.mu1 <= 0:
            raise DomainError("viscosity mu must be positive")
        if self.kappa0 <= 0 and self.kappa1 <= 0:
            raise DomainError("heat conductivity kappa must be positive")
        if self.zeta0 <= 0 and self.zeta1 <= 0:
            raise DomainError("magnetic diffusivity zeta must be positive")

    @property
    def is_constant(self):
        return self.table is None and self.mu1 == self.eta1 == self.kappa1 == self.zeta1 == 0.0

    def _eval(self, name, rho, theta):
        if self.table is not None and name in self.table.values:
            r, t = np.broadcast_arrays(np.asarray(rho, float), np.asarray(theta, float))
            pts = np.stack([r.ravel(), t.ravel()], axis=-1)
            return self.table.interpolant(name)(pts).reshape(r.shape)
        c0, c1 = getattr(self, name + "0"), getattr(self, name + "1")
        theta = np.asarray(theta, float)
        return c0 + c1 * theta

    def mu(self, rho, theta):
        return self._eval("mu", rho, theta)

    def eta(self, rho, theta):
        return self._eval("eta", rho, theta)

    def kappa(self, rho, theta):
        return self._eval("kappa", rho, theta)

    def zeta(self, rho, theta):
        return self._eval("zeta", rho, theta)

    def max_coefficients(self, rho, theta):
        """Pointwise ``(mu, kappa, zeta)`` used by the time-step restriction."""
        return self.mu(rho, theta), self.kappa(rho, theta), self.zeta(rho, theta)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)} - {"table"}
        extra = set(d) - known
        if extra:
            raise DomainError(f"unknown transport keys {sorted(extra)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "table"}


@dataclass(frozen=True)
class TensorPoint:
    """Gradient data at a point: ``D`` = sym. velocity gradient, ``grad_theta``, ``curl_B``."""

    D: np.ndarray
    grad_theta: np.ndarray
    curl_B: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        D = np.asarray(self.D, float)
        if D.shape[-1] != D.shape[-2]:
            raise DomainError("D must be square")
        if not np.allclose(D, np.swapaxes(D, -1, -2), rtol=0.0, atol=1e-14):
            raise DomainError("D must be symmetric")


def _thermo(pt):
    if isinstance(pt, ThermoPoint):
        return pt.rho, pt.theta
    rho, theta = _check_domain(pt.rho, pt.theta)
    return rho, theta


def _eye_like(D):
    n = D.shape[-1]
    return np.broadcast_to(np.eye(n), D.shape)


def _trace(D):
    return np.trace(D, axis1=-2, axis2=-1)


def sym_grad(grad_u):
    """Symmetric part ``(G + G^T)/2``."""
    G = np.asarray(grad_u, float)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def traceless(D):
    """``D - tr(D)/3 I`` (factor 1/3 in every dimension)."""
    D = np.asarray(D, float)
    return D - _trace(D)[..., None, None] / 3.0 * _eye_like(D)


def viscous_stress(tm: TransportModel, pt, D):
    """``mu (2D - 2/3 tr D I) + eta/3 tr D I``."""
    rho, theta = _thermo(pt)
    D = np.asarray(D, float)
    mu = np.asarray(tm.mu(rho, theta))[..., None, None]
    eta = np.asarray(tm.eta(rho, theta))[..., None, None]
    tr = _trace(D)[..., None, None]
    eye = _eye_like(D)
    return mu * (2.0 * D - (2.0 / 3.0) * tr * eye) + eta / 3.0 * tr * eye


def stress_power(tm: TransportModel, pt, D):
    """``S(D):D`` in the split form ``2 mu |T[D]|^2 + eta/3 (tr D)^2`` (nonnegative by construction)."""
    rho, theta = _thermo(pt)
    D = np.asarray(D, float)
    T = traceless(D)
    return 2.0 * tm.mu(rho, theta) * np.sum(T * T, axis=(-2, -1)) + tm.eta(rho, theta) / 3.0 * _trace(D) ** 2


def heat_flux(tm: TransportModel, pt, grad_theta):
    """Fourier's law ``q = -kappa grad(theta)``."""
    rho, theta = _thermo(pt)
    g = np.asarray(grad_theta, float)
    return -np.asarray(tm.kappa(rho, theta))[..., None] * g


def entropy_production(tm: TransportModel, pt, tensors: TensorPoint):
    """``(S:D + kappa |grad theta|^2 / theta + zeta |curl B|^2) / theta``."""
    rho, theta = _thermo(pt)
    g = np.asarray(tensors.grad_theta, float)
    c = np.asarray(tensors.curl_B, float)
    return (
        stress_power(tm, pt, tensors.D)
        + tm.kappa(rho, theta) * np.sum(g * g, axis=-1) / theta
        + tm.zeta(rho, theta) * np.sum(c * c, axis=-1)
    ) / theta


# ---------------------------------------------------------------------------
# discrete curl and Lorentz force on cell-centred samples
# ---------------------------------------------------------------------------


def _centered(f, axis, h):
    n = f.shape[axis]
    hi = [slice(None)] * f.ndim
    lo = [slice(None)] * f.ndim
    hi[axis] = slice(2, n)
    lo[axis] = slice(0, n - 2)
    return (f[tuple(hi)] - f[tuple(lo)]) / (2.0 * h)


def _trim(f, axes):
    sl = [slice(None)] * f.ndim
    for ax in axes:
        sl[ax] = slice(1, f.shape[ax] - 1)
    return f[tuple(sl)]


def curl(B, spacing):
    """Centered second-order curl of ``B`` (shape ``(3, n1[, n2[, n3]])``).

    The result covers interior points only (one point trimmed on both ends
    of every active axis). Missing coordinates are treated as invariant
    directions.
    """
    B = np.asarray(B, float)
    if B.shape[0] != 3:
        raise StencilError("B must carry 3 components on the leading axis")
    dim = B.ndim - 1
    spacing = tuple(np.broadcast_to(np.asarray(spacing, float), (dim,)))
    if any(n < 3 for n in B.shape[1:]):
        raise StencilError("curl stencil needs at least 3 points along every axis")
    axes = list(range(1, dim + 1))

    def d(comp, k):
        # derivative of component comp along coordinate k (0-based)
        if k >= dim:
            return np.zeros(tuple(n - 2 for n in B.shape[1:]))
        f = _centered(B[comp], k, spacing[k])
        return _trim(f, [a - 1 for a in axes if a - 1 != k])

    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])


def lorentz_force(B, spacing):
    """``curl(B) x B`` on interior points of a cell-centred sample."""
    B = np.asarray(B, float)
    c = curl(B, spacing)
    Bi = _trim(B, range(1, B.ndim))
    return np.cross(c, Bi, axis=0)


__all__ = [
    "CoefficientTable",
    "StateSample",
    "TensorPoint",
    "TransportModel",
    "curl",
    "entropy_production",
    "heat_flux",
    "lorentz_force",
    "stress_power",
    "sym_grad",
    "traceless",
    "viscous_stress",
]
