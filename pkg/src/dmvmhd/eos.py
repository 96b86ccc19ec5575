"""Thermodynamic closures and their consistency checks.

Two closures are shipped:

* :class:`IdealPolytropic` -- ``p = rho*theta``, ``e = c_v*theta``,
  ``s = log(theta**c_v / rho)``.
* :class:`MonatomicRadiation` -- a monoatomic gas component
  ``p_M = theta**2.5 * P(rho / theta**1.5)`` with ``p_M = 2/3 rho e_M``,
  plus the radiation part ``p_R = a theta**2``, ``e_R = a theta**2 / rho``,
  ``s_R = 2 a theta / rho``.

Every model works on numpy arrays as well as scalars.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy import interpolate

from .errors import DomainError, NumericalError, PositivityError, StructuralViolation, TabulationError

logger = logging.getLogger(__name__)

FD_REL_STEP = 1e-6

# entropy tabulation (monoatomic component with user-supplied P)
TABLE_Z_MIN = 1e-8
TABLE_Z_CUT = 1e8
TABLE_NODES = 4096


class Partials(NamedTuple):
    dp_drho: np.ndarray
    dp_dtheta: np.ndarray
    de_drho: np.ndarray
    de_dtheta: np.ndarray
    ds_drho: np.ndarray
    ds_dtheta: np.ndarray


@dataclass(frozen=True)
class ThermoPoint:
    """A single (density, temperature) pair."""

    rho: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.rho) and math.isfinite(self.theta)):
            raise DomainError(f"non-finite thermo point ({self.rho}, {self.theta})")
        if self.rho <= 0 or self.theta <= 0:
            raise DomainError(f"thermo point needs rho > 0, theta > 0, got ({self.rho}, {self.theta})")


def _check_domain(rho, theta, allow_vacuum=False):
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(theta))):
        raise DomainError("non-finite density or temperature")
    bad_rho = rho < 0 if allow_vacuum else rho <= 0
    if np.any(bad_rho) or np.any(theta <= 0):
        raise DomainError(
            f"density/temperature outside domain: min rho={rho.min()}, min theta={theta.min()}"
        )
    return rho, theta


def _fd_step(x):
    return np.maximum(FD_REL_STEP, FD_REL_STEP * np.abs(x))


def _richardson(f, x, h, shift):
    """Centered difference of ``f`` along ``x`` with one Richardson level."""
    if np.any(x - h <= 0):
        raise NumericalError("finite-difference stencil leaves the admissible domain")
    d1 = (f(shift(h)) - f(shift(-h))) / (2.0 * h)
    d2 = (f(shift(0.5 * h)) - f(shift(-0.5 * h))) / h
    return (4.0 * d2 - d1) / 3.0


class EosModel:
    """Base class of the thermodynamic closures.

    Subclasses supply ``_pressure``, ``_internal_energy`` and ``_entropy``;
    everything else (finite-difference partials, temperature inversion,
    consistency helpers) is generic.
    """

    name = "abstract"

    # -- primitive closures (no domain checks) --------------------------------
    def _pressure(self, rho, theta):
        raise NotImplementedError

    def _internal_energy(self, rho, theta):
        raise NotImplementedError

    def _entropy(self, rho, theta):
        raise NotImplementedError

    def _energy_density(self, rho, theta):
        return rho * self._internal_energy(rho, theta)

    def _entropy_density(self, rho, theta):
        return rho * self._entropy(rho, theta)

    def _denergy_density_dtheta(self, rho, theta):
        h = _fd_step(theta)
        return _richardson(lambda t: self._energy_density(rho, t), theta, h, lambda d: theta + d)

    # -- public API -------------------------------------------------------------
    def pressure(self, rho, theta):
        rho, theta = _check_domain(rho, theta)
        return self._pressure(rho, theta)

    def internal_energy(self, rho, theta):
        rho, theta = _check_domain(rho, theta)
        return self._internal_energy(rho, theta)

    def entropy(self, rho, theta):
        rho, theta = _check_domain(rho, theta)
        return self._entropy(rho, theta)

    def energy_density(self, rho, theta):
        """``rho*e``; defined also for vacuum ``rho = 0``."""
        rho, theta = _check_domain(rho, theta, allow_vacuum=True)
        return self._energy_density(rho, theta)

    def entropy_density(self, rho, theta):
        """``rho*s``; defined also for vacuum ``rho = 0``."""
        rho, theta = _check_domain(rho, theta, allow_vacuum=True)
        return self._entropy_density(rho, theta)

    def gibbs_free_energy(self, rho, theta):
        rho, theta = _check_domain(rho, theta)
        return (
            self._internal_energy(rho, theta)
            - theta * self._entropy(rho, theta)
            + self._pressure(rho, theta) / rho
        )

    def partials(self, rho, theta) -> Partials:
        """Centered finite differences (relative step 1e-6, one Richardson level)."""
        rho, theta = _check_domain(rho, theta)
        hr, ht = _fd_step(rho), _fd_step(theta)
        out = []
        for fun in (self._pressure, self._internal_energy, self._entropy):
            out.append(_richardson(lambda r: fun(r, theta), rho, hr, lambda d: rho + d))
            out.append(_richardson(lambda t: fun(rho, t), theta, ht, lambda d: theta + d))
        return Partials(*out)

    def sound_speed_sq(self, rho, theta):
        """Adiabatic sound speed squared ``p_rho + theta p_theta**2 / (rho**2 e_theta)``."""
        d = self.partials(rho, theta)
        return d.dp_drho + theta * d.dp_dtheta**2 / (rho**2 * d.de_dtheta)

    def heat_capacity(self, rho, theta):
        return self.partials(rho, theta).de_dtheta

    def temperature(self, rho, eps, guess=None):
        """Invert ``eps = rho*e(rho, theta)`` for ``theta`` (``e`` increasing in ``theta``)."""
        rho = np.asarray(rho, dtype=float)
        eps = np.asarray(eps, dtype=float)
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(eps))):
            raise PositivityError("non-finite density or energy density")
        if np.any(rho <= 0):
            raise PositivityError(f"non-positive density (min {rho.min()})")
        if np.any(eps <= 0):
            raise PositivityError(f"non-positive internal energy density (min {eps.min()})")
        return self._invert_energy(rho, eps, guess)

    def _invert_energy(self, rho, eps, guess):
        rho, eps = np.broadcast_arrays(rho, eps)
        th = np.ones_like(eps) if guess is None else np.array(np.broadcast_to(guess, eps.shape), dtype=float)
        f = lambda t: self._energy_density(rho, t) - eps  # noqa: E731
        lo = th.copy()
        hi = th.copy()
        for _ in range(400):
            below = f(lo) > 0
            if not below.any():
                break
            lo = np.where(below, 0.5 * lo, lo)
            if lo.min() < 1e-300:
                break
        for _ in range(400):
            above = f(hi) < 0
            if not above.any():
                break
            hi = np.where(above, 2.0 * hi, hi)
        flo, fhi = f(lo), f(hi)
        if np.any(flo > 0) or np.any(fhi < 0):
            raise PositivityError("energy density has no positive temperature preimage")
        t = np.clip(th, lo, hi)
        for _ in range(200):
            ft = f(t)
            done = np.abs(ft) <= 1e-14 * np.abs(eps)
            if done.all():
                break
            lo = np.where(ft < 0, t, lo)
            hi = np.where(ft > 0, t, hi)
            dft = self._denergy_density_dtheta(rho, t)
            newton = t - ft / dft
            ok = (newton > lo) & (newton < hi) & np.isfinite(newton)
            t_new = np.where(ok, newton, 0.5 * (lo + hi))
            t = np.where(done, t, t_new)
        else:
            raise NumericalError("temperature inversion did not converge")
        return t


@dataclass(frozen=True, eq=False)
class IdealPolytropic(EosModel):
    """Perfect gas ``p = rho theta``, ``e = c_v theta``, ``s = log(theta**c_v / rho)``."""

    c_v: float = 1.5
    name = "ideal"

    def __post_init__(self):
        if not self.c_v > 1:
            raise DomainError(f"ideal closure requires c_v > 1, got {self.c_v}")

    def _pressure(self, rho, theta):
        return rho * theta

    def _internal_energy(self, rho, theta):
        return self.c_v * theta * np.ones_like(rho)

    def _entropy(self, rho, theta):
        return self.c_v * np.log(theta) - np.log(rho)

    def _energy_density(self, rho, theta):
        return self.c_v * rho * theta

    def _entropy_density(self, rho, theta):
        safe = np.where(rho > 0, rho, 1.0)
        return np.where(rho > 0, safe * (self.c_v * np.log(theta) - np.log(safe)), 0.0)

    def partials(self, rho, theta) -> Partials:
        rho, theta = _check_domain(rho, theta)
        one = np.ones(np.broadcast(rho, theta).shape)
        return Partials(
            dp_drho=theta * one,
            dp_dtheta=rho * one,
            de_drho=0.0 * one,
            de_dtheta=self.c_v * one,
            ds_drho=-one / rho,
            ds_dtheta=self.c_v * one / theta,
        )

    def sound_speed_sq(self, rho, theta):
        return (1.0 + 1.0 / self.c_v) * theta * np.ones_like(np.asarray(rho, dtype=float))

    def heat_capacity(self, rho, theta):
        return self.c_v * np.ones(np.broadcast(rho, theta).shape)

    def _invert_energy(self, rho, eps, guess):
        return eps / (self.c_v * rho)


def default_monatomic_P(p_infinity=1.0):
    """``P(Z) = Z (1 + b Z)**(2/3)`` with ``b = p_infinity**1.5`` and its derivative."""
    b = p_infinity**1.5

    def P(z):
        z = np.asarray(z, dtype=float)
        return z * (1.0 + b * z) ** (2.0 / 3.0)

    def dP(z):
        z = np.asarray(z, dtype=float)
        return (1.0 + b * z) ** (2.0 / 3.0) + (2.0 / 3.0) * b * z * (1.0 + b * z) ** (-1.0 / 3.0)

    return P, dP


def default_entropy_closed_form(z, p_infinity=1.0):
    """Closed-form ``S(Z) = int_Z^inf (1 + b t)**(-1/3) / t dt`` for the default ``P``."""
    y = p_infinity**1.5 * np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        wm1 = np.expm1(np.log1p(y) / 3.0)
        w = 1.0 + wm1
        return math.sqrt(3.0) * np.arctan(math.sqrt(3.0) / (2.0 * w + 1.0)) + 0.5 * np.log1p(3.0 * w / wm1**2)


def load_P_table(path):
    """Read a two-column ``Z P(Z)`` text table with strictly increasing ``Z``."""
    data = np.loadtxt(Path(path), ndmin=2)
    if data.shape[1] != 2:
        raise DomainError(f"P table {path} must have two columns")
    return data[:, 0], data[:, 1]


class _TabulatedP:
    """Monotone cubic interpolant of ``log P`` against ``log Z``, linear to the
    origin below the first node and a power law above the last one."""

    def __init__(self, z, p):
        z = np.asarray(z, dtype=float)
        p = np.asarray(p, dtype=float)
        if np.any(np.diff(z) <= 0):
            raise DomainError("P table needs strictly increasing Z")
        if z[0] < 0:
            raise DomainError("P table Z values must be nonnegative")
        if z[0] == 0.0:
            if p[0] != 0.0:
                raise DomainError("P table must satisfy P(0) = 0")
            z, p = z[1:], p[1:]
        if z.size < 2 or np.any(p <= 0):
            raise DomainError("P table needs at least two positive entries")
        self.z, self.p = z, p
        self._interp = interpolate.PchipInterpolator(np.log(z), np.log(p), extrapolate=False)
        self._slope = self._interp.derivative()
        self.alpha = float(np.log(p[-1] / p[-2]) / np.log(z[-1] / z[-2]))

    def _parts(self, z):
        z = np.asarray(z, dtype=float)
        lo, hi = self.z[0], self.z[-1]
        lz = np.log(np.clip(z, lo, hi))
        P = np.exp(self._interp(lz))
        k = self._slope(lz)
        P = np.where(z < lo, self.p[0] * z / lo, P)
        k = np.where(z < lo, 1.0, k)
        P = np.where(z > hi, self.p[-1] * (np.maximum(z, hi) / hi) ** self.alpha, P)
        k = np.where(z > hi, self.alpha, k)
        return z, P, k

    def P(self, z):
        return self._parts(z)[1]

    def dP(self, z):
        z, P, k = self._parts(z)
        return np.where(z > 0, P * k / np.where(z > 0, z, 1.0), self.p[0] / self.z[0])


class EntropyTable:
    """Tabulated ``S(Z)`` with ``S' = -(3/2)(5/3 P - P' Z)/Z**2`` and ``S(inf) = 0``.

    Node values come from Gauss-Legendre quadrature on a log grid up to
    ``z_cut`` plus a power-law tail; between nodes a cubic
    Hermite interpolant in ``log Z`` uses the exact slopes.
    """

    def __init__(self, P, dP, z_min=TABLE_Z_MIN, z_cut=TABLE_Z_CUT, nodes=TABLE_NODES):
        self._g = lambda t: 1.5 * (5.0 / 3.0 * P(t) - dP(t) * t) / t**2  # -S'(t)
        v = np.linspace(np.log(z_min), np.log(z_cut), nodes)
        z = np.exp(v)
        gz = self._g(z)
        if not np.all(np.isfinite(gz)) or np.any(gz < 0):
            raise TabulationError("entropy slope is not finite and nonnegative on the table range")
        g_cut, g_prev = float(self._g(z_cut)), float(self._g(z_cut / 10.0))
        if g_cut <= 0:
            alpha, tail = np.inf, 0.0
        else:
            alpha = -math.log(g_cut / g_prev) / math.log(10.0)
            if not alpha > 1.0:
                raise TabulationError(f"entropy tail does not decay (exponent {alpha:.3f} <= 1)")
            tail = g_cut * z_cut / (alpha - 1.0)
        # log-spaced segments are short, so a 12-point Gauss rule per segment
        # is exact to rounding for smooth slopes
        xg, wg = np.polynomial.legendre.leggauss(12)
        mid, half = 0.5 * (v[1:] + v[:-1]), 0.5 * np.diff(v)
        s = mid[:, None] + half[:, None] * xg[None, :]
        seg = half * np.sum(wg[None, :] * self._g(np.exp(s)) * np.exp(s), axis=1)
        values = np.empty(nodes)
        values[-1] = tail
        values[:-1] = tail + np.cumsum(seg[::-1])[::-1]
        self.v, self.values = v, values
        self.alpha, self.tail, self.g_cut, self.z_cut = alpha, tail, g_cut, z_cut
        self.g_min = float(gz[0]) * z[0]
        self._spline = interpolate.CubicHermiteSpline(v, values, -z * gz)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            v = np.log(z)
        vc = np.clip(v, self.v[0], self.v[-1])
        out = self._spline(vc)
        low = v < self.v[0]
        high = v > self.v[-1]
        if low.any():
            out = np.where(low, self.values[0] + self.g_min * (self.v[0] - v), out)
        if high.any():
            if not np.isfinite(self.alpha):
                out = np.where(high, 0.0, out)
            else:
                ratio = np.exp(np.where(high, v, self.v[-1]) - self.v[-1])
                out = np.where(high, self.tail * ratio ** (1.0 - self.alpha), out)
        if not np.all(np.isfinite(out[np.asarray(z) > 0])):
            raise TabulationError("entropy extension failed")
        return out


@dataclass(frozen=True, eq=False)
class MonatomicRadiation(EosModel):
    """Monoatomic gas plus radiation pressure ``a theta**2``.

    ``P``/``dP`` may be given as callables, or ``P_table`` as a path or a
    ``(Z, P)`` pair; by default ``P(Z) = Z (1 + b Z)**(2/3)`` with
    ``b = p_infinity**1.5``, whose entropy is known in closed form.
    ``entropy_mode`` selects ``"closed"`` (default ``P`` only), ``"table"``
    or ``"auto"``.
    """

    p_infinity: float = 1.0
    a: float = 1.0
    P_table: object = None
    P: Callable | None = None
    dP: Callable | None = None
    entropy_mode: str = "auto"
    name = "monatomic_radiation"

    def __post_init__(self):
        if not self.p_infinity > 0:
            raise DomainError("p_infinity must be positive")
        if not self.a > 0:
            raise DomainError("radiation coefficient a must be positive")
        if self.entropy_mode not in ("auto", "closed", "table"):
            raise DomainError(f"unknown entropy_mode {self.entropy_mode!r}")
        if self.entropy_mode == "closed" and not self.is_default_P:
            raise DomainError("closed-form entropy is only available for the default P")

    @property
    def is_default_P(self):
        return self.P is None and self.P_table is None

    @cached_property
    def _P_pair(self):
        if self.P is not None:
            if self.dP is None:
                raise DomainError("a callable P needs its derivative dP")
            return self.P, self.dP
        if self.P_table is not None:
            if isinstance(self.P_table, (str, Path)):
                z, p = load_P_table(self.P_table)
            else:
                z, p = self.P_table
            tab = _TabulatedP(z, p)
            return tab.P, tab.dP
        return default_monatomic_P(self.p_infinity)

    def P_func(self, z):
        return self._P_pair[0](z)

    def dP_func(self, z):
        return self._P_pair[1](z)

    @cached_property
    def entropy_table(self):
        P, dP = self._P_pair
        logger.debug("tabulating monoatomic entropy on %d nodes", TABLE_NODES)
        return EntropyTable(P, dP)

    def S_func(self, z):
        """Monoatomic entropy ``S(Z)``, decreasing with ``S(inf) = 0``."""
        if self.is_default_P and self.entropy_mode in ("auto", "closed"):
            return default_entropy_closed_form(z, self.p_infinity)
        return self.entropy_table(z)

    # closures
    def _pressure(self, rho, theta):
        z = rho / theta**1.5
        return theta**2.5 * self.P_func(z) + self.a * theta**2

    def _internal_energy(self, rho, theta):
        z = rho / theta**1.5
        return 1.5 * theta**2.5 / rho * self.P_func(z) + self.a * theta**2 / rho

    def _entropy(self, rho, theta):
        return self.S_func(rho / theta**1.5) + 2.0 * self.a * theta / rho

    def _energy_density(self, rho, theta):
        z = rho / theta**1.5
        return 1.5 * theta**2.5 * self.P_func(z) + self.a * theta**2

    def _entropy_density(self, rho, theta):
        safe = np.where(rho > 0, rho, 1.0)
        sm = np.where(rho > 0, safe * self.S_func(safe / theta**1.5), 0.0)
        return sm + 2.0 * self.a * theta

    def _denergy_density_dtheta(self, rho, theta):
        z = rho / theta**1.5
        return 2.25 * theta**1.5 * (5.0 / 3.0 * self.P_func(z) - self.dP_func(z) * z) + 2.0 * self.a * theta

    def _analytic_partials(self, rho, theta):
        """Closed-form ``(p_rho, p_theta, e_theta)`` used by the flow solver."""
        z = rho / theta**1.5
        P, dP = self.P_func(z), self.dP_func(z)
        p_rho = theta * dP
        p_theta = 2.5 * theta**1.5 * P - 1.5 * rho * dP + 2.0 * self.a * theta
        e_theta = self._denergy_density_dtheta(rho, theta) / rho
        return p_rho, p_theta, e_theta

    def sound_speed_sq(self, rho, theta):
        p_rho, p_theta, e_theta = self._analytic_partials(rho, theta)
        return p_rho + theta * p_theta**2 / (rho**2 * e_theta)

    def heat_capacity(self, rho, theta):
        return self._analytic_partials(rho, theta)[2]

    def _invert_energy(self, rho, eps, guess):
        # eps >= a theta**2 bounds the temperature from above
        if guess is None:
            guess = np.sqrt(eps / self.a) * 0.5
        return super()._invert_energy(rho, eps, guess)


# ---------------------------------------------------------------------------
# module-level operations on a single thermo point
# ---------------------------------------------------------------------------


def pressure(model: EosModel, pt: ThermoPoint) -> float:
    return float(model.pressure(pt.rho, pt.theta))


def internal_energy(model: EosModel, pt: ThermoPoint) -> float:
    return float(model.internal_energy(pt.rho, pt.theta))


def entropy(model: EosModel, pt: ThermoPoint) -> float:
    return float(model.entropy(pt.rho, pt.theta))


def partials(model: EosModel, pt: ThermoPoint) -> Partials:
    return Partials(*(float(v) for v in model.partials(pt.rho, pt.theta)))


def gibbs_free_energy(model: EosModel, pt: ThermoPoint) -> float:
    """``e - theta s + p / rho``."""
    return float(model.gibbs_free_energy(pt.rho, pt.theta))


# ---------------------------------------------------------------------------
# consistency checks
# ---------------------------------------------------------------------------


@dataclass
class GibbsReport:
    max_theta_residual: float
    max_rho_residual: float
    tol: float
    samples: int

    @property
    def passed(self):
        return max(self.max_theta_residual, self.max_rho_residual) < self.tol


@dataclass
class StabilityReport:
    passed: bool
    worst_point: tuple
    worst_value: float
    first_violation: tuple | None = None
    violations: int = 0


def _region_samples(region, samples, seed=0):
    (r0, r1), (t0, t1) = region
    if not (0 < r0 < r1 < np.inf and 0 < t0 < t1 < np.inf):
        raise DomainError(f"region {region} must lie strictly inside (0, inf)^2")
    if samples < 1:
        raise DomainError("need at least one sample")
    rng = np.random.default_rng(seed)
    return rng.uniform(r0, r1, samples), rng.uniform(t0, t1, samples)


def check_gibbs(model: EosModel, region, samples=100, tol=1e-5, seed=0) -> GibbsReport:
    """Scaled residuals of ``e_theta = theta s_theta`` and ``e_rho = theta s_rho + p / rho**2``."""
    rho, theta = _region_samples(region, samples, seed)
    d = model.partials(rho, theta)
    p = model.pressure(rho, theta)
    tiny = np.finfo(float).tiny
    a1, b1 = d.de_dtheta, theta * d.ds_dtheta
    r1 = np.abs(a1 - b1) / np.maximum(np.maximum(np.abs(a1), np.abs(b1)), tiny)
    a2, b2, c2 = d.de_drho, theta * d.ds_drho, p / rho**2
    scale2 = np.maximum.reduce([np.abs(a2), np.abs(b2), np.abs(c2), np.full_like(a2, tiny)])
    r2 = np.abs(a2 - b2 - c2) / scale2
    return GibbsReport(float(r1.max()), float(r2.max()), tol, samples)


def check_stability(model: EosModel, region, samples=100, seed=0) -> StabilityReport:
    """``p_rho > 0`` and ``e_theta > 0`` at every sample."""
    rho, theta = _region_samples(region, samples, seed)
    d = model.partials(rho, theta)
    worst = np.minimum(d.dp_drho, d.de_dtheta)
    k = int(np.argmin(worst))
    bad = np.flatnonzero(worst <= 0)
    first = (float(rho[bad[0]]), float(theta[bad[0]])) if bad.size else None
    return StabilityReport(
        passed=bad.size == 0,
        worst_point=(float(rho[k]), float(theta[k])),
        worst_value=float(worst[k]),
        first_violation=first,
        violations=int(bad.size),
    )


def pressure_growth_constant(model: EosModel, rho_range=(1e-3, 1e3), theta_range=(1e-3, 1e3), n=64):
    """Smallest ``C`` with ``|p| <= C (1 + rho e + rho |s|)`` on a log sample grid."""
    r = np.geomspace(*rho_range, n)
    t = np.geomspace(*theta_range, n)
    R, T = np.meshgrid(r, t, indexing="ij")
    p = model.pressure(R, T)
    bound = 1.0 + model.energy_density(R, T) + np.abs(model.entropy_density(R, T))
    return float(np.max(np.abs(p) / bound))


def check_structural(model: MonatomicRadiation, z_max=1e6, n=2000, limit_tol=0.01, entropy_cap=0.05):
    """Verify the structural hypotheses on the monoatomic component.

    Raises :class:`StructuralViolation` naming the first failed clause;
    otherwise returns a report dictionary.
    """
    if not z_max > 1:
        raise DomainError("z_max must exceed 1")
    z = np.geomspace(1e-8, z_max, n)
    P, dP = model.P_func(z), model.dP_func(z)
    P0 = float(model.P_func(np.array([0.0]))[0])
    if abs(P0) > 1e-12:
        raise StructuralViolation("w2.P(0)=0", f"P(0) = {P0}")
    if np.any(dP <= 0):
        raise StructuralViolation("w2.P'>0", f"P' <= 0 at Z = {z[np.argmax(dP <= 0)]}")
    w2 = (5.0 / 3.0 * P - dP * z) / z
    if np.any(w2 <= 0):
        raise StructuralViolation("w2", f"(5/3 P - P'Z)/Z <= 0 at Z = {z[np.argmax(w2 <= 0)]}")
    ratio = P / z ** (5.0 / 3.0)
    if np.any(np.diff(ratio) > 1e-12 * ratio[:-1]):
        raise StructuralViolation("w3", "P/Z^(5/3) is not decreasing")
    limit = float(ratio[-1])
    if abs(limit - model.p_infinity) > limit_tol * model.p_infinity:
        raise StructuralViolation("w3", f"P/Z^(5/3) at z_max is {limit:.6g}, p_infinity is {model.p_infinity}")
    S = model.S_func(z)
    if not np.all(np.isfinite(S)) or np.any(np.diff(S) > 0):
        raise StructuralViolation("w7", "S is not decreasing")
    s_end = float(S[-1])
    if not (0 <= s_end < entropy_cap):
        raise StructuralViolation("w7", f"S(z_max) = {s_end:.6g} not in [0, {entropy_cap})")
    C = pressure_growth_constant(model)
    if not math.isfinite(C):
        raise StructuralViolation("ass_cc_p", "no finite growth constant")
    return {
        "P(0)": P0,
        "min_dP": float(dP.min()),
        "min_w2": float(w2.min()),
        "p_infinity_estimate": limit,
        "S(z_max)": s_end,
        "growth_constant": C,
        "z_max": z_max,
    }


def eos_from_spec(spec: dict) -> EosModel:
    """Build a model from a configuration mapping (see the run-config schema)."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name == "ideal":
        return IdealPolytropic(c_v=float(spec.get("c_v", 1.5)))
    if name == "monatomic_radiation":
        return MonatomicRadiation(
            p_infinity=float(spec.get("p_infinity", 1.0)),
            a=float(spec.get("a", 1.0)),
            P_table=spec.get("P_table"),
            entropy_mode=spec.get("entropy_mode", "auto"),
        )
    raise DomainError(f"unknown equation of state {name!r}")


__all__ = [
    "EosModel",
    "GibbsReport",
    "IdealPolytropic",
    "MonatomicRadiation",
    "Partials",
    "StabilityReport",
    "ThermoPoint",
    "check_gibbs",
    "check_stability",
    "check_structural",
    "default_entropy_closed_form",
    "default_monatomic_P",
    "entropy",
    "eos_from_spec",
    "gibbs_free_energy",
    "internal_energy",
    "partials",
    "pressure",
    "pressure_growth_constant",
]
