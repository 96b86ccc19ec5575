import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmvmhd.eos import (
    IdealPolytropic,
    MonatomicRadiation,
    ThermoPoint,
    check_gibbs,
    check_stability,
    check_structural,
    entropy,
    eos_from_spec,
    gibbs_free_energy,
    internal_energy,
    partials,
    pressure,
)
from dmvmhd.errors import DomainError, StructuralViolation

mp.mp.dps = 40
IDEAL = IdealPolytropic(c_v=1.5)
MONO = MonatomicRadiation()
pos = st.floats(0.1, 10.0)


def mp_P(z):
    return z * (1 + z) ** (mp.mpf(2) / 3)


def mp_S(z):
    return mp.quad(lambda t: (1 + t) ** (-mp.mpf(1) / 3) / t, [z, mp.inf])


def mp_mono(rho, theta, a=1):
    rho, theta = mp.mpf(rho), mp.mpf(theta)
    z = rho / theta**1.5
    p = theta**2.5 * mp_P(z) + a * theta**2
    e = 1.5 * theta**2.5 / rho * mp_P(z) + a * theta**2 / rho
    s = mp_S(z) + 2 * a * theta / rho
    return p, e, s


# -- pointwise values -------------------------------------------------------


def test_ideal_values():
    assert pressure(IDEAL, ThermoPoint(2.0, 3.0)) == 6.0
    assert internal_energy(IDEAL, ThermoPoint(7.0, 2.0)) == 3.0
    assert entropy(IDEAL, ThermoPoint(1.0, 1.0)) == 0.0
    oracle = float(1.5 * mp.log(3) - mp.log(2))
    assert entropy(IDEAL, ThermoPoint(2.0, 3.0)) == pytest.approx(oracle, rel=1e-14)
    assert oracle == pytest.approx(0.95477, abs=1e-5)


def test_ideal_gibbs_free_energy():
    assert gibbs_free_energy(IDEAL, ThermoPoint(1.0, 1.0)) == pytest.approx(2.5, abs=1e-15)
    oracle = float(4.5 - 3 * (1.5 * mp.log(3) - mp.log(2)) + 3)
    assert gibbs_free_energy(IDEAL, ThermoPoint(2.0, 3.0)) == pytest.approx(oracle, rel=1e-14)
    assert oracle == pytest.approx(4.6357, abs=1e-4)


def test_ideal_partials():
    d = partials(IDEAL, ThermoPoint(2.0, 3.0))
    assert d.dp_drho == 3.0 and d.de_dtheta == 1.5 and d.de_drho == 0.0


def test_monatomic_values_against_arbitrary_precision():
    p, e, s = mp_mono(1, 1)
    assert pressure(MONO, ThermoPoint(1.0, 1.0)) == pytest.approx(float(p), rel=1e-14)
    assert float(p) == pytest.approx(2 ** (2 / 3) + 1, rel=1e-15)
    assert internal_energy(MONO, ThermoPoint(1.0, 1.0)) == pytest.approx(float(e), rel=1e-14)
    assert float(e) == pytest.approx(3.3811, abs=1e-4)
    assert entropy(MONO, ThermoPoint(1.0, 1.0)) == pytest.approx(float(s), rel=1e-10)


@pytest.mark.parametrize("rho,theta", [(0.3, 0.7), (2.5, 1.3), (7.0, 0.2), (0.05, 4.0)])
def test_monatomic_scattered_points(rho, theta):
    p, e, s = mp_mono(rho, theta)
    assert MONO.pressure(rho, theta) == pytest.approx(float(p), rel=1e-13)
    assert MONO.internal_energy(rho, theta) == pytest.approx(float(e), rel=1e-13)
    assert MONO.entropy(rho, theta) == pytest.approx(float(s), rel=1e-9)


def test_vacuum_limit_leaves_radiation_pressure():
    assert MONO.pressure(1e-14, 1.0) == pytest.approx(1.0, rel=1e-9)


def test_entropy_tail_matches_quadrature():
    z = np.array([1e6])
    S = float(MONO.S_func(z)[0])
    assert S == pytest.approx(float(mp_S(mp.mpf(10) ** 6)), rel=1e-9)
    assert S > 0
    zs = np.geomspace(1e-3, 1e8, 200)
    assert np.all(np.diff(MONO.S_func(zs)) < 0)


def test_partials_against_richardson_oracle():
    d = MONO.partials(1.0, 1.0)

    def p_rho(r):
        return mp_mono(r, 1)[0]

    oracle = mp.diff(p_rho, mp.mpf(1))
    assert float(d.dp_drho) == pytest.approx(float(oracle), rel=1e-6)
    oracle_t = mp.diff(lambda t: mp_mono(1, t)[1], mp.mpf(1))
    assert float(d.de_dtheta) == pytest.approx(float(oracle_t), rel=1e-6)


@given(pos, pos)
def test_monatomic_virial_identity(rho, theta):
    # p_M = (2/3) rho e_M once the radiation parts are removed
    pM = MONO.pressure(rho, theta) - MONO.a * theta**2
    eM = MONO.internal_energy(rho, theta) - MONO.a * theta**2 / rho
    assert pM == pytest.approx(2.0 / 3.0 * rho * eM, rel=1e-12)


@pytest.mark.parametrize("model", [IDEAL, MONO])
def test_domain_errors(model):
    with pytest.raises(DomainError):
        model.pressure(-1.0, 1.0)
    with pytest.raises(DomainError):
        model.entropy(1.0, 0.0)
    with pytest.raises(DomainError):
        ThermoPoint(0.0, 1.0)


# -- consistency checks -----------------------------------------------------


def test_gibbs_ideal_exact():
    r = check_gibbs(IDEAL, ((1, 2), (1, 2)), 100, tol=1e-12)
    assert r.passed and r.max_theta_residual < 1e-14 and r.max_rho_residual < 1e-14


def test_gibbs_monatomic():
    assert check_gibbs(MONO, ((0.5, 2), (0.5, 2)), 100).passed
    assert check_gibbs(MONO, ((0.1, 10), (0.1, 10)), 100).passed


@dataclass(frozen=True)
class DoubledEnergy(IdealPolytropic):
    def _internal_energy(self, rho, theta):
        return 2.0 * super()._internal_energy(rho, theta)

    def _energy_density(self, rho, theta):
        return rho * self._internal_energy(rho, theta)

    def partials(self, rho, theta):
        return type(self).__mro__[2].partials(self, rho, theta)


@dataclass(frozen=True)
class NegativePressure(IdealPolytropic):
    def _pressure(self, rho, theta):
        return -rho * theta

    def partials(self, rho, theta):
        return type(self).__mro__[2].partials(self, rho, theta)


def test_gibbs_negative_control():
    r = check_gibbs(DoubledEnergy(), ((1, 2), (1, 2)), 50)
    assert not r.passed and max(r.max_theta_residual, r.max_rho_residual) > 0.1


def test_stability():
    assert check_stability(IDEAL, ((0.1, 10), (0.1, 10)), 100).passed
    assert check_stability(MONO, ((0.1, 10), (0.1, 10)), 100).passed
    bad = check_stability(NegativePressure(), ((0.1, 10), (0.1, 10)), 100)
    assert not bad.passed and bad.violations == 100 and bad.first_violation is not None


def test_bad_region():
    with pytest.raises(DomainError):
        check_gibbs(IDEAL, ((0, 1), (1, 2)))


def test_structural_default():
    rep = check_structural(MONO)
    assert rep["min_w2"] > 0 and math.isfinite(rep["growth_constant"])
    assert rep["p_infinity_estimate"] == pytest.approx(1.0, rel=0.01)


@pytest.mark.parametrize(
    "P,dP,clause",
    [
        (lambda z: z, lambda z: np.ones_like(z), "w3"),
        (lambda z: z**2, lambda z: 2 * z, "w2"),
    ],
)
def test_structural_violations(P, dP, clause):
    model = MonatomicRadiation(P=P, dP=dP)
    with pytest.raises(StructuralViolation) as exc:
        check_structural(model)
    assert exc.value.clause == clause


def test_default_w2_closed_form():
    z = np.geomspace(1e-6, 1e6, 300)
    P, dP = MONO.P_func(z), MONO.dP_func(z)
    assert np.allclose((5 / 3 * P - dP * z) / z, 2 / 3 * (1 + z) ** (-1 / 3), rtol=1e-12)


def test_table_entropy_matches_closed_form(tmp_path):
    z = np.geomspace(1e-6, 1e9, 4000)
    path = tmp_path / "P.txt"
    np.savetxt(path, np.column_stack([z, z * (1 + z) ** (2 / 3)]))
    tab = MonatomicRadiation(P_table=str(path), entropy_mode="table")
    zz = np.geomspace(1e-2, 1e5, 50)
    # the offset is the tail beyond the last table node
    assert np.allclose(tab.S_func(zz), MONO.S_func(zz), rtol=1e-6, atol=1e-5)


def test_from_spec():
    assert isinstance(eos_from_spec({"name": "ideal", "c_v": 2.0}), IdealPolytropic)
    with pytest.raises(DomainError):
        eos_from_spec({"name": "steam"})
    with pytest.raises(DomainError):
        IdealPolytropic(c_v=1.0)


def test_entropy_table_refinement_and_continuity():
    from dmvmhd.eos import EntropyTable

    P, dP = MONO.P_func, MONO.dP_func
    coarse = EntropyTable(P, dP, nodes=4096)
    fine = EntropyTable(P, dP, nodes=8192)
    z = np.geomspace(1e-6, 1e7, 500)
    assert np.max(np.abs(coarse(z) - fine(z))) < 1e-6
    # no jumps across interpolation cells
    v = np.linspace(np.log(1e-8), np.log(1e8), 4096)
    nodes = np.exp(v[100:4000:97])
    left, right = coarse(nodes * (1 - 1e-13)), coarse(nodes * (1 + 1e-13))
    assert np.max(np.abs(left - right) / np.abs(coarse(nodes))) < 1e-10
