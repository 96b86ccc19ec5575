import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmvmhd.constitutive import (
    CoefficientTable,
    StateSample,
    TensorPoint,
    TransportModel,
    curl,
    entropy_production,
    heat_flux,
    lorentz_force,
    stress_power,
    sym_grad,
    traceless,
    viscous_stress,
)
from dmvmhd.eos import ThermoPoint
from dmvmhd.errors import DomainError, StencilError

P1 = ThermoPoint(1.0, 1.0)
mats = arrays(np.float64, (3, 3), elements=st.floats(-10, 10))


def _sym(rng, n, d=3):
    G = rng.normal(size=(n, d, d))
    return 0.5 * (G + np.swapaxes(G, -1, -2))


# --- sym_grad / traceless -------------------------------------------------


def test_sym_grad_examples():
    np.testing.assert_array_equal(sym_grad(np.eye(3)), np.eye(3))
    np.testing.assert_array_equal(sym_grad([[0.0, 1.0], [0.0, 0.0]]), [[0.0, 0.5], [0.5, 0.0]])


@given(mats)
def test_sym_grad_projection(G):
    S = sym_grad(G)
    np.testing.assert_array_equal(S, S.T)
    np.testing.assert_allclose(sym_grad(S), S, rtol=0, atol=1e-14)


def test_traceless_examples():
    np.testing.assert_allclose(traceless(np.eye(3)), 0.0, atol=1e-15)
    np.testing.assert_allclose(traceless(np.diag([3.0, 0.0, 0.0])), np.diag([2.0, -1.0, -1.0]), atol=1e-15)
    D = np.array([[1.0, 2.0, 0.0], [2.0, -1.0, 0.5], [0.0, 0.5, 0.0]])
    np.testing.assert_array_equal(traceless(D), D)


def test_traceless_keeps_one_third_in_2d():
    # the embedding keeps the 3D factor, so a 2x2 identity is not mapped to zero
    np.testing.assert_allclose(traceless(np.eye(2)), np.eye(2) / 3.0, atol=1e-15)


@given(mats)
def test_traceless_idempotent(G):
    D = sym_grad(G)
    T = traceless(D)
    assert abs(np.trace(T)) < 1e-12
    np.testing.assert_allclose(traceless(T), T, rtol=0, atol=1e-14)


# --- viscous stress ------------------------------------------------------


def test_viscous_stress_identity_gives_bulk_part():
    tm = TransportModel(mu0=0.7, eta0=0.3, eta1=0.2)
    pt = ThermoPoint(2.0, 1.5)
    np.testing.assert_allclose(viscous_stress(tm, pt, np.eye(3)), (0.3 + 0.2 * 1.5) * np.eye(3), atol=1e-15)


def test_viscous_stress_traceless_input():
    D = np.array([[1.0, 0.5, 0.0], [0.5, -1.0, 0.0], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(viscous_stress(TransportModel(mu0=1.0), P1, D), 2.0 * D, atol=1e-15)


def test_viscous_stress_affine_mu():
    tm = TransportModel(mu0=1.0, mu1=1.0)
    S = viscous_stress(tm, P1, np.diag([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(S, np.diag([8 / 3, -4 / 3, -4 / 3]), rtol=1e-15, atol=1e-15)


def test_viscous_stress_matches_symbolic():
    mu, eta = sp.symbols("mu eta", positive=True)
    Dm = sp.Matrix(3, 3, lambda i, j: sp.Symbol(f"d{min(i, j)}{max(i, j)}"))
    tr = Dm.trace()
    S = mu * (2 * Dm - sp.Rational(2, 3) * tr * sp.eye(3)) + eta / 3 * tr * sp.eye(3)
    rng = np.random.default_rng(3)
    D = _sym(rng, 1)[0]
    subs = {mu: 0.4, eta: 0.9}
    subs.update({sp.Symbol(f"d{i}{j}"): D[i, j] for i in range(3) for j in range(i, 3)})
    ref = np.array(S.subs(subs).evalf(30), dtype=float)
    got = viscous_stress(TransportModel(mu0=0.4, eta0=0.9), P1, D)
    np.testing.assert_allclose(got, ref, rtol=1e-14, atol=1e-14)


def test_stress_power_nonnegative_and_split(rng):
    tm = TransportModel(mu0=0.3, mu1=0.1, eta0=0.2, eta1=0.05)
    D = _sym(rng, 10_000)
    rho = rng.uniform(0.1, 10, 10_000)
    theta = rng.uniform(0.1, 10, 10_000)
    pt = StateSample(rho, theta)
    S = viscous_stress(tm, pt, D)
    np.testing.assert_allclose(S, np.swapaxes(S, -1, -2), atol=0)
    direct = np.einsum("nij,nij->n", S, D)
    split = stress_power(tm, pt, D)
    assert np.all(split >= 0)
    np.testing.assert_allclose(direct, split, rtol=1e-12, atol=1e-12)


def test_viscous_stress_domain():
    with pytest.raises(DomainError):
        viscous_stress(TransportModel(), StateSample(np.array([1.0]), np.array([-1.0])), np.eye(3)[None])


# --- heat flux ------------------------------------------------------------


def test_heat_flux_examples():
    assert np.all(heat_flux(TransportModel(), P1, np.zeros(3)) == 0)
    np.testing.assert_array_equal(heat_flux(TransportModel(kappa0=2.0), P1, [1.0, 0.0, 0.0]), [-2.0, 0.0, 0.0])
    tm = TransportModel(kappa0=1.0, kappa1=1.0)
    np.testing.assert_array_equal(heat_flux(tm, ThermoPoint(1.0, 3.0), [0.0, 1.0, 0.0]), [0.0, -4.0, 0.0])


# --- curl / Lorentz force -------------------------------------------------


def test_lorentz_uniform_field_vanishes():
    B = np.ones((3, 8, 8)) * np.array([0.3, -1.0, 2.0])[:, None, None]
    assert np.all(lorentz_force(B, 0.1) == 0)


def test_lorentz_shear_field_symbolic():
    x, y = sp.symbols("x y")
    Bs = sp.Matrix([0, x, 0])
    J = sp.Matrix([sp.diff(Bs[2], y), -sp.diff(Bs[2], x), sp.diff(Bs[1], x) - sp.diff(Bs[0], y)])
    F = J.cross(Bs)
    assert sp.simplify(F - sp.Matrix([-x, 0, 0])) == sp.zeros(3, 1)

    h = 0.05
    xs = (np.arange(20) + 0.5) * h
    X, _ = np.meshgrid(xs, xs, indexing="ij")
    B = np.stack([np.zeros_like(X), X, np.zeros_like(X)])
    np.testing.assert_allclose(curl(B, h)[2], 1.0, rtol=1e-12)
    f = lorentz_force(B, h)
    np.testing.assert_allclose(f[0], -X[1:-1, 1:-1], rtol=1e-12)
    np.testing.assert_allclose(f[1:], 0.0, atol=1e-14)


def _gradient_field_force(n):
    h = 1.0 / n
    xs = (np.arange(n) + 0.5) * h
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    # phi = sin(pi x) cos(2 pi y) + x^2 y
    Bx = np.pi * np.cos(np.pi * X) * np.cos(2 * np.pi * Y) + 2 * X * Y
    By = -2 * np.pi * np.sin(np.pi * X) * np.sin(2 * np.pi * Y) + X**2
    B = np.stack([Bx, By, np.ones_like(X)])
    return np.max(np.abs(lorentz_force(B, h)))


def test_lorentz_gradient_field_converges():
    e = [_gradient_field_force(n) for n in (16, 32, 64)]
    orders = np.log2(np.array(e[:-1]) / np.array(e[1:]))
    assert np.all(orders >= 1.0), orders


def test_curl_stencil_errors():
    with pytest.raises(StencilError):
        curl(np.zeros((2, 8)), 0.1)
    with pytest.raises(StencilError):
        curl(np.zeros((3, 2, 8)), 0.1)


# --- entropy production ---------------------------------------------------


def test_entropy_production_examples():
    tm = TransportModel(mu0=1.0, kappa0=1.0, zeta0=1.0)
    zero = TensorPoint(np.zeros((3, 3)), np.zeros(3))
    assert entropy_production(tm, P1, zero) == 0.0
    tp = TensorPoint(np.zeros((3, 3)), np.zeros(3), np.array([1.0, 0.0, 0.0]))
    assert entropy_production(tm, P1, tp) == 1.0


def test_entropy_production_nonnegative(rng):
    n = 10_000
    tm = TransportModel(mu0=0.1, mu1=0.2, eta0=0.0, eta1=0.3, kappa0=0.5, kappa1=0.1, zeta0=0.2, zeta1=0.4)
    pt = StateSample(rng.uniform(0.1, 10, n), rng.uniform(0.1, 10, n))
    tp = TensorPoint(_sym(rng, n) * 10, rng.normal(size=(n, 3)) * 10, rng.normal(size=(n, 3)) * 10)
    sigma = entropy_production(tm, pt, tp)
    assert sigma.shape == (n,)
    assert np.all(sigma >= 0)


def test_tensor_point_requires_symmetry():
    with pytest.raises(DomainError):
        TensorPoint(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros(2))


# --- transport model ------------------------------------------------------


def test_transport_rejects_bad_coefficients():
    with pytest.raises(DomainError):
        TransportModel(mu0=-1.0)
    with pytest.raises(DomainError):
        TransportModel(mu0=0.0, mu1=0.0)
    with pytest.raises(DomainError):
        TransportModel.from_dict({"mu0": 1.0, "nu": 2.0})


def test_transport_round_trip():
    tm = TransportModel(mu0=0.2, kappa1=0.3)
    assert TransportModel.from_dict(tm.to_dict()) == tm
    assert not tm.is_constant
    assert TransportModel().is_constant


def test_coefficient_table_bilinear():
    r = (0.5, 1.0, 2.0)
    t = (0.5, 1.0, 2.0)
    R, T = np.meshgrid(r, t, indexing="ij")
    tm = TransportModel(table=CoefficientTable(r, t, {"mu": R + 2 * T}))
    # bilinear interpolation reproduces affine data exactly
    np.testing.assert_allclose(tm.mu(0.75, 1.5), 0.75 + 3.0, rtol=1e-14)
    assert tm.kappa(0.75, 1.5) == pytest.approx(1e-2)
    assert not tm.is_constant
    with pytest.raises(DomainError):
        CoefficientTable(r, t, {"nu": R})
    with pytest.raises(DomainError):
        CoefficientTable(r, t, {"mu": R[:2]})
