import numpy as np
import pytest
import sympy as sp

from dmvmhd.constitutive import TransportModel
from dmvmhd.diagnostics import ballistic_energy, production_field, totals
from dmvmhd.eos import IdealPolytropic, MonatomicRadiation
from dmvmhd.errors import ConstraintError, GridMismatch, WeightError
from dmvmhd.fields import COORDS, ScalarField, VectorField, t_sym, x_sym
from dmvmhd.grid import FluidState, Grid
from dmvmhd.solver import Solver, SolverConfig, make_equilibrium
from dmvmhd.young_measure import (
    Atoms,
    EmpiricalYoungMeasure,
    TensorField,
    TestFunctionDictionary,
    atoms_from_state,
    ballistic_inequality_audit,
    build_dictionary,
    cc_s_residual,
    entropy_inequality_audit,
    expectation,
    from_ensemble,
    run_audits,
    weak_divB,
    weak_residual_continuity,
    weak_residual_induction,
    weak_residual_momentum,
)

IDEAL = IdealPolytropic(c_v=1.5)
MONO = MonatomicRadiation()
TM = TransportModel(mu0=0.1, kappa0=0.2, zeta0=0.3)
x, y = COORDS[0], COORDS[1]


def _equilibrium_run(n=16, rho=1.0, steps=6, dt=None, eos=MONO, B=(0.0, 0.0, 1.0)):
    g = Grid((n,))
    st, bd = make_equilibrium(g, eos, rho, 1.0, B)
    s = Solver(g, bd, eos, TM, SolverConfig(steps=steps, snapshot_every=2))
    return s.run(st, dt=dt or 1e-3, steps=steps)


def _perturbed_run(n=32, a=0.1, steps=40, dt=None, eos=MONO):
    g = Grid((n,))
    st, bd = make_equilibrium(g, eos, 1.0, 1.0, (0.0, 0.0, 1.0))
    X = g.centers()[0]
    bump = 4 * X * (1 - X)
    u = np.stack([a * bump, 0.5 * a * bump, np.zeros_like(X)])
    B = np.array(st.B)
    B[1] = a * np.sin(np.pi * X)
    st = FluidState.from_primitives(g, eos, 1.0 + 0.5 * a * bump, u, st.temperature(eos) * (1 + a * bump), B)
    s = Solver(g, bd, eos, TM, SolverConfig(steps=steps, snapshot_every=5))
    dt = dt or s.compute_dt(st)
    return s.run(st, dt=dt, steps=steps)


# --- measures and expectations ----------------------------------------------------


def test_dirac_expectation_is_pointwise():
    tr = _perturbed_run(steps=10)
    eym = from_ensemble([tr])
    for k, s in enumerate(tr.states):
        np.testing.assert_array_equal(expectation(eym, lambda A: A.rho, k), s.rho)
        np.testing.assert_allclose(expectation(eym, lambda A: A.u, k), s.u, rtol=1e-15)


def test_two_member_moments():
    a = _equilibrium_run(rho=1.0, eos=IDEAL)
    b = _equilibrium_run(rho=3.0, eos=IDEAL)
    eym = from_ensemble([a, b])
    np.testing.assert_allclose(eym.expectation(lambda A: A.rho, 0), 2.0, rtol=1e-15)
    np.testing.assert_allclose(eym.expectation(lambda A: A.rho**2, 0), 5.0, rtol=1e-15)
    np.testing.assert_allclose(eym.expectation(lambda A: np.ones_like(A.rho), 1), 1.0, rtol=1e-15)
    eym = from_ensemble([a, b], weights=[0.25, 0.75])
    np.testing.assert_allclose(eym.expectation(lambda A: 2 * A.rho + 1, 0), 2 * 2.5 + 1, rtol=1e-15)


def _random_measure(rng, K=4, n=8, weights=None):
    g = Grid((n,))
    _, bd = make_equilibrium(g, IDEAL, 1.0, 1.0, (0, 0, 0))
    G = rng.normal(size=(K, 3, 3, n))
    at = Atoms(
        rng.uniform(0.1, 10, (K, n)),
        rng.normal(size=(K, 3, n)),
        rng.uniform(0.1, 10, (K, n)),
        rng.normal(size=(K, 3, n)),
        0.5 * (G + np.swapaxes(G, 1, 2)),
        rng.normal(size=(K, 3, n)),
        rng.normal(size=(K, 3, n)),
    )
    if weights is None:
        w = rng.random((K, n))
        weights = w / w.sum(axis=0)
    return EmpiricalYoungMeasure(g, [0.0], [at], weights, bd, IDEAL, TM)


def test_jensen_on_random_measures(rng):
    for _ in range(1000):
        eym = _random_measure(rng)
        E = lambda f: eym.expectation(f, 0)  # noqa: E731
        assert np.all(E(lambda A: A.rho**2) >= E(lambda A: A.rho) ** 2 - 1e-12)
        u2 = E(lambda A: np.sum(A.u**2, axis=1))
        assert np.all(u2 >= np.sum(E(lambda A: A.u) ** 2, axis=0) - 1e-12)


def test_jensen_energy_density(rng):
    # rho e is convex in the conserved pair (rho, rho s) for a stable EOS:
    # check it along mixtures of two states with equal entropy density
    for eos in (IDEAL, MONO):
        rho = rng.uniform(0.5, 5, (2, 200))
        theta = rng.uniform(0.5, 5, (2, 200))
        eps = eos.energy_density(rho, theta)
        w = rng.random(200)
        rho_m = w * rho[0] + (1 - w) * rho[1]
        eps_m = w * eps[0] + (1 - w) * eps[1]
        # at the mean (rho, eps) the entropy density is at least the mean entropy density
        th_m = eos.temperature(rho_m, eps_m)
        S = eos.entropy_density(rho, theta)
        assert np.all(eos.entropy_density(rho_m, th_m) >= w * S[0] + (1 - w) * S[1] - 1e-12)


def test_weight_errors(rng):
    with pytest.raises(WeightError):
        _random_measure(rng, weights=np.full(4, 0.3))
    with pytest.raises(WeightError):
        _random_measure(rng, weights=np.array([1.5, -0.5, 0.0, 0.0]))
    with pytest.raises(WeightError):
        _random_measure(rng, weights=np.full(3, 1 / 3))


def test_ensemble_mismatch():
    a = _equilibrium_run(n=16)
    b = _equilibrium_run(n=8)
    with pytest.raises(GridMismatch):
        from_ensemble([a, b])
    c = _equilibrium_run(n=16, dt=2e-3)
    with pytest.raises(GridMismatch):
        from_ensemble([a, c])
    with pytest.raises(GridMismatch):
        from_ensemble([])


def test_atom_validation():
    z = np.zeros((1, 3, 4))
    D = np.zeros((1, 3, 3, 4))
    with pytest.raises(ConstraintError):
        Atoms(-np.ones((1, 4)), z, np.ones((1, 4)), z, D, z, z)
    bad = D.copy()
    bad[0, 0, 1] = 1.0
    with pytest.raises(ConstraintError):
        Atoms(np.ones((1, 4)), z, np.ones((1, 4)), z, bad, z, z)
    with pytest.raises(GridMismatch):
        Atoms(np.ones((1, 4)), z[..., :3], np.ones((1, 4)), z, D, z, z)
    # the phase space admits vacuum and zero temperature
    Atoms(np.zeros((1, 4)), z, np.zeros((1, 4)), z, D, z, z)


# --- dictionaries -------------------------------------------------------------------


@pytest.fixture(scope="module")
def eq_setup():
    tr = _equilibrium_run(n=16, steps=6)
    return tr, build_dictionary(tr.grid, tr.boundary, n=4, seed=1)


def test_dictionary_is_certified(eq_setup):
    tr, d = eq_setup
    assert d.counts()["momentum"] == 4
    assert len(d.ballistic) == 4
    bad = TestFunctionDictionary(momentum=(VectorField((1 + x, 0, 0), "bad"),))
    with pytest.raises(ConstraintError):
        bad.verify(tr.grid, tr.boundary)
    neg = TestFunctionDictionary(entropy=(ScalarField(-(x * (1 - x)), "neg"),))
    with pytest.raises(ConstraintError):
        neg.verify(tr.grid, tr.boundary)


def test_inadmissible_tests_rejected(eq_setup):
    tr, _ = eq_setup
    eym = from_ensemble([tr])
    with pytest.raises(ConstraintError):
        weak_residual_momentum(eym, VectorField((sp.Integer(1), 0, 0), "slip"))
    with pytest.raises(ConstraintError):
        entropy_inequality_audit(eym, ScalarField(sp.Integer(1), "one"))
    with pytest.raises(ConstraintError):
        weak_residual_induction(eym, VectorField((x, 0, 0), "div"))


# --- equilibrium Dirac -------------------------------------------------------------


def test_equilibrium_dirac_audits_vanish(eq_setup):
    tr, d = eq_setup
    eym = from_ensemble([tr])
    rep = run_audits(eym, d)
    assert rep.passed
    for name in ("continuity", "momentum", "induction", "div_b", "entropy", "ballistic", "cc_S"):
        for r in rep.results[name]:
            assert np.max(np.abs(r.values)) < 1e-10, (name, r.test_id)
    assert np.max(np.abs(rep.defect)) < 1e-10
    for r in rep.results["momentum"]:
        assert np.max(r.extra["budget"]) < 1e-9


def test_constant_state_compatibility_exact(eq_setup):
    tr, d = eq_setup
    eym = from_ensemble([tr])
    th = tr.boundary.theta_B
    from dmvmhd.young_measure import cc_b_residual, cc_t_residual

    for Z in d.cc_s:
        assert np.max(np.abs(cc_s_residual(eym, Z).values)) < 1e-12
    for psi, _ in d.cc_t:
        assert np.max(np.abs(cc_t_residual(eym, psi, th).values)) < 1e-12
    for _, G in d.cc_b:
        assert np.max(np.abs(cc_b_residual(eym, tr.boundary.B_B, G).values)) < 1e-12


# --- Dirac cross-checks against the solver diagnostics ----------------------------


def test_dirac_matches_solver_diagnostics():
    tr = _perturbed_run(steps=20)
    eym = from_ensemble([tr])
    g = tr.grid
    for k, s in enumerate(tr.states):
        sig = eym.expectation(
            lambda A: production_field(s, tr.boundary, tr.eos, tr.transport) * np.ones_like(A.rho), k
        )
        from dmvmhd.young_measure import _OBSERVABLES

        sig_ym = eym.expectation(_OBSERVABLES["sigma"](eym), k)
        np.testing.assert_allclose(sig_ym, sig, rtol=1e-12, atol=1e-14)
        S_ym = g.integrate(eym.expectation(_OBSERVABLES["rho_s"](eym), k))
        assert S_ym == pytest.approx(totals(s, tr.eos)["entropy"], rel=1e-12, abs=1e-14)

    th, Bt = tr.boundary.theta_B, tr.boundary.B_B
    res = ballistic_inequality_audit(eym, th, Bt)
    Eb = np.array([ballistic_energy(s, tr.eos, th, Bt, tr.boundary) for s in tr.states])
    prod = np.array([g.integrate(production_field(s, tr.boundary, tr.eos, tr.transport) * th(s.t, g.centers())) for s in tr.states])
    t = tr.times
    cum = np.r_[0.0, np.cumsum(0.5 * (prod[1:] + prod[:-1]) * np.diff(t))]
    np.testing.assert_allclose(res.extra["lhs"], Eb - Eb[0] + cum, rtol=1e-12, atol=1e-12 * np.max(np.abs(Eb)))


# --- negative controls ----------------------------------------------------------------


def _tampered(tr, field, factor):
    """Measure whose later snapshots have one atom slot rescaled."""
    eym = from_ensemble([tr])
    atoms = list(eym.atoms)
    for k in range(1, len(atoms)):
        kw = {n: getattr(atoms[k], n) for n in ("rho", "u", "theta", "B", "D_u", "D_theta", "C_B")}
        kw[field] = kw[field] * factor
        atoms[k] = Atoms(**kw)
    return EmpiricalYoungMeasure(eym.grid, eym.times, atoms, eym.weights, eym.boundary, eym.eos, eym.transport, eym.dt)


def test_continuity_negative_control(eq_setup):
    tr, d = eq_setup
    eym = _tampered(tr, "rho", 1.5)
    r = weak_residual_continuity(eym, d.continuity[0])
    assert not r.passed and r.worst > 1e-2


def test_momentum_negative_control():
    tr = _perturbed_run(steps=10)
    d = build_dictionary(tr.grid, tr.boundary, n=3, seed=2)
    eym = _tampered(tr, "u", -1.0)
    assert not all(weak_residual_momentum(eym, phi).passed for phi in d.momentum)


def test_entropy_negative_control(eq_setup):
    tr, d = eq_setup
    # temperatures drop with no flux or production to account for it
    eym = _tampered(tr, "theta", 0.5)
    r = entropy_inequality_audit(eym, d.entropy[0])
    assert not r.passed


def test_monopole_divergence_negative_control():
    g = Grid((128,))
    st, bd = make_equilibrium(g, IDEAL, 1.0, 1.0, (0, 0, 0))
    B = np.zeros((3, 128))
    B[0] = g.centers()[0]
    mono = FluidState(g, 0.0, st.rho, st.m, st.eps, B)
    at = [atoms_from_state(mono, bd, IDEAL)] * 2
    # short snapshot spacing keeps the O(h + dt) tolerance well below the O(1) defect
    eym = EmpiricalYoungMeasure(g, [0.0, 0.01], at, [1.0], bd, IDEAL, TM)
    chi = ScalarField(16 * x**2 * (1 - x) ** 2, "chi")
    r = weak_divB(eym, chi)
    assert not r.passed and r.ratio > 1.0


def test_corrupted_strain_slot_negative_control():
    tr = _perturbed_run(steps=10)
    eym = _tampered(tr, "D_u", 5.0)
    # a constant Z only sees the boundary values of u, so weight it by x
    Z = TensorField(((x, 0, 0), (0, 0, 0), (0, 0, 0)), "xZxx")
    r = cc_s_residual(eym, Z)
    assert not r.passed


# --- solver-generated measures ----------------------------------------------------------


def _snapshot_measure(n):
    """Two identical snapshots one time unit apart of a smooth state."""
    g = Grid((n,))
    st, bd = make_equilibrium(g, IDEAL, 1.0, 1.0, (0, 0, 1))
    X = g.centers()[0]
    u = np.stack([np.sin(np.pi * X), np.sin(2 * np.pi * X), np.zeros_like(X)])
    s = FluidState.from_primitives(g, IDEAL, 1.0, u, 1.0 + 0.2 * np.sin(np.pi * X), st.B)
    at = [atoms_from_state(s, bd, IDEAL)] * 2
    return EmpiricalYoungMeasure(g, [0.0, 1.0], at, [1.0], bd, IDEAL, TM)


def test_compatibility_residual_first_order():
    Z = TensorField(((1 + x, x**2, 0), (x**2, sp.Integer(1), 0), (0, 0, sp.Integer(0))), "Z")
    errs = [abs(cc_s_residual(_snapshot_measure(n), Z).values[-1]) for n in (32, 64, 128)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.0), (errs, orders)


def test_projection_run_weak_div_b():
    from dmvmhd.config import RunConfig
    from dmvmhd.experiments import run_trajectory

    cfg = RunConfig.from_dict(
        {
            "grid": {"shape": [16, 16]},
            "perturbation": {"kind": "mixed", "amplitude": 0.2},
            "solver": {"steps": 40, "snapshot_every": 10, "div_control": "projection"},
        }
    )
    tr, _ = run_trajectory(cfg)
    eym = from_ensemble([tr])
    chi = ScalarField(256 * (x * (1 - x) * y * (1 - y)) ** 2 * sp.exp(t_sym), "chi")
    assert abs(weak_divB(eym, chi).worst) < 1e-9


def test_ensemble_audit_defects_and_threads():
    members = [_perturbed_run(n=16, a=a, steps=20, dt=2e-3) for a in (0.05, 0.1)]
    eym = from_ensemble(members)
    d = build_dictionary(eym.grid, eym.boundary, n=3, seed=0)
    one = run_audits(eym, d, threads=1)
    four = run_audits(eym, d, threads=4)
    assert np.all(one.defect >= 0)
    assert one.budget_consistent
    assert one.to_dict() == four.to_dict()
    for r in one.results["ballistic"]:
        assert np.all(r.extra["defect"] >= 0)
    assert one.passed


def test_solenoidal_boundary_extension_dictionary():
    # B_B with a non-trivial harmonic component survives certification
    g = Grid((8, 8))
    _, bd = make_equilibrium(g, IDEAL, 1.0, 1.0, (0, 0, 1))
    from dmvmhd.grid import BoundaryData

    harm = BoundaryData(bd.theta_B, VectorField((x_sym, -COORDS[1], sp.Integer(1))))
    d = build_dictionary(g, harm, n=2, seed=3)
    assert d.ballistic[0][1] is harm.B_B
