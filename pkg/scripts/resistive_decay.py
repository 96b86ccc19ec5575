"""Decay rate of a sin(pi x) mode of B_y against the exact 2 zeta pi^2.

The gap shrinks with h because the Rusanov flux adds a numerical
resistivity of order a h / 2 (a the fast speed).

    python scripts/resistive_decay.py --zeta 0.25 --cells 64 128 256
"""

import argparse
import logging

import numpy as np

from dmvmhd.constitutive import TransportModel
from dmvmhd.eos import IdealPolytropic
from dmvmhd.grid import FluidState, Grid
from dmvmhd.solver import Solver, SolverConfig, make_equilibrium

log = logging.getLogger("decay")


def decay_rate(n, zeta, t_end=0.1, amplitude=1e-3):
    eos = IdealPolytropic(c_v=1.5)
    g = Grid((n,))
    st, bd = make_equilibrium(g, eos, 1.0, 1.0, (0.0, 0.0, 1.0))
    B = np.array(st.B)
    B[1] = amplitude * np.sin(np.pi * g.centers()[0])
    st = FluidState.from_primitives(g, eos, 1.0, np.zeros(3), st.temperature(eos), B)
    tm = TransportModel(mu0=0.05, kappa0=0.05, zeta0=zeta)
    tr = Solver(g, bd, eos, tm, SolverConfig(t_end=t_end, snapshot_every=20)).run(st)
    E = np.array([0.5 * g.integrate(s.B[1] ** 2) for s in tr.states])
    return -np.polyfit(tr.times, np.log(E), 1)[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--zeta", type=float, default=0.25)
    ap.add_argument("--cells", type=int, nargs="+", default=[64, 128, 256])
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    exact = 2 * args.zeta * np.pi**2
    for n in args.cells:
        r = decay_rate(n, args.zeta)
        log.info("%5d cells  rate %.5f  exact %.5f  rel. error %.3e", n, r, exact, r / exact - 1)


if __name__ == "__main__":
    main()
