"""Entropy-balance residuals of a shipped scenario under grid refinement.

    python scripts/refinement_study.py configs/preset_unconditional.json --cells 32 64 128 256
"""

import argparse
import logging

import numpy as np

from dmvmhd.config import RunConfig
from dmvmhd.diagnostics import entropy_audit
from dmvmhd.experiments import run_trajectory

log = logging.getLogger("refinement")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--cells", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--t-end", type=float, default=0.1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = RunConfig.load(args.config)
    h, res = [], []
    for n in args.cells:
        cfg = base.replace(grid={"shape": [n] * len(base.grid["shape"])}, solver={"steps": None, "t_end": args.t_end})
        tr, _ = run_trajectory(cfg)
        r = entropy_audit(tr).residuals
        h.append(1.0 / n)
        res.append(float(np.max(np.abs(r))))
        log.info("%5d cells  max |residual| %.4e", n, res[-1])
    p = np.log(np.array(res[:-1]) / res[1:]) / np.log(np.array(h[:-1]) / h[1:])
    log.info("observed orders %s", np.round(p, 3).tolist())


if __name__ == "__main__":
    main()
