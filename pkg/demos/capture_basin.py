"""Which starting points lock onto the chirp: a coarse capture map.

Uses the decaying excitation mu = mu0 (1 + tau)**(-1/2) so that captured and
escaping starts coexist on the same grid.
"""
import argparse
from collections import Counter

import numpy as np

from autores.integrator import capture_map, ic_grid
from autores.phase_model import ModelParams, Regularized


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=16, help="grid points per axis")
    ap.add_argument("--horizon", type=float, default=200.0)
    args = ap.parse_args()

    params = ModelParams(1.0, 0.0, Regularized(-0.5, 1.0))
    rows = capture_map(params, ic_grid((0.1, 4.0), args.n, args.n), args.horizon)
    mark = {"Captured": "#", "NotCaptured": ".", "Undecided": "?"}

    rho = np.unique([r.rho0 for r in rows])
    print("rho0 down, psi0 across [0, 2 pi)")
    for r0 in rho[::-1]:
        print(f"{r0:5.2f} " + "".join(mark[r.verdict] for r in rows if r.rho0 == r0))
    print(dict(Counter(r.verdict for r in rows)))


if __name__ == "__main__":
    main()
