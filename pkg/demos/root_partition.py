"""Root count over the (nu, delta) plane, drawn as a text map.

'4' marks four phase-locked roots, '2' two, and '.' a cell whose count is
not a clean 2 or 4 (near the gamma = 0 curve).
"""
import argparse
import math

import numpy as np

from autores.phase_model import bifurcation_delta, count_transitions, sweep_partition


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-nu", type=int, default=24)
    ap.add_argument("--n-delta", type=int, default=61)
    args = ap.parse_args()

    nus = np.linspace(0.0, math.pi, args.n_nu, endpoint=False)
    deltas = np.linspace(-1.5, 1.5, args.n_delta)
    rows = sweep_partition(1.0, nus, deltas)
    by_cell = {(r.nu, r.delta): r.n_roots for r in rows}

    print("delta down, nu across [0, pi)")
    for d in deltas[::-1]:
        line = "".join({4: "4", 2: "2"}.get(by_cell[(float(n), float(d))], ".") for n in nus)
        print(f"{d:+.2f} {line}")

    print("\nfirst count changes along delta:")
    for nu, d, a, b in count_transitions(rows)[:8]:
        print(f"  nu={nu:.3f} delta={d:+.2f}: {a} -> {b}")
    print(f"\nupper boundary at nu=pi/6: delta = {bifurcation_delta(math.pi / 6):.6f}")


if __name__ == "__main__":
    main()
