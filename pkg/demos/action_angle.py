"""Frequency of the closed orbits around a double root, up to the separatrix."""
import argparse
import math

from autores.averaging import (action_angle_table, double_root_constants, omega_expansion,
                               small_action_slope)
from autores.phase_model import ModelParams, StabilityClass, bifurcation_delta, find_roots


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nu", type=float, default=math.pi / 6)
    ap.add_argument("--levels", type=int, default=12)
    args = ap.parse_args()

    params = ModelParams.from_delta(-bifurcation_delta(args.nu), args.nu)
    root = next(r for r in find_roots(params) if r.stability_class is StabilityClass.CASE_II)
    c = double_root_constants(root, params)
    table = action_angle_table(root, params, n_levels=args.levels)

    print(f"phi = {c.phi:.5f}, omega2 = {c.omega2:.5f}, separatrix level I* = {c.i_star:.5f}")
    print(f"{'I/I*':>6} {'period':>10} {'omega':>9} {'two-term':>9}")
    for I, T, w in table.rows:
        print(f"{I / c.i_star:6.3f} {T:10.4f} {w:9.5f} {float(omega_expansion(root, params, I)):9.5f}")
    print(f"small-I slope d omega/dI = {small_action_slope(root, params):.5f}")


if __name__ == "__main__":
    main()
