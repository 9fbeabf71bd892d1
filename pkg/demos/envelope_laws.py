"""Decay and phase growth of small oscillations about each locked solution."""
import argparse
import math

from autores.averaging import envelope_run
from autores.integrator import SolverConfig
from autores.phase_model import ModelParams, StabilityClass, bifurcation_delta, find_roots
from autores.series import build_solution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=float, default=0.01)
    ap.add_argument("--tau-end", type=float, default=1e4)
    args = ap.parse_args()

    nu = math.pi / 6
    setups = [
        ("simple", ModelParams.from_delta(0.2, 0.0), StabilityClass.STABLE_CASE_I, 1, 6),
        ("double", ModelParams.from_delta(-bifurcation_delta(nu), nu), StabilityClass.CASE_II, -1, 12),
        ("triple", ModelParams.from_delta(-0.5, 0.0), StabilityClass.CASE_III, 1, 12),
    ]
    cfg = SolverConfig(rtol=1e-8, atol=1e-12, max_samples=2_000_000)
    print(f"{'root':>7} {'amp exp':>9} {'law':>8} {'phase exp':>10} {'law':>7} "
          f"{'phase coeff':>12} {'law':>7}")
    for name, params, cls, branch, orders in setups:
        root = next(r for r in find_roots(params) if r.stability_class is cls)
        sol = build_solution(params, root, branch=branch, n_orders=orders)
        run = envelope_run(params, sol, args.epsilon, tau_end=args.tau_end, cfg=cfg)
        f = run.fit
        print(f"{name:>7} {f.amp_exponent:9.4f} {run.predicted_amp_exponent:8.4f} "
              f"{f.phase_exponent:10.4f} {run.predicted_phase_exponent:7.4f} "
              f"{f.phase_coeff:12.4f} {run.predicted_phase_coeff:7.4f}")


if __name__ == "__main__":
    main()
