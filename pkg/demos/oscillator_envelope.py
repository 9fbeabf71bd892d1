"""Fast oscillator against the slow amplitude model.

Integrates x'' + (1 + eps beta cos 2 zeta)(x - eps x**3) = eps cos zeta, whose
drive frequency zeta' = 1 - 2 vartheta t slowly falls, starting on the locked
branch.  The envelope is printed in units of kappa next to rho(tau).
"""
import argparse

import numpy as np

from autores.integrator import (KAPPA, SolverConfig, integrate, integrate_oscillator,
                                locked_start, oscillator_ic, reduced_params, vartheta_for)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=float, default=0.01)
    ap.add_argument("--tau-end", type=float, default=25.0)
    args = ap.parse_args()

    eps = args.epsilon
    vartheta = vartheta_for(1.0, eps)
    params = reduced_params(eps, vartheta)
    rho0, psi0 = locked_start(params)
    cfg = SolverConfig(rtol=1e-10, atol=1e-12, max_samples=20_000)
    osc = integrate_oscillator(eps, vartheta, oscillator_ic(rho0, psi0),
                               2 * KAPPA * args.tau_end / eps, cfg)
    slow = integrate(params, (0.0, rho0, psi0), args.tau_end, cfg)

    tau, env = osc.slow_time(), osc.envelope()
    print(f"vartheta = {vartheta:.4g}, start rho0 = {rho0:.5f}, psi0 = {psi0:.5f}")
    print(f"{'tau':>6} {'envelope':>10} {'rho':>10} {'rel':>9}")
    for T in np.linspace(1.0, args.tau_end, 13):
        i = np.searchsorted(tau, T)
        rho = np.interp(tau[i], slow.tau, slow.rho)
        print(f"{tau[i]:6.2f} {env[i]:10.5f} {rho:10.5f} {env[i] / rho - 1:+9.2e}")


if __name__ == "__main__":
    main()
