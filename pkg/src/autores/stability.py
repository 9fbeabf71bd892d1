"""Stability of particular solutions: linearization, the (R, Psi) Hamiltonian
form of the system, Lyapunov functions and measured growth/decay rates.

Coordinates used throughout, all relative to a particular solution (rho*, psi*):

    deviation     r = rho - rho*,  p = psi - psi*
    ham form      R = tau**(1/4) r,  Psi = p
    Case II       r2 = tau**(3/8) R,  p2 = tau**(1/4) Psi,  s = 8/9 tau**(9/8)
    Case III      r3 = tau**(1/3) R,  p3 = tau**(1/6) Psi,  s = 12/13 tau**(13/12)
    rho-scaled    varrho = R,  varphi = tau**(1/4) Psi (II) or tau**(1/6) Psi (III)
"""

from __future__ import annotations

import cmath
import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .integrator import (AmplitudeUnderflow, DeviationTrajectory, SolverConfig, StepUnderflow,
                         integrate_deviation)
from .phase_model import ModelParams, PhaseRoot, StabilityClass, integral_p
from .series import AsymptoticSolution, NoRealBranch, build_solution, eval_solution

KAPPA = 0.5
D_STAR = 0.3
TAU0 = 100.0
ESCAPE_RADIUS = 0.06


def l_kappa(kappa: float = KAPPA) -> float:
    return (1.0 - kappa) / (1.0 + kappa)


class OutOfDomain(ValueError):
    """State lies outside the ball where a Lyapunov construction is defined."""


# ---------------------------------------------------------------------------
# linearization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearizationSample:
    tau: float
    matrix_entries: tuple[tuple[float, float], tuple[float, float]]
    eigvals: tuple[complex, complex]

    @property
    def trace(self) -> float:
        (a, _), (_, d) = self.matrix_entries
        return a + d

    @property
    def det(self) -> float:
        (a, b), (c, d) = self.matrix_entries
        return a * d - b * c


def linearization(params: ModelParams, sol: AsymptoticSolution, tau: float) -> LinearizationSample:
    """Jacobian of the amplitude/phase field along (rho*, psi*) and its eigenvalues."""
    if tau < 1.0:
        raise ValueError("tau must be >= 1")
    rho, psi = (float(v) for v in eval_solution(sol, tau))
    mu = float(params.mu(tau))
    arg = 2.0 * psi + params.nu
    a = -mu * math.sin(arg)
    b = math.cos(psi) - 2.0 * rho * mu * math.cos(arg)
    c = 2.0 * rho - math.cos(psi) / rho**2
    d = 2.0 * mu * math.sin(arg) - math.sin(psi) / rho
    half_tr = 0.5 * (a + d)
    disc = cmath.sqrt(half_tr * half_tr - (a * d - b * c))
    return LinearizationSample(float(tau), ((a, b), (c, d)), (half_tr + disc, half_tr - disc))


def leading_eigen_modulus(params: ModelParams, sol: AsymptoticSolution, tau) -> np.ndarray:
    """Case-specific leading term of |z(tau)|."""
    lam = params.lam
    derivs = sol.root.p_derivs
    tau = np.asarray(tau, dtype=float)
    m = sol.multiplicity
    if m == 1:
        return (4.0 * lam * tau) ** 0.25 * math.sqrt(abs(derivs[0]))
    if m == 2:
        return (4.0 * lam) ** 0.25 * tau**0.125 * math.sqrt(abs(sol.psi1 * derivs[1]))
    return lam**0.25 * tau ** (1.0 / 12.0) * abs(sol.psi1) * math.sqrt(abs(derivs[2]))


# ---------------------------------------------------------------------------
# Hamiltonian form
# ---------------------------------------------------------------------------


def _star(params, sol, tau):
    rho, psi = eval_solution(sol, tau)
    return np.asarray(rho, float), np.asarray(psi, float), np.asarray(params.mu(tau), float)


def _h_closed(R, Psi, tau, rho, psi, mu, nu):
    arg = 2.0 * psi + nu
    cos_arg = np.cos(arg)
    cos_shift = np.cos(arg + 2.0 * Psi)
    q = tau**0.25
    return (rho * R * R / q
            + q * (np.cos(psi + Psi) - np.cos(psi) + Psi * np.sin(psi))
            + q * 0.5 * rho * mu * (cos_arg - cos_shift - 2.0 * Psi * np.sin(arg))
            + 0.5 * mu * R * (cos_arg - cos_shift)
            + R**3 / (3.0 * np.sqrt(tau)) - R * Psi / (4.0 * tau))


def _f_closed(R, Psi, tau, rho, psi, mu, nu):
    arg = 2.0 * psi + nu
    amp = rho + R / tau**0.25
    if np.any(amp <= 0.0):
        raise AmplitudeUnderflow("rho* + tau**(-1/4) R is not positive")
    return (np.cos(psi + Psi) / amp - np.cos(psi) / rho
            + 0.5 * mu * (np.cos(arg) - np.cos(arg + 2.0 * Psi)) + Psi / (4.0 * tau))


def hamiltonian_h(params: ModelParams, sol: AsymptoticSolution, R, Psi, tau):
    """H(R, Psi, tau) of the Hamiltonian form, evaluated exactly."""
    rho, psi, mu = _star(params, sol, tau)
    if np.any(rho + np.asarray(R) / np.asarray(tau, float) ** 0.25 <= 0.0):
        raise AmplitudeUnderflow("rho* + tau**(-1/4) R is not positive")
    out = _h_closed(np.asarray(R, float), np.asarray(Psi, float), np.asarray(tau, float),
                    rho, psi, mu, params.nu)
    return float(out) if np.ndim(out) == 0 else out


def forcing_f(params: ModelParams, sol: AsymptoticSolution, R, Psi, tau):
    """Non-Hamiltonian part F(R, Psi, tau), evaluated exactly."""
    rho, psi, mu = _star(params, sol, tau)
    out = _f_closed(np.asarray(R, float), np.asarray(Psi, float), np.asarray(tau, float),
                    rho, psi, mu, params.nu)
    return float(out) if np.ndim(out) == 0 else out


def ham_field(params: ModelParams, sol: AsymptoticSolution, R: float, Psi: float, tau: float,
              step: float = 1e-6) -> tuple[float, float]:
    """(-dH/dPsi, dH/dR + F) by central differences of the closed forms."""
    dh_dpsi = (hamiltonian_h(params, sol, R, Psi + step, tau)
               - hamiltonian_h(params, sol, R, Psi - step, tau)) / (2 * step)
    dh_dr = (hamiltonian_h(params, sol, R + step, Psi, tau)
             - hamiltonian_h(params, sol, R - step, Psi, tau)) / (2 * step)
    return -dh_dpsi, dh_dr + forcing_f(params, sol, R, Psi, tau)


# ---------------------------------------------------------------------------
# Lyapunov functions
# ---------------------------------------------------------------------------


class LyapunovKind(str, enum.Enum):
    V1 = "V1"
    U2 = "U2"
    U3 = "U3"
    V2 = "V2"
    V3 = "V3"


@dataclass(frozen=True)
class _Scaling:
    """Scaled state (x, y) = (tau**a R, tau**b Psi) and the time variable."""

    a: float
    b: float
    s_power: float  # s = tau**s_power / s_power; 0 means time is tau itself


_SCALINGS = {
    LyapunovKind.V1: _Scaling(0.0, 0.0, 0.0),
    LyapunovKind.U2: _Scaling(3 / 8, 1 / 4, 9 / 8),
    LyapunovKind.U3: _Scaling(1 / 3, 1 / 6, 13 / 12),
    LyapunovKind.V2: _Scaling(0.0, 1 / 4, 0.0),
    LyapunovKind.V3: _Scaling(0.0, 1 / 6, 0.0),
}

_REQUIRED_MULTIPLICITY = {LyapunovKind.V1: 1, LyapunovKind.U2: 2, LyapunovKind.V2: 2,
                          LyapunovKind.U3: 3, LyapunovKind.V3: 3}


def omega_squared(sol: AsymptoticSolution) -> float:
    """omega_1**2 = P', omega_2**2 = -phi P'', omega_3**2 = chi**2 P'''/2."""
    derivs = sol.root.p_derivs
    m = sol.multiplicity
    if m == 1:
        return derivs[0]
    if m == 2:
        return abs(sol.psi1) * -derivs[1]
    return sol.psi1**2 * derivs[2] / 2.0


def time_variable(kind: LyapunovKind, tau):
    sc = _SCALINGS[LyapunovKind(kind)]
    tau = np.asarray(tau, float)
    return tau if sc.s_power == 0.0 else tau**sc.s_power / sc.s_power


def scaled_state(kind: LyapunovKind, tau, r, p):
    """Deviation (r, p) mapped to the scaled variables of the construction."""
    sc = _SCALINGS[LyapunovKind(kind)]
    tau = np.asarray(tau, float)
    R = tau**0.25 * np.asarray(r, float)
    return tau**sc.a * R, tau**sc.b * np.asarray(p, float)


def norm_w(kind: LyapunovKind, params: ModelParams, sol: AsymptoticSolution, tau, x, y):
    """w1/w2/w3 for V1/U2/U3, and the tau-weighted W2/W3 for V2/V3."""
    kind = LyapunovKind(kind)
    om2 = omega_squared(sol)
    weight = {LyapunovKind.V2: np.asarray(tau, float) ** -0.75,
              LyapunovKind.V3: np.asarray(tau, float) ** (-2.0 / 3.0)}.get(kind, 1.0)
    return np.sqrt(math.sqrt(params.lam) * np.square(x) + weight * om2 * np.square(y) / 2.0)


def _lyapunov_values(kind, params, sol, tau, r, p):
    kind = LyapunovKind(kind)
    tau = np.asarray(tau, float)
    rho, psi, mu = _star(params, sol, tau)
    R = tau**0.25 * np.asarray(r, float)
    Psi = np.asarray(p, float)
    H = _h_closed(R, Psi, tau, rho, psi, mu, params.nu)
    x, y = scaled_state(kind, tau, r, p)
    sqrt_lam = math.sqrt(params.lam)
    if kind is LyapunovKind.V1:
        f2 = integral_p(sol.sigma, Psi, params.delta, params.nu)
        return (tau**-0.25 * H + tau**-0.75 * (2.0 * sqrt_lam * R**3 / 3.0 + R * f2)
                - tau**-1.25 * R * Psi / 8.0)
    if kind is LyapunovKind.U2:
        s = time_variable(kind, tau)
        return np.sqrt(tau) * H - x * y / (3.0 * s) + x * y / (6.0 * s)
    if kind is LyapunovKind.U3:
        s = time_variable(kind, tau)
        return tau ** (5.0 / 12.0) * H - 4.0 * x * y / (13.0 * s) + 3.0 * x * y / (26.0 * s)
    if kind is LyapunovKind.V2:
        v1 = -3.0 * x * y / 16.0 - math.cos(sol.sigma) * x * x / (2.0 * sqrt_lam)
        return tau**-0.25 * H + tau**-1.5 * v1
    # V3: tau**(-5/12) * tau**(1/6) H
    return tau**-0.25 * H - tau ** (-17.0 / 12.0) * 5.0 * x * y / 24.0


def _check_kind(kind, sol):
    kind = LyapunovKind(kind)
    need = _REQUIRED_MULTIPLICITY[kind]
    if sol.multiplicity != need:
        raise ValueError(f"{kind.value} is built for roots of multiplicity {need}, "
                         f"got {sol.multiplicity}")
    return kind


def lyapunov_eval(which, params: ModelParams, sol: AsymptoticSolution,
                  state: tuple[float, float], time: float, d_star: float = D_STAR) -> float:
    """Value of the selected Lyapunov function at (rho, psi) = state, tau = time."""
    kind = _check_kind(which, sol)
    rho_s, psi_s = (float(v) for v in eval_solution(sol, time))
    r, p = state[0] - rho_s, state[1] - psi_s
    x, y = scaled_state(kind, time, r, p)
    if math.hypot(float(x), float(y)) > d_star:
        raise OutOfDomain(f"|({float(x):.3g}, {float(y):.3g})| exceeds d*={d_star}")
    return float(_lyapunov_values(kind, params, sol, time, r, p))


@dataclass(frozen=True)
class LyapunovTrace:
    which: LyapunovKind
    samples: np.ndarray  # columns: time, value, norm_w
    fitted_exponent: float

    def to_csv(self) -> str:
        lines = ["time,value,norm_w"]
        lines += [",".join(f"{v:.17g}" for v in row) for row in self.samples]
        return "\n".join(lines) + "\n"


def lyapunov_trace(which, params: ModelParams, sol: AsymptoticSolution,
                   dev: DeviationTrajectory, d_star: float = D_STAR) -> LyapunovTrace:
    """Lyapunov function along a deviation trajectory, cut at the first exit from d*."""
    kind = _check_kind(which, sol)
    x, y = scaled_state(kind, dev.tau, dev.r, dev.p)
    inside = np.hypot(x, y) <= d_star
    n = int(np.argmin(inside)) if not inside.all() else inside.size
    tau, r, p = dev.tau[:n], dev.r[:n], dev.p[:n]
    values = _lyapunov_values(kind, params, sol, tau, r, p)
    w = norm_w(kind, params, sol, tau, x[:n], y[:n])
    t = time_variable(kind, tau)
    good = np.abs(values) > 0
    exponent = (float(np.polyfit(np.log(t[good]), np.log(np.abs(values[good])), 1)[0])
                if good.sum() >= 2 else math.nan)
    return LyapunovTrace(kind, np.column_stack([t, values, w]), exponent)


# ---------------------------------------------------------------------------
# measured stability
# ---------------------------------------------------------------------------


class StabilityVerdict(str, enum.Enum):
    ASYMPTOTICALLY_STABLE = "AsymptoticallyStable"
    UNSTABLE = "Unstable"
    PARTIALLY_RHO_STABLE = "PartiallyRhoStable"


class _Regime(str, enum.Enum):
    DECAY = "decay"            # Case I: w1 decays
    EXPONENTIAL = "exponential"  # real eigenvalues: saddle-type escape
    GROWTH2 = "growth2"        # Case II, psi1 = -phi: w2 grows like a power of s
    GROWTH3 = "growth3"        # Case III, P''' > 0: w3 grows like a power of s


def _regime(root: PhaseRoot, branch: int) -> _Regime:
    cls = root.stability_class
    if cls is StabilityClass.STABLE_CASE_I:
        return _Regime.DECAY
    if cls is StabilityClass.CASE_II:
        return _Regime.GROWTH2 if branch < 0 else _Regime.EXPONENTIAL
    if cls is StabilityClass.CASE_III:
        return _Regime.GROWTH3
    if cls is StabilityClass.UNSTABLE_DOUBLE:
        raise NoRealBranch("double root with P'' > 0 has no real particular solution")
    return _Regime.EXPONENTIAL


_REGIME_KIND = {_Regime.DECAY: LyapunovKind.V1, _Regime.EXPONENTIAL: LyapunovKind.V1,
                _Regime.GROWTH2: LyapunovKind.U2, _Regime.GROWTH3: LyapunovKind.U3}


def theory_rate(regime: _Regime, params: ModelParams, sol: AsymptoticSolution,
                kappa: float = KAPPA) -> float:
    lk = l_kappa(kappa)
    if regime is _Regime.DECAY:
        return lk / 8.0
    if regime is _Regime.GROWTH2:
        return lk / 6.0
    if regime is _Regime.GROWTH3:
        return 3.0 * lk / 26.0
    # coefficient K of the leading real eigenvalue K tau**e
    return float(leading_eigen_modulus(params, sol, 1.0))


_EIGEN_POWER = {1: 0.25, 2: 0.125, 3: 1.0 / 12.0}


@dataclass(frozen=True)
class SampleOutcome:
    rate: float
    escaped: bool
    max_rho_dev: float
    error: str | None = None
    # share of sampled steps on which V1 did not increase (Case I only)
    monotone_fraction: float = math.nan


def _monotone_fraction(params, sol, dev: DeviationTrajectory, tau0: float) -> float:
    keep = dev.tau >= tau0
    tr = _lyapunov_values(LyapunovKind.V1, params, sol, dev.tau[keep], dev.r[keep], dev.p[keep])
    dv = np.diff(np.asarray(tr))
    return float(np.mean(dv <= 0.0)) if dv.size else math.nan


def _escape_weights(regime, params, sol, radius):
    if regime in (_Regime.DECAY, _Regime.EXPONENTIAL):
        return (radius, 1.0, 0.25, 1.0, 0.0)
    a, b = _SCALINGS[_REGIME_KIND[regime]].a, _SCALINGS[_REGIME_KIND[regime]].b
    return (radius, params.lam**0.25, 0.25 + a, math.sqrt(omega_squared(sol) / 2.0), b)


def _fit_rate(regime, params, sol, dev: DeviationTrajectory, tau0: float) -> float:
    kind = _REGIME_KIND[regime]
    x, y = scaled_state(kind, dev.tau, dev.r, dev.p)
    keep = (dev.tau >= tau0) & (np.hypot(x, y) > 0)
    tau, x, y = dev.tau[keep], x[keep], y[keep]
    if tau.size < 4:
        return math.nan
    if regime is _Regime.EXPONENTIAL:
        e = _EIGEN_POWER[sol.multiplicity]
        d = np.log(np.hypot(x, y))
        later = tau >= tau[0] + 0.5 * (tau[-1] - tau[0])
        return float(np.polyfit(tau[later] ** (1 + e) / (1 + e), d[later], 1)[0])
    w = norm_w(kind, params, sol, tau, x, y)
    t = time_variable(kind, tau)
    slope = float(np.polyfit(np.log(t), np.log(w), 1)[0])
    return -slope if regime is _Regime.DECAY else slope


def _run_sample(args) -> SampleOutcome:
    params, sol, regime, start, tau0, horizon, cfg, escape = args
    try:
        dev = integrate_deviation(params, sol, (tau0, *start), horizon, cfg, escape=escape)
    except (AmplitudeUnderflow, StepUnderflow) as exc:
        return SampleOutcome(math.nan, True, math.nan, f"{type(exc).__name__}: {exc}")
    rate = _fit_rate(regime, params, sol, dev, tau0)
    mono = _monotone_fraction(params, sol, dev, tau0) if regime is _Regime.DECAY else math.nan
    return SampleOutcome(rate, dev.escaped, float(np.max(np.abs(dev.r))), None, mono)


@dataclass(frozen=True)
class StabilityReport:
    root: PhaseRoot
    branch: int
    verdict: StabilityVerdict
    measured_rate: float
    theory_rate: float
    horizon: float
    n_samples: int
    n_escaped: int
    tau0: float
    radius: float
    escape_radius: float
    kappa: float
    sample_rates: tuple[float, ...] = ()
    sensitivity_rate: float | None = None
    errors: tuple[str, ...] = field(default_factory=tuple)
    monotone_fraction: float = math.nan

    def to_dict(self) -> dict:
        return {
            "sigma": self.root.sigma, "multiplicity": self.root.multiplicity,
            "branch": self.branch, "verdict": self.verdict.value,
            "measured_rate": self.measured_rate, "theory_rate": self.theory_rate,
            "n_samples": self.n_samples, "horizon": self.horizon, "n_escaped": self.n_escaped,
            "tau0": self.tau0, "radius": self.radius, "escape_radius": self.escape_radius,
            "kappa": self.kappa, "sample_rates": list(self.sample_rates),
            "sensitivity_rate": self.sensitivity_rate, "errors": list(self.errors),
            "monotone_fraction": (self.monotone_fraction
                                  if math.isfinite(self.monotone_fraction) else None),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _starts(regime, rng, radius, n, tau0):
    """Random points on the circle of given radius in the scaled variables, as deviations."""
    kind = _REGIME_KIND[regime]
    sc = _SCALINGS[kind]
    angles = rng.uniform(0.0, 2.0 * math.pi, n)
    out = []
    for a in angles:
        x, y = radius * math.cos(a), radius * math.sin(a)
        R = x * tau0**-sc.a
        out.append((R * tau0**-0.25, y * tau0**-sc.b))
    return out


def _measure(params, sol, regime, starts, tau0, horizon, cfg, escape, pmap):
    jobs = [(params, sol, regime, st, tau0, horizon, cfg, escape) for st in starts]
    return list(pmap(_run_sample, jobs))


def measure_stability(params: ModelParams, root: PhaseRoot, branch: int = -1,
                      radius: float = D_STAR / 10, n_samples: int = 8, horizon: float = 1e4,
                      cfg: SolverConfig = SolverConfig(rtol=1e-8, atol=1e-11, stride=4),
                      tau0: float = TAU0, escape_radius: float = ESCAPE_RADIUS,
                      rho_tol: float = 0.05, kappa: float = KAPPA, seed: int = 0,
                      sensitivity: bool = False, n_orders: int = 6, pmap=map) -> StabilityReport:
    """Integrate perturbed starts around the particular solution and fit the rate.

    Case I: decay exponent of w1 in tau.  Real-eigenvalue cases: coefficient K
    of log d ~ K tau**(1+e)/(1+e).  Case II (psi1 = -phi) and Case III:
    growth exponent of w2/w3 in s, together with the largest |rho - rho*|.
    ``horizon`` is the final tau.
    """
    if radius > D_STAR / 10 + 1e-15:
        raise ValueError(f"radius must not exceed d*/10 = {D_STAR / 10}")
    regime = _regime(root, branch)
    sol = build_solution(params, root, branch=branch, n_orders=n_orders)
    escape = (None if regime is _Regime.DECAY
              else _escape_weights(regime, params, sol, escape_radius))
    rng = np.random.default_rng(seed)
    starts = _starts(regime, rng, radius, n_samples, tau0)
    outcomes = _measure(params, sol, regime, starts, tau0, horizon, cfg, escape, pmap)

    rates = [o.rate for o in outcomes if math.isfinite(o.rate)]
    errors = tuple(o.error for o in outcomes if o.error)
    n_escaped = sum(o.escaped for o in outcomes)
    theory = theory_rate(regime, params, sol, kappa)
    if regime is _Regime.DECAY:
        measured = min(rates) if rates else math.nan
        ok = measured >= 0.9 * theory and n_escaped == 0
        verdict = StabilityVerdict.ASYMPTOTICALLY_STABLE if ok else StabilityVerdict.UNSTABLE
    elif regime is _Regime.EXPONENTIAL:
        measured = float(np.median(rates)) if rates else math.nan
        verdict = StabilityVerdict.UNSTABLE
    else:
        measured = min(rates) if rates else math.nan
        rho_dev = max((o.max_rho_dev for o in outcomes if math.isfinite(o.max_rho_dev)),
                      default=math.inf)
        verdict = (StabilityVerdict.PARTIALLY_RHO_STABLE if rho_dev < rho_tol
                   else StabilityVerdict.UNSTABLE)

    sens = None
    if sensitivity and regime is not _Regime.EXPONENTIAL:
        tau1 = 4.0 * tau0
        sub = _starts(regime, np.random.default_rng(seed), radius, min(n_samples, 4), tau1)
        extra = _measure(params, sol, regime, sub, tau1, horizon * 4.0, cfg, escape, pmap)
        finite = [o.rate for o in extra if math.isfinite(o.rate)]
        sens = min(finite) if finite else math.nan

    monos = [o.monotone_fraction for o in outcomes if math.isfinite(o.monotone_fraction)]
    return StabilityReport(root, branch, verdict, measured, theory, float(horizon), n_samples,
                           n_escaped, tau0, radius, escape_radius, kappa,
                           tuple(o.rate for o in outcomes), sens, errors,
                           min(monos) if monos else math.nan)


# ---------------------------------------------------------------------------
# partial rho-stability
# ---------------------------------------------------------------------------

RHO_CHECK_CONFIG = SolverConfig(rtol=1e-7, atol=1e-10, stride=1000, max_samples=4096)
_HORIZON_EXPONENT = {2: 8.0 / 3.0, 3: 3.0}


@dataclass(frozen=True)
class RhoStabilityResult:
    epsilon: float
    tau0: float
    tau_end: float
    max_rho_dev: float
    held: bool
    exit_tau: float | None
    steps: int


def rho_stability_check(params: ModelParams, sol: AsymptoticSolution, epsilon: float,
                        tau0: float = 10.0, horizon_exponent: float | None = None,
                        start_fraction: float = 0.1, start_angle: float = 0.0,
                        cfg: SolverConfig = RHO_CHECK_CONFIG) -> RhoStabilityResult:
    """Does |rho - rho*| stay below epsilon for 1 <= tau/tau0 <= epsilon**(-exponent)?

    The run starts at distance start_fraction*epsilon in the (r, p) plane and
    stops as soon as |r| reaches epsilon.
    """
    if horizon_exponent is None:
        horizon_exponent = _HORIZON_EXPONENT.get(sol.multiplicity, 2.0)
    tau_end = tau0 * epsilon ** -horizon_exponent
    d = start_fraction * epsilon
    start = (tau0, d * math.cos(start_angle), d * math.sin(start_angle))
    dev = integrate_deviation(params, sol, start, tau_end, cfg, escape=(epsilon, 1.0, 0.0, 0.0, 0.0))
    exit_tau = float(dev.tau[-1]) if dev.escaped else None
    return RhoStabilityResult(epsilon, tau0, tau_end, float(np.max(np.abs(dev.r))),
                              not dev.escaped, exit_tau, dev.solver_stats.steps)
