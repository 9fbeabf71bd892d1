"""Adaptive integration of the amplitude/phase system, its deviation form
around a particular solution, and the fast oscillator it averages.

The stepping is an embedded Dormand-Prince 5(4) pair compiled with numba
(see ``_dopri``).  Each right-hand side here is a small jitted kernel reading
its parameters from one flat float64 array.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit

from . import _dopri
from .phase_model import AsymptoticSeries, ModelParams, Regularized, StabilityClass, find_roots
from .series import AsymptoticSolution, build_solution, eval_solution

KAPPA = (4.0 / 3.0) ** (1.0 / 3.0)


class AmplitudeUnderflow(RuntimeError):
    """rho fell to the guard value, where the 1/rho term blows up."""

    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


class StepUnderflow(RuntimeError):
    """The adaptive step fell below 1e-12."""

    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-9
    atol: float = 1e-11
    h_init: float = 1e-3
    h_max: float = math.inf
    guard_rho_min: float = 1e-6
    # keep every stride-th accepted step; the stride doubles when the buffer fills
    stride: int = 1
    max_samples: int = 200_000
    max_steps: int = 2_000_000_000

    def __post_init__(self):
        for name in ("rtol", "atol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2], got {v}")
        if not (self.h_init > 0 and self.h_max > 0 and self.guard_rho_min > 0):
            raise ValueError("h_init, h_max and guard_rho_min must be positive")
        if self.stride < 1 or self.max_samples < 2:
            raise ValueError("stride >= 1 and max_samples >= 2 required")


@dataclass(frozen=True)
class SolverStats:
    steps: int
    rejected_steps: int
    max_error_estimate: float
    status: str = "ok"


@dataclass(frozen=True)
class Trajectory:
    tau: np.ndarray
    rho: np.ndarray
    psi: np.ndarray
    solver_stats: SolverStats

    @property
    def samples(self) -> np.ndarray:
        return np.column_stack([self.tau, self.rho, self.psi])

    def __len__(self):
        return self.tau.size


@dataclass(frozen=True)
class DeviationTrajectory:
    """Deviation (r, p) = (rho - rho*, psi - psi*) from a particular solution."""

    tau: np.ndarray
    r: np.ndarray
    p: np.ndarray
    rho_star: np.ndarray
    psi_star: np.ndarray
    solver_stats: SolverStats
    escaped: bool = False

    def as_trajectory(self) -> Trajectory:
        return Trajectory(self.tau, self.rho_star + self.r, self.psi_star + self.p,
                          self.solver_stats)


class Verdict(str, enum.Enum):
    CAPTURED = "Captured"
    NOT_CAPTURED = "NotCaptured"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class CaptureVerdict:
    verdict: Verdict
    rho_ratio_end: float
    psi_winding: float


# ---------------------------------------------------------------------------
# jitted kernels
# ---------------------------------------------------------------------------

# MS parameter layout: lam, nu, mu_kind, shift, guard, direction, n_mu, mu...
_MS_HEADER = 7


@njit(nogil=True)
def _mu_of(tau, p, base, kind, shift, n_mu):
    if kind == 1.0:
        return p[base] / np.sqrt(shift + tau)
    inv = 1.0 / tau
    acc = 0.0
    for k in range(n_mu - 1, -1, -1):
        acc = acc * inv + p[base + k]
    return acc / np.sqrt(tau)


@njit(nogil=True)
def _ms_rhs(t, y, p, out):
    direction = p[5]
    tau = direction * t
    rho, psi = y[0], y[1]
    mu = _mu_of(tau, p, _MS_HEADER, p[2], p[3], int(p[6]))
    arg = 2.0 * psi + p[1]
    out[0] = direction * (np.sin(psi) - mu * rho * np.sin(arg))
    out[1] = direction * (rho * rho - p[0] * tau - mu * np.cos(arg) + np.cos(psi) / rho)


@njit(nogil=True)
def _ms_event(t, y, p):
    if y[0] <= p[4]:
        return 1
    return 0


# deviation layout: lam, nu, mu_kind, shift, guard, q, n_mu, n_rt, n_psi,
#   esc_radius, esc_a, esc_alpha, esc_b, esc_beta, mu..., rho_tilde..., psi...
_DEV_HEADER = 14


@njit(nogil=True)
def _star(tau, p):
    q = p[5]
    n_mu, n_rt, n_psi = int(p[6]), int(p[7]), int(p[8])
    b_rt = _DEV_HEADER + n_mu
    b_psi = b_rt + n_rt
    m = int(q) // 2
    z = tau ** (-1.0 / q)
    zq = 1.0 / tau
    # rho* - sqrt(lam tau) starts at z**(1-m); both polynomials are evaluated in z
    rt = 0.0
    drt = 0.0
    for k in range(n_rt - 1, -1, -1):
        c = p[b_rt + k]
        rt = rt * z + c
        drt = drt * z + c * (-(1 - m + k) / q)
    zoff = z ** (1 - m)
    rt *= zoff
    drt *= zoff * zq
    ps = 0.0
    dps = 0.0
    for k in range(n_psi - 1, -1, -1):
        c = p[b_psi + k]
        ps = ps * z + c
        dps = dps * z + c * (-k / q)
    dps *= zq
    return rt, drt, ps, dps


@njit(nogil=True)
def _dev_rhs(t, y, p, out):
    tau = t
    lam, nu = p[0], p[1]
    mu = _mu_of(tau, p, _DEV_HEADER, p[2], p[3], int(p[6]))
    rt, drt, ps, dps = _star(tau, p)
    root = np.sqrt(lam * tau)
    d_root = 0.5 * np.sqrt(lam / tau)
    r, pp = y[0], y[1]
    excess = rt + r  # rho - sqrt(lam tau)
    rho = root + excess
    psi = ps + pp
    arg = 2.0 * psi + nu
    out[0] = np.sin(psi) - mu * rho * np.sin(arg) - (d_root + drt)
    out[1] = excess * (2.0 * root + excess) - mu * np.cos(arg) + np.cos(psi) / rho - dps


@njit(nogil=True)
def _dev_event(t, y, p):
    rt, drt, ps, dps = _star(t, p)
    if np.sqrt(p[0] * t) + rt + y[0] <= p[4]:
        return 1
    radius = p[9]
    if radius > 0.0:
        a = p[10] * t ** p[11] * y[0]
        b = p[12] * t ** p[13] * y[1]
        if a * a + b * b > radius * radius:
            return 5
    return 0


@njit(nogil=True)
def _osc_rhs(t, y, p, out):
    eps, vartheta = p[0], p[1]
    x, v = y[0], y[1]
    zeta = t - vartheta * t * t
    beta = 1.0 / np.sqrt(1.0 + eps * t)
    out[0] = v
    out[1] = -(1.0 + eps * beta * np.cos(2.0 * zeta)) * (x - eps * x ** 3) + eps * np.cos(zeta)


@njit(nogil=True)
def _no_event(t, y, p):
    return 0


_SOLVERS: dict[str, Callable] = {}


def _solver(name: str):
    if name not in _SOLVERS:
        rhs, event = {"ms": (_ms_rhs, _ms_event), "dev": (_dev_rhs, _dev_event),
                      "osc": (_osc_rhs, _no_event)}[name]
        _SOLVERS[name] = _dopri.make_solver(rhs, event)
    return _SOLVERS[name]


def _run(name, t0, y0, t_end, p, cfg: SolverConfig, h_fixed=0.0):
    solve = _solver(name)
    return solve(float(t0), np.asarray(y0, dtype=float), float(t_end), p,
                 cfg.rtol, cfg.atol, cfg.h_init, cfg.h_max, float(h_fixed),
                 cfg.stride, cfg.max_samples, cfg.max_steps)


_STATUS = {0: "ok", 1: "amplitude_underflow", 2: "step_underflow", 3: "max_steps",
           4: "non_finite", 5: "escaped"}


def _stats(status, steps, rejected, max_err) -> SolverStats:
    return SolverStats(int(steps), int(rejected), float(max_err), _STATUS[int(status)])


# ---------------------------------------------------------------------------
# parameter packing
# ---------------------------------------------------------------------------


def _mu_block(mu) -> tuple[float, float, list[float]]:
    if isinstance(mu, Regularized):
        return 1.0, mu.shift, [mu.mu0]
    return 0.0, 0.0, list(mu.mu_coeffs)


def _pack_ms(params: ModelParams, guard: float, direction: float = 1.0) -> np.ndarray:
    kind, shift, mu = _mu_block(params.mu)
    return np.array([params.lam, params.nu, kind, shift, guard, direction, len(mu), *mu])


def _pack_dev(params: ModelParams, sol: AsymptoticSolution, guard: float,
              escape: tuple | None) -> np.ndarray:
    kind, shift, mu = _mu_block(params.mu)
    rho_c = [float(c) for c in sol.rho_series.coeffs]
    rho_tilde = rho_c[1:] or [0.0]
    psi_c = [float(c) for c in sol.psi_series.coeffs]
    esc = escape if escape is not None else (0.0, 0.0, 0.0, 0.0, 0.0)
    head = [params.lam, params.nu, kind, shift, guard, sol.q, len(mu), len(rho_tilde),
            len(psi_c), *esc]
    return np.array(head + mu + rho_tilde + psi_c, dtype=float)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def rhs_ms(tau: float, rho: float, psi: float, params: ModelParams,
           guard_rho_min: float = SolverConfig.guard_rho_min) -> tuple[float, float]:
    """(drho/dtau, dpsi/dtau) of the amplitude/phase system."""
    if rho <= guard_rho_min:
        raise AmplitudeUnderflow(f"rho={rho:g} at tau={tau:g} is below the guard {guard_rho_min:g}")
    mu = float(params.mu(tau))
    arg = 2.0 * psi + params.nu
    drho = math.sin(psi) - mu * rho * math.sin(arg)
    dpsi = rho * rho - params.lam * tau - mu * math.cos(arg) + math.cos(psi) / rho
    return drho, dpsi


def _check_start(params: ModelParams, tau0: float):
    if isinstance(params.mu, AsymptoticSeries) and tau0 < 1.0:
        raise ValueError("AsymptoticSeries pump profiles are singular at tau=0; start at tau0 >= 1 "
                         "or use a Regularized profile")


def _raise_for(status, msg_traj, where: str):
    if status == 1:
        raise AmplitudeUnderflow(f"amplitude reached the guard {where}", msg_traj)
    if status == 2:
        raise StepUnderflow(f"step size fell below 1e-12 {where}", msg_traj)
    if status == 3:
        raise StepUnderflow(f"step budget exhausted {where}", msg_traj)
    if status == 4:
        raise StepUnderflow(f"non-finite state {where}", msg_traj)


def integrate(params: ModelParams, ic: tuple[float, float, float], tau_end: float,
              cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """Integrate from (tau0, rho0, psi0) to tau_end; psi is kept unwrapped."""
    tau0, rho0, psi0 = map(float, ic)
    if not tau_end > tau0 >= 0.0:
        raise ValueError("need tau_end > tau0 >= 0")
    if not rho0 > cfg.guard_rho_min:
        raise ValueError("rho0 must exceed guard_rho_min")
    _check_start(params, tau0)
    p = _pack_ms(params, cfg.guard_rho_min)
    status, ts, ys, steps, rej, err = _run("ms", tau0, (rho0, psi0), tau_end, p, cfg)
    traj = Trajectory(ts, ys[:, 0], ys[:, 1], _stats(status, steps, rej, err))
    _raise_for(status, traj, f"near tau={ts[-1]:.6g}")
    return traj


def integrate_backward(params: ModelParams, state: tuple[float, float, float], tau_to: float,
                       cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """Integrate from (tau1, rho1, psi1) back to tau_to < tau1 with the sign-flipped field."""
    tau1, rho1, psi1 = map(float, state)
    if not tau1 > tau_to >= 0.0:
        raise ValueError("need tau1 > tau_to >= 0")
    _check_start(params, tau_to)
    p = _pack_ms(params, cfg.guard_rho_min, direction=-1.0)
    status, ts, ys, steps, rej, err = _run("ms", -tau1, (rho1, psi1), -tau_to, p, cfg)
    traj = Trajectory(-ts, ys[:, 0], ys[:, 1], _stats(status, steps, rej, err))
    _raise_for(status, traj, f"near tau={-ts[-1]:.6g}")
    return traj


def integrate_deviation(params: ModelParams, sol: AsymptoticSolution,
                        ic: tuple[float, float, float], tau_end: float,
                        cfg: SolverConfig = SolverConfig(),
                        escape: tuple[float, float, float, float, float] | None = None
                        ) -> DeviationTrajectory:
    """Integrate the exact system for (r, p) = (rho - rho*, psi - psi*).

    rho* and psi* are the truncated series of ``sol``; their residual enters
    as forcing, so nothing is neglected.  Working with the deviation avoids
    the cancellation in rho**2 - lam*tau.  ``escape`` = (radius, a, alpha, b,
    beta) stops the run once (a tau**alpha r)**2 + (b tau**beta p)**2 > radius**2.
    """
    tau0, r0, p0 = map(float, ic)
    if not tau_end > tau0 > 0.0:
        raise ValueError("need tau_end > tau0 > 0")
    p = _pack_dev(params, sol, cfg.guard_rho_min, escape)
    status, ts, ys, steps, rej, err = _run("dev", tau0, (r0, p0), tau_end, p, cfg)
    rho_s, psi_s = eval_solution(sol, ts)
    traj = DeviationTrajectory(ts, ys[:, 0], ys[:, 1], np.atleast_1d(rho_s),
                               np.atleast_1d(psi_s), _stats(status, steps, rej, err),
                               escaped=status == 5)
    _raise_for(status, traj, f"near tau={ts[-1]:.6g}")
    return traj


def dev_rhs(params: ModelParams, sol: AsymptoticSolution, tau: float, r: float, p: float):
    """Right-hand side of the deviation system (for checks against rhs_ms)."""
    out = np.empty(2)
    _dev_rhs(float(tau), np.array([r, p], float), _pack_dev(params, sol, 0.0, None), out)
    return float(out[0]), float(out[1])


def classify_capture(traj: Trajectory, params: ModelParams, capture_tol: float = 0.1,
                     winding_cap: float = 1.0) -> CaptureVerdict:
    """Captured: rho/sqrt(lam tau) near 1 and psi confined; NotCaptured: phase slipping.

    The winding is the range of psi over the second half of the run, so an
    initial slip before locking does not count against capture.
    """
    tau, rho, psi = traj.tau, traj.rho, traj.psi
    ratio = float(rho[-1] / math.sqrt(params.lam * tau[-1])) if tau[-1] > 0 else math.inf
    half = tau >= tau[0] + 0.5 * (tau[-1] - tau[0])
    winding = float(np.ptp(psi[half])) if half.any() else 0.0
    locked = winding < 2 * math.pi * winding_cap
    if abs(ratio - 1.0) <= capture_tol and locked:
        return CaptureVerdict(Verdict.CAPTURED, ratio, winding)
    if ratio < 1.0 - capture_tol and not locked:
        return CaptureVerdict(Verdict.NOT_CAPTURED, ratio, winding)
    return CaptureVerdict(Verdict.UNDECIDED, ratio, winding)


@dataclass(frozen=True)
class CaptureRow:
    rho0: float
    psi0: float
    verdict: str
    rho_ratio_end: float
    psi_winding: float
    error: str | None = None


def _capture_cell(args) -> CaptureRow:
    params, (rho0, psi0), tau0, horizon, cfg, capture_tol, winding_cap = args
    try:
        traj = integrate(params, (tau0, rho0, psi0), horizon, cfg)
    except (AmplitudeUnderflow, StepUnderflow) as exc:
        return CaptureRow(rho0, psi0, Verdict.UNDECIDED.value, math.nan, math.nan,
                          f"{type(exc).__name__}: {exc}")
    v = classify_capture(traj, params, capture_tol, winding_cap)
    return CaptureRow(rho0, psi0, v.verdict.value, v.rho_ratio_end, v.psi_winding)


def capture_map(params: ModelParams, ic_grid: Iterable[tuple[float, float]], horizon: float,
                cfg: SolverConfig = SolverConfig(max_samples=4096), tau0: float = 0.0,
                capture_tol: float = 0.1, winding_cap: float = 1.0,
                pmap: Callable = map) -> list[CaptureRow]:
    """Integrate and classify every (rho0, psi0); per-cell failures are recorded."""
    cells = [(params, (float(r), float(s)), tau0, horizon, cfg, capture_tol, winding_cap)
             for r, s in ic_grid]
    return list(pmap(_capture_cell, cells))


def ic_grid(rho_range: tuple[float, float], n_rho: int, n_psi: int) -> list[tuple[float, float]]:
    """Regular grid of rho0 in [lo, hi] and psi0 in [0, 2 pi)."""
    rhos = np.linspace(rho_range[0], rho_range[1], n_rho)
    psis = np.linspace(0.0, 2 * math.pi, n_psi, endpoint=False)
    return [(float(r), float(s)) for r in rhos for s in psis]


# ---------------------------------------------------------------------------
# fast oscillator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OscillatorTrajectory:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    E: np.ndarray
    Psi: np.ndarray
    solver_stats: SolverStats
    epsilon: float
    vartheta: float

    def slow_time(self) -> np.ndarray:
        return self.epsilon * self.t / (2.0 * KAPPA)

    def envelope(self) -> np.ndarray:
        """Turning-point amplitude of the current energy level, in rho units.

        Solves A**2/2 - eps A**4/4 = E, so the fast ripple that sqrt(x**2 + v**2)
        carries on an anharmonic orbit does not enter.
        """
        eps = self.epsilon
        if eps == 0.0:
            return np.sqrt(2.0 * self.E) / KAPPA
        disc = np.clip(1.0 - 4.0 * eps * self.E, 0.0, None)
        return np.sqrt(2.0 * self.E / (0.5 + 0.5 * np.sqrt(disc))) / KAPPA


def vartheta_for(lam: float, epsilon: float) -> float:
    """Chirp rate giving sweep parameter lam: lam = 8 vartheta kappa**2 / epsilon**2."""
    return lam * epsilon ** 2 / (8.0 * KAPPA ** 2)


def reduced_params(epsilon: float, vartheta: float, nu: float = 0.0) -> ModelParams:
    """Amplitude/phase model that averages the oscillator.

    mu(tau) = (kappa/2) beta(t) with beta = (1 + 2 kappa tau)**-1/2, written as
    Regularized(sqrt(2 kappa)/4, 1/(2 kappa)).
    """
    lam = 8.0 * vartheta * KAPPA ** 2 / epsilon ** 2
    return ModelParams(lam, nu, Regularized(math.sqrt(2.0 * KAPPA) / 4.0, 1.0 / (2.0 * KAPPA)))


def locked_start(params: ModelParams, tau_to: float = 0.0, tau_match: float = 50.0,
                 n_mu_terms: int = 8, cfg: SolverConfig = SolverConfig(rtol=1e-11, atol=1e-13)
                 ) -> tuple[float, float]:
    """(rho, psi) at tau_to on the captured particular solution of the stable simple root.

    The series is only trusted at large tau, so it is evaluated at tau_match
    and carried back to tau_to with the exact field.
    """
    mu = params.mu.as_asymptotic(n_mu_terms) if isinstance(params.mu, Regularized) else params.mu
    expanded = ModelParams(params.lam, params.nu, mu)
    stable = [r for r in find_roots(expanded) if r.stability_class is StabilityClass.STABLE_CASE_I]
    if not stable:
        raise ValueError("no stable simple root at these parameters")
    rho1, psi1 = eval_solution(build_solution(expanded, stable[0]), tau_match)
    back = integrate_backward(params, (tau_match, float(rho1), float(psi1)), tau_to, cfg)
    return float(back.rho[-1]), float(back.psi[-1])


def oscillator_ic(rho0: float, psi0: float) -> tuple[float, float]:
    """(x0, v0) at t=0 matching x = kappa rho cos(psi - zeta)."""
    return KAPPA * rho0 * math.cos(psi0), KAPPA * rho0 * math.sin(psi0)


def integrate_oscillator(epsilon: float, vartheta: float, ic: tuple[float, float], t_end: float,
                         cfg: SolverConfig = SolverConfig()) -> OscillatorTrajectory:
    """x'' + (1 + eps beta cos 2 zeta)(x - eps x**3) = eps cos zeta from t = 0."""
    if not (epsilon >= 0 and vartheta >= 0 and t_end > 0):
        raise ValueError("need epsilon, vartheta >= 0 and t_end > 0")
    p = np.array([epsilon, vartheta], float)
    status, ts, ys, steps, rej, err = _run("osc", 0.0, ic, t_end, p, cfg)
    x, v = ys[:, 0], ys[:, 1]
    energy = 0.5 * v * v + 0.5 * x * x - 0.25 * epsilon * x ** 4
    Psi = np.unwrap(np.arctan2(-v, x))
    traj = OscillatorTrajectory(ts, x, v, energy, Psi, _stats(status, steps, rej, err),
                                epsilon, vartheta)
    _raise_for(status, traj, f"near t={ts[-1]:.6g}")
    return traj


# ---------------------------------------------------------------------------
# independent fixed-step oracle
# ---------------------------------------------------------------------------


def rk4_fixed(f: Callable[[float, np.ndarray], np.ndarray], t0: float, y0: Sequence[float],
              t1: float, h: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta with a constant step (last step trimmed)."""
    y = np.asarray(y0, dtype=float).copy()
    n = int(math.ceil((t1 - t0) / h - 1e-12))
    t = t0
    for i in range(n):
        hh = min(h, t1 - t)
        k1 = f(t, y)
        k2 = f(t + hh / 2, y + hh / 2 * k1)
        k3 = f(t + hh / 2, y + hh / 2 * k2)
        k4 = f(t + hh, y + hh * k3)
        y = y + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * h if i < n - 1 else t1
    return y


def dopri_fixed(params: ModelParams, ic: tuple[float, float, float], tau_end: float,
                h: float) -> np.ndarray:
    """Endpoint of the 5th-order Dormand-Prince solution with constant step h."""
    tau0, rho0, psi0 = map(float, ic)
    p = _pack_ms(params, 0.0)
    cfg = SolverConfig(max_samples=2)
    status, ts, ys, *_ = _run("ms", tau0, (rho0, psi0), tau_end, p, cfg, h_fixed=h)
    _raise_for(status, None, "in fixed-step run")
    return ys[-1]
