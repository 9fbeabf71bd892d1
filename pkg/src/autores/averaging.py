"""Frozen Hamiltonians of the deviation dynamics and what is measured on them.

h_minus1(R, Psi) = sqrt(lam) R**2 + int_0^Psi P(sigma + z) dz   (any root)
h2_0(r, p)       = sqrt(lam) r**2 + omega2**2 p**2/2 + P''(sigma) p**3/6   (Case II)

Periods of the closed level lines of h2_0 give the frequency omega(I) on
I in (0, I*), I* = 2 (omega2 phi)**2 / 3.  ``envelope_fit`` reads the
amplitude and phase laws off an integrated deviation signal.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import ellipk

from .phase_model import ModelParams, PhaseRoot, find_roots_delta, integral_p

SEPARATRIX_FACTOR = 1e3


class SeparatrixProximity(RuntimeError):
    """Orbit period blew up: the level is too close to I*."""


class InsufficientOscillations(ValueError):
    """Fewer extrema than a fit needs."""


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------


def h_minus1(R, Psi, root: PhaseRoot, params: ModelParams):
    R = np.asarray(R, dtype=float)
    out = math.sqrt(params.lam) * R * R + integral_p(root.sigma, Psi, params.delta, params.nu)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DoubleRootConstants:
    phi: float
    omega2: float
    p2: float  # P''(sigma) < 0

    @property
    def i_star(self) -> float:
        return 2.0 * (self.omega2 * self.phi) ** 2 / 3.0


def double_root_constants(root: PhaseRoot, params: ModelParams) -> DoubleRootConstants:
    """phi = sqrt(-sqrt(lam)/P'') and omega2 = sqrt(-phi P'') for a Case II root."""
    if root.multiplicity != 2 or not root.p_derivs[1] < 0:
        raise ValueError("h2_0 needs a double root with P'' < 0")
    p2 = root.p_derivs[1]
    phi = math.sqrt(-math.sqrt(params.lam) / p2)
    return DoubleRootConstants(phi, math.sqrt(-phi * p2), p2)


def h2_0(r, p, root: PhaseRoot, params: ModelParams):
    c = double_root_constants(root, params)
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    out = math.sqrt(params.lam) * r * r + c.omega2**2 * p * p / 2.0 + c.p2 * p**3 / 6.0
    return float(out) if out.ndim == 0 else out


def action_of_state(root: PhaseRoot, params: ModelParams, tau, r, p):
    """h2_0 level of the deviation (r, p) = (rho - rho*, psi - psi*) at tau.

    Uses the scaled variables r2 = tau**(5/8) r, p2 = tau**(1/4) p.
    """
    tau = np.asarray(tau, dtype=float)
    return h2_0(tau**0.625 * np.asarray(r, float), tau**0.25 * np.asarray(p, float), root, params)


# ---------------------------------------------------------------------------
# critical points and level lines of h_minus1
# ---------------------------------------------------------------------------


class PointKind(str, enum.Enum):
    CENTER = "Center"
    SADDLE = "Saddle"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class CriticalPoint:
    R: float
    Psi: float
    kind: PointKind
    multiplicity: int


@dataclass(frozen=True)
class CriticalPointSet:
    sigma: float
    points: tuple[CriticalPoint, ...]

    def __len__(self):
        return len(self.points)

    def kinds(self) -> list[PointKind]:
        return [pt.kind for pt in self.points]


def _wrap(x: float) -> float:
    """Into (-pi, pi]."""
    y = math.remainder(x, 2.0 * math.pi)
    return math.pi if y == -math.pi else y


def critical_points(root: PhaseRoot, params: ModelParams, **root_kw) -> CriticalPointSet:
    """Critical points of h_minus1 around ``root``: R = 0, sigma + Psi a root of P.

    The Hessian is diag(2 sqrt(lam), P'(sigma + Psi)); a vanishing P' (a
    multiple root) is reported as Degenerate.
    """
    roots = find_roots_delta(params.delta, params.nu, **root_kw)
    pts = []
    for other in roots:
        psi = _wrap(other.sigma - root.sigma)
        if other.multiplicity > 1:
            kind = PointKind.DEGENERATE
        else:
            kind = PointKind.CENTER if other.p_derivs[0] > 0 else PointKind.SADDLE
        pts.append(CriticalPoint(0.0, psi, kind, other.multiplicity))
    pts.sort(key=lambda pt: pt.Psi)
    return CriticalPointSet(root.sigma, tuple(pts))


def hessian_kind(root: PhaseRoot, params: ModelParams, Psi: float, step: float = 1e-4,
                 tol: float = 1e-6) -> PointKind:
    """Kind from a finite-difference Hessian of h_minus1 at (0, Psi)."""
    f = lambda R, P: h_minus1(R, P, root, params)
    hrr = (f(step, Psi) - 2 * f(0.0, Psi) + f(-step, Psi)) / step**2
    hpp = (f(0.0, Psi + step) - 2 * f(0.0, Psi) + f(0.0, Psi - step)) / step**2
    hrp = (f(step, Psi + step) - f(step, Psi - step) - f(-step, Psi + step)
           + f(-step, Psi - step)) / (4 * step**2)
    det = hrr * hpp - hrp * hrp
    if abs(det) <= tol * max(1.0, abs(hrr)):
        return PointKind.DEGENERATE
    return PointKind.CENTER if det > 0 else PointKind.SADDLE


def level_grid(root: PhaseRoot, params: ModelParams, R_range=(-1.5, 1.5),
               Psi_range=(-math.pi, math.pi), n_R: int = 121, n_Psi: int = 241) -> np.ndarray:
    """Rows (R, Psi, h_minus1) on a rectangular grid, R varying fastest."""
    R = np.linspace(*R_range, n_R)
    Psi = np.linspace(*Psi_range, n_Psi)
    PP, RR = np.meshgrid(Psi, R, indexing="ij")
    H = h_minus1(RR, PP, root, params)
    return np.column_stack([RR.ravel(), PP.ravel(), np.ravel(H)])


# ---------------------------------------------------------------------------
# action-angle quantities of h2_0
# ---------------------------------------------------------------------------


def _turning_points(c: DoubleRootConstants, level: float) -> tuple[float, float, float]:
    """Roots p_lo < p_hi < p_far of h2_0(0, p) = level, for 0 < level < I*."""
    coeffs = [c.p2 / 6.0, c.omega2**2 / 2.0, 0.0, -level]
    roots = np.sort(np.real(np.roots(coeffs)))
    return float(roots[0]), float(roots[1]), float(roots[2])


def _polish_turning(c, p, level):
    for _ in range(4):
        f = c.omega2**2 * p * p / 2.0 + c.p2 * p**3 / 6.0 - level
        df = c.omega2**2 * p + c.p2 * p * p / 2.0
        p -= f / df
    return p


def period_quadrature(root: PhaseRoot, params: ModelParams, level: float) -> float:
    """Period of the h2_0 = level orbit in closed form (complete elliptic integral)."""
    c = double_root_constants(root, params)
    if not 0.0 < level < c.i_star:
        raise ValueError("level must lie in (0, I*)")
    lo, hi, far = _turning_points(c, level)
    # level - V(p) = (|P''|/6)(p - lo)(hi - p)(far - p)
    m = (hi - lo) / (far - lo)
    k = ellipk(m)
    return params.lam**-0.25 * math.sqrt(6.0 / -c.p2) * 2.0 * k / math.sqrt(far - lo)


@dataclass(frozen=True)
class OrbitPeriod:
    level: float
    period: float
    return_distance: float
    energy_drift: float


def orbit_period(root: PhaseRoot, params: ModelParams, level: float,
                 rtol: float = 1e-12, atol: float = 1e-14) -> OrbitPeriod:
    """Integrate dr/da = -dh/dp, dp/da = dh/dr once around the h2_0 = level orbit.

    From the right turning point (0, p_hi) the orbit runs through r < 0 to
    the upward crossing of r = 0 at p_lo, then back through r > 0 to the
    downward crossing at p_hi.  Each leg is stopped by a terminal event.
    """
    c = double_root_constants(root, params)
    if not 0.0 < level < c.i_star:
        raise ValueError("level must lie in (0, I*)")
    sl = math.sqrt(params.lam)
    _, hi, _ = _turning_points(c, level)
    hi = _polish_turning(c, hi, level)

    def field(_, y):
        r, p = y
        return [-(c.omega2**2 * p + c.p2 * p * p / 2.0), 2.0 * sl * r]

    def up(_, y):
        return y[0]
    up.direction, up.terminal = 1.0, True

    def down(_, y):
        return y[0]
    down.direction, down.terminal = -1.0, True

    t_cap = SEPARATRIX_FACTOR * 2.0 * math.pi / omega_small_amplitude(root, params)
    t, y = 0.0, [0.0, hi]
    for event in (up, down):
        leg = solve_ivp(field, (t, t_cap), y, method="DOP853", rtol=rtol, atol=atol,
                        events=event)
        if leg.t_events[0].size == 0:
            raise SeparatrixProximity(
                f"orbit did not close within {SEPARATRIX_FACTOR:g} small-amplitude periods "
                f"(level {level:g}, I* = {c.i_star:g})")
        t, y = float(leg.t_events[0][0]), leg.y_events[0][0]
    ret = math.hypot(y[0], y[1] - hi)
    drift = abs(h2_0(y[0], y[1], root, params) - level) / level
    return OrbitPeriod(level, t, ret, drift)


@dataclass(frozen=True)
class ActionAngleTable:
    rows: np.ndarray  # columns: I, T, omega
    I_star: float

    def to_csv(self) -> str:
        lines = ["I,T,omega"] + [",".join(f"{v:.17g}" for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def omega_small_amplitude(root: PhaseRoot, params: ModelParams) -> float:
    """(4 lam)**(1/4) omega2, the frequency of infinitesimal orbits."""
    return (4.0 * params.lam) ** 0.25 * double_root_constants(root, params).omega2


def omega_expansion(root: PhaseRoot, params: ModelParams, level) -> np.ndarray:
    """omega(I) = (4 lam)**(1/4) omega2 - 5 I / (48 (omega2 phi)**2), the reference two-term expansion."""
    c = double_root_constants(root, params)
    return omega_small_amplitude(root, params) - 5.0 * np.asarray(level) / (48.0 * (c.omega2 * c.phi) ** 2)


def action_angle_table(root: PhaseRoot, params: ModelParams, n_levels: int = 32,
                       levels=None) -> ActionAngleTable:
    """Periods and frequencies of the closed h2_0 orbits for I in (0, I*)."""
    c = double_root_constants(root, params)
    if levels is None:
        levels = c.i_star * np.arange(1, n_levels + 1) / (n_levels + 1)
    levels = np.asarray(levels, dtype=float)
    if np.any(np.diff(levels) <= 0):
        raise ValueError("levels must be strictly increasing")
    rows = []
    for level in levels:
        T = orbit_period(root, params, float(level)).period
        rows.append((level, T, 2.0 * math.pi / T))
    return ActionAngleTable(np.array(rows), c.i_star)


def small_action_slope(root: PhaseRoot, params: ModelParams, rel_levels=(1e-3, 2e-3, 4e-3, 8e-3)):
    """d omega / dI near I = 0 from a quadratic fit of omega on small levels."""
    c = double_root_constants(root, params)
    levels = c.i_star * np.asarray(rel_levels)
    omegas = [2.0 * math.pi / period_quadrature(root, params, float(I)) for I in levels]
    return float(np.polyfit(levels, omegas, 2)[1])


# ---------------------------------------------------------------------------
# envelope and phase fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeFit:
    amp_exponent: float
    amp_coeff: float
    phase_exponent: float
    phase_coeff: float
    residual_rms: float
    n_extrema: int


def _extrema(t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local extrema of y with a parabola through each extremal sample and its neighbours."""
    dy = np.diff(y)
    idx = np.flatnonzero((dy[:-1] * dy[1:] < 0)) + 1
    t0, t1, t2 = t[idx - 1], t[idx], t[idx + 1]
    y0, y1, y2 = y[idx - 1], y[idx], y[idx + 1]
    # Lagrange parabola vertex
    d0 = (t0 - t1) * (t0 - t2)
    d1 = (t1 - t0) * (t1 - t2)
    d2 = (t2 - t0) * (t2 - t1)
    a = y0 / d0 + y1 / d1 + y2 / d2
    b = -(y0 * (t1 + t2) / d0 + y1 * (t0 + t2) / d1 + y2 * (t0 + t1) / d2)
    cc = y0 * t1 * t2 / d0 + y1 * t0 * t2 / d1 + y2 * t0 * t1 / d2
    with np.errstate(divide="ignore", invalid="ignore"):
        tv = np.where(a != 0, -b / (2 * a), t1)
    tv = np.clip(tv, t0, t2)
    yv = a * tv * tv + b * tv + cc
    return tv, yv


def envelope_fit(traj, sol=None, params: ModelParams | None = None, t_min: float | None = None,
                 min_extrema: int = 10) -> EnvelopeFit:
    """Fit |y| peaks ~ A t**a and local frequency ~ C e t**(e-1) of y = rho - rho*.

    ``traj`` is a DeviationTrajectory (its r column is used), a Trajectory
    together with ``sol``, or a pair (t, y) of arrays.  Consecutive extrema are
    half a period apart, so the phase advances by pi between them; the phase
    law is fitted through log-log of the local frequency at segment midpoints.
    """
    if isinstance(traj, tuple):
        t, y = (np.asarray(v, dtype=float) for v in traj)
    elif hasattr(traj, "r"):
        t, y = traj.tau, traj.r
    else:
        if sol is None:
            raise ValueError("a plain Trajectory needs the particular solution")
        from .series import eval_solution
        t = traj.tau
        y = traj.rho - np.asarray(eval_solution(sol, t)[0])
    if t_min is not None:
        keep = t >= t_min
        t, y = t[keep], y[keep]
    if t.size < 3:
        raise InsufficientOscillations("too few samples")
    tv, yv = _extrema(t, y)
    if tv.size < min_extrema:
        raise InsufficientOscillations(f"{tv.size} extrema found, need {min_extrema}")
    amp = np.abs(yv)
    good = amp > 0
    la, lt = np.log(amp[good]), np.log(tv[good])
    slope, icpt = np.polyfit(lt, la, 1)
    resid = la - (slope * lt + icpt)
    mid = 0.5 * (tv[1:] + tv[:-1])
    freq = math.pi / np.diff(tv)
    ok = freq > 0
    f_slope, f_icpt = np.polyfit(np.log(mid[ok]), np.log(freq[ok]), 1)
    e = f_slope + 1.0
    return EnvelopeFit(float(slope), float(math.exp(icpt)), float(e),
                       float(math.exp(f_icpt) / e), float(np.sqrt(np.mean(resid**2))), int(tv.size))


# (amplitude exponent, phase exponent) of the small oscillations about a
# particular solution, by root multiplicity
ENVELOPE_LAWS = {1: (-3.0 / 8.0, 5.0 / 4.0), 2: (-7.0 / 16.0, 9.0 / 8.0),
                 3: (-11.0 / 24.0, 13.0 / 12.0)}


def predicted_phase_coeff(params: ModelParams, sol) -> float:
    """C in phase ~ C tau**e: (4 lam)**(1/4) omega / e."""
    from .stability import omega_squared
    e = ENVELOPE_LAWS[sol.multiplicity][1]
    return (4.0 * params.lam) ** 0.25 * math.sqrt(omega_squared(sol)) / e


@dataclass(frozen=True)
class EnvelopeRun:
    fit: EnvelopeFit
    epsilon: float
    r0: float
    tau0: float
    tau_end: float
    predicted_amp_exponent: float
    predicted_phase_exponent: float
    predicted_phase_coeff: float
    steps: int


def envelope_run(params: ModelParams, sol, epsilon: float, tau0: float = 100.0,
                 tau_end: float = 1e4, cfg=None, t_min: float | None = None) -> EnvelopeRun:
    """Launch r0 = epsilon lam**(-1/4) tau0**a, p0 = 0 and fit the envelope.

    ``a`` is the predicted amplitude exponent, so ``fit.amp_coeff`` is
    comparable with epsilon.  Fits skip tau < 3 tau0 by default.
    """
    from .integrator import SolverConfig, integrate_deviation
    if cfg is None:
        cfg = SolverConfig(rtol=1e-9, atol=1e-12, max_samples=3_000_000)
    amp_e, phase_e = ENVELOPE_LAWS[sol.multiplicity]
    r0 = epsilon * params.lam ** -0.25 * tau0 ** amp_e
    dev = integrate_deviation(params, sol, (tau0, r0, 0.0), tau_end, cfg)
    fit = envelope_fit(dev, t_min=3.0 * tau0 if t_min is None else t_min)
    return EnvelopeRun(fit, epsilon, r0, tau0, tau_end, amp_e, phase_e,
                       predicted_phase_coeff(params, sol), dev.solver_stats.steps)
