"""Phase equation P(sigma; delta, nu) = delta*sin(2*sigma + nu) - sin(sigma).

Roots of P are the limiting phase mismatches of autoresonant modes.  This
module evaluates P and its derivatives, the bifurcation function gamma, the
parameter-plane partition and finds roots together with their multiplicity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

TWO_PI = 2.0 * math.pi

SCAN_POINTS = 4096
DEFAULT_ROOT_TOL = 1e-10
DEFAULT_DERIV_TOL = 1e-6
DEFAULT_BOUNDARY_TOL = 1e-9

# candidates closer than this to an accepted multiple root are the same root
_MERGE_RADIUS = 1e-4


class DegenerateNearBoundary(RuntimeError):
    """Two distinct simple roots are numerically indistinguishable."""


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticSeries:
    """mu(tau) = tau**-1/2 * (mu0 + mu1/tau + mu2/tau**2 + ...)."""

    mu_coeffs: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.atleast_1d(self.mu_coeffs))
        if not coeffs:
            raise ValueError("AsymptoticSeries needs at least mu0")
        object.__setattr__(self, "mu_coeffs", coeffs)

    @property
    def mu0(self) -> float:
        return self.mu_coeffs[0]

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        inv = 1.0 / tau
        acc = np.zeros_like(tau)
        for c in reversed(self.mu_coeffs):
            acc = acc * inv + c
        return acc / np.sqrt(tau)


@dataclass(frozen=True)
class Regularized:
    """mu(tau) = mu0 * (shift + tau)**-1/2, finite at tau = 0."""

    mu0: float
    shift: float = 1.0

    def __post_init__(self):
        if not self.shift > 0:
            raise ValueError("Regularized.shift must be positive")

    def __call__(self, tau):
        return self.mu0 / np.sqrt(self.shift + np.asarray(tau, dtype=float))

    def as_asymptotic(self, n_terms: int = 8) -> AsymptoticSeries:
        """Large-tau expansion mu0 * tau**-1/2 * sum binom(-1/2, k) (shift/tau)**k."""
        coeffs = [self.mu0]
        for k in range(1, n_terms):
            coeffs.append(coeffs[-1] * (0.5 - k) / k * self.shift)
        return AsymptoticSeries(tuple(coeffs))


MuProfile = AsymptoticSeries | Regularized


@dataclass(frozen=True)
class ModelParams:
    """Sweep rate ``lam``, pump phase ``nu`` and pump profile ``mu``.

    ``delta = mu0 * sqrt(lam)`` is always derived, never stored.
    """

    lam: float
    nu: float
    mu: MuProfile = field(default_factory=lambda: AsymptoticSeries((0.0,)))

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0.0 <= self.nu < math.pi:
            raise ValueError(f"nu must lie in [0, pi), got {self.nu}")

    @property
    def mu0(self) -> float:
        return self.mu.mu0

    @property
    def delta(self) -> float:
        return self.mu0 * math.sqrt(self.lam)

    @classmethod
    def from_delta(cls, delta: float, nu: float, lam: float = 1.0,
                   mu_tail: Sequence[float] = ()) -> "ModelParams":
        mu0 = delta / math.sqrt(lam)
        return cls(lam, nu, AsymptoticSeries((mu0, *mu_tail)))


# ---------------------------------------------------------------------------
# P, gamma, regions
# ---------------------------------------------------------------------------


def eval_p(sigma, delta: float, nu: float, order: int = 0):
    """k-th derivative of P with respect to sigma (k = 0..5)."""
    if order not in range(6):
        raise ValueError(f"order must be in 0..5, got {order}")
    shift = 0.5 * math.pi * order
    sigma = np.asarray(sigma, dtype=float)
    out = (2.0 ** order) * delta * np.sin(2.0 * sigma + nu + shift) - np.sin(sigma + shift)
    return float(out) if out.ndim == 0 else out


def p_derivatives(sigma: float, delta: float, nu: float) -> tuple[float, ...]:
    """(P', P'', P''', P'''', P''''') at sigma."""
    return tuple(eval_p(sigma, delta, nu, k) for k in range(1, 6))


def integral_p(sigma: float, Psi, delta: float, nu: float):
    """Closed form of the integral of P(sigma + z) for z from 0 to Psi."""
    Psi = np.asarray(Psi, dtype=float)
    out = (-0.5 * delta * (np.cos(2.0 * (sigma + Psi) + nu) - np.cos(2.0 * sigma + nu))
           + np.cos(sigma + Psi) - np.cos(sigma))
    return float(out) if out.ndim == 0 else out


def gamma(delta, nu):
    """Bifurcation function (4 delta^2 - 1)^3 - 27 delta^2 sin^2 nu."""
    delta = np.asarray(delta, dtype=float)
    out = (4.0 * delta**2 - 1.0) ** 3 - 27.0 * delta**2 * np.sin(nu) ** 2
    return float(out) if out.ndim == 0 else out


class Region(str, enum.Enum):
    OMEGA_PLUS = "OmegaPlus"
    OMEGA_MINUS = "OmegaMinus"
    GAMMA_PLUS = "GammaPlus"
    GAMMA_MINUS = "GammaMinus"


@dataclass(frozen=True)
class RegionClass:
    region: Region
    gamma: float


def classify_region(delta: float, nu: float,
                    boundary_tol: float = DEFAULT_BOUNDARY_TOL) -> RegionClass:
    if not boundary_tol > 0:
        raise ValueError("boundary_tol must be positive")
    g = gamma(delta, nu)
    if g > boundary_tol:
        return RegionClass(Region.OMEGA_PLUS, g)
    if g < -boundary_tol:
        return RegionClass(Region.OMEGA_MINUS, g)
    return RegionClass(Region.GAMMA_PLUS if delta > 0 else Region.GAMMA_MINUS, g)


def bifurcation_delta(nu: float, bracket: tuple[float, float] = (0.5, 2.0),
                      xtol: float = 1e-14) -> float:
    """Positive delta on gamma_+ for the given nu (bisection on gamma)."""
    if math.sin(nu) == 0.0:
        return 0.5
    return brentq(gamma, *bracket, args=(nu,), xtol=xtol)


# ---------------------------------------------------------------------------
# roots
# ---------------------------------------------------------------------------


class StabilityClass(str, enum.Enum):
    STABLE_CASE_I = "StableCaseI"
    UNSTABLE_SIMPLE = "UnstableSimple"
    CASE_II = "CaseII"
    UNSTABLE_DOUBLE = "UnstableDouble"
    CASE_III = "CaseIII"
    UNSTABLE_TRIPLE = "UnstableTriple"


_CLASS_TABLE = {
    (1, True): StabilityClass.STABLE_CASE_I,
    (1, False): StabilityClass.UNSTABLE_SIMPLE,
    # double roots: Case II requires P'' < 0
    (2, True): StabilityClass.CASE_II,
    (2, False): StabilityClass.UNSTABLE_DOUBLE,
    (3, True): StabilityClass.CASE_III,
    (3, False): StabilityClass.UNSTABLE_TRIPLE,
}


@dataclass(frozen=True)
class PhaseRoot:
    sigma: float
    multiplicity: int
    p_derivs: tuple[float, ...]
    stability_class: StabilityClass

    @property
    def leading_derivative(self) -> float:
        """The first non-vanishing derivative P^(multiplicity)(sigma)."""
        return self.p_derivs[self.multiplicity - 1]


def make_root(sigma: float, delta: float, nu: float,
              deriv_tol: float = DEFAULT_DERIV_TOL) -> PhaseRoot:
    sigma = float(sigma) % TWO_PI
    if sigma >= TWO_PI:  # -tiny % 2 pi rounds up to 2 pi
        sigma = 0.0
    derivs = p_derivatives(sigma, delta, nu)
    mult = next((k + 1 for k, d in enumerate(derivs) if abs(d) > deriv_tol), None)
    if mult is None or mult > 3:
        raise DegenerateNearBoundary(
            f"root at sigma={sigma:.6g} has vanishing P', P'', P''' (deriv_tol={deriv_tol})")
    lead = derivs[mult - 1]
    positive = lead > 0 if mult != 2 else lead < 0
    return PhaseRoot(sigma, mult, derivs, _CLASS_TABLE[(mult, positive)])


def _polish(f: Callable[[float], float], df: Callable[[float], float],
            x: float, lo: float, hi: float) -> float:
    for _ in range(8):
        d = df(x)
        if d == 0.0:
            break
        x_new = x - f(x) / d
        if not lo <= x_new <= hi or abs(f(x_new)) >= abs(f(x)):
            break
        x = x_new
    return x


def _scan_zeros(k: int, delta: float, nu: float, n: int) -> list[float]:
    """Zeros of P^(k) on [0, 2 pi) from a sign scan + bisection + Newton."""
    f = lambda s: eval_p(s, delta, nu, k)
    df = lambda s: eval_p(s, delta, nu, k + 1) if k < 5 else 0.0
    grid = np.linspace(0.0, TWO_PI, n + 1)
    vals = eval_p(grid[:-1], delta, nu, k)
    # close the scan periodically: sin(2 pi) carries round-off that P(0) does not
    after = np.append(vals[1:], vals[0])
    exact = np.flatnonzero(vals == 0.0)
    brackets = np.flatnonzero(vals * after < 0.0)
    out = [float(grid[i]) for i in exact]
    for i in brackets:
        a, b = (grid[i], grid[i + 1]) if i < n - 1 else (grid[i] - TWO_PI, 0.0)
        x = brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        x = _polish(f, df, x, a, b) % TWO_PI
        out.append(0.0 if x >= TWO_PI else x)
    return sorted(out)


def _circ_dist(a: float, b: float) -> float:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


def find_roots_delta(delta: float, nu: float, root_tol: float = DEFAULT_ROOT_TOL,
                     deriv_tol: float = DEFAULT_DERIV_TOL,
                     n_scan: int = SCAN_POINTS) -> list[PhaseRoot]:
    """All roots of P(.; delta, nu) in [0, 2 pi), sorted by sigma.

    Simple roots come from sign changes of P.  Multiple roots do not (double)
    or only weakly do (triple), so zeros of P' and P'' with |P| <= root_tol
    are added as candidates and absorb nearby sign-change roots.
    """
    if not (root_tol > 0 and deriv_tol > 0):
        raise ValueError("tolerances must be positive")
    simple = [s for s in _scan_zeros(0, delta, nu, n_scan)
              if abs(eval_p(s, delta, nu)) <= root_tol]
    multiple = []
    for k in (1, 2):
        for s in _scan_zeros(k, delta, nu, n_scan):
            if abs(eval_p(s, delta, nu)) <= root_tol:
                root = make_root(s, delta, nu, deriv_tol)
                if root.multiplicity > 1:
                    multiple.append(root)
    # higher multiplicity wins when P' and P'' scans see the same point
    multiple.sort(key=lambda r: -r.multiplicity)
    accepted: list[PhaseRoot] = []
    for r in multiple:
        if all(_circ_dist(r.sigma, a.sigma) > _MERGE_RADIUS for a in accepted):
            accepted.append(r)
    n_multiple = len(accepted)
    for s in simple:
        if any(_circ_dist(s, a.sigma) <= _MERGE_RADIUS for a in accepted[:n_multiple]):
            continue
        if any(_circ_dist(s, a.sigma) < 1e-13 for a in accepted):
            continue
        accepted.append(make_root(s, delta, nu, deriv_tol))
    accepted.sort(key=lambda r: r.sigma)
    for a, b in zip(accepted, accepted[1:] + accepted[:1]):
        if a is not b and _circ_dist(a.sigma, b.sigma) < 10 * root_tol \
                and a.multiplicity == 1 and b.multiplicity == 1:
            raise DegenerateNearBoundary(
                f"roots {a.sigma:.15g} and {b.sigma:.15g} are closer than 10*root_tol")
    return accepted


def find_roots(params: ModelParams, root_tol: float = DEFAULT_ROOT_TOL,
               deriv_tol: float = DEFAULT_DERIV_TOL) -> list[PhaseRoot]:
    return find_roots_delta(params.delta, params.nu, root_tol, deriv_tol)


# ---------------------------------------------------------------------------
# parameter-plane sweeps
# ---------------------------------------------------------------------------

PARTITION_HEADER = ("delta", "nu", "gamma", "region", "n_roots",
                    "sigmas", "multiplicities", "classes")


@dataclass(frozen=True)
class PartitionRow:
    delta: float
    nu: float
    gamma: float
    region: Region
    roots: tuple[PhaseRoot, ...]
    error: str | None = None

    @property
    def n_roots(self) -> int:
        return -1 if self.error else len(self.roots)

    def csv_fields(self, fmt: Callable[[float], str] = repr) -> list[str]:
        if self.error:
            sig = mult = ""
            cls = self.error
        else:
            sig = ";".join(fmt(r.sigma) for r in self.roots)
            mult = ";".join(str(r.multiplicity) for r in self.roots)
            cls = ";".join(r.stability_class.value for r in self.roots)
        return [fmt(self.delta), fmt(self.nu), fmt(self.gamma), self.region.value,
                str(self.n_roots), sig, mult, cls]


def _partition_cell(cell, lam, root_tol, deriv_tol, boundary_tol) -> PartitionRow:
    delta, nu = cell
    rc = classify_region(delta, nu, boundary_tol)
    try:
        roots = tuple(find_roots_delta(delta, nu, root_tol, deriv_tol))
        return PartitionRow(delta, nu, rc.gamma, rc.region, roots)
    except DegenerateNearBoundary as exc:
        return PartitionRow(delta, nu, rc.gamma, rc.region, (), f"DegenerateNearBoundary: {exc}")


def _check_grid(grid: Sequence[float], name: str) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d grid")
    if np.any(np.diff(g) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return g


def sweep_partition(lam: float, nu_grid: Sequence[float], delta_grid: Sequence[float],
                    root_tol: float = DEFAULT_ROOT_TOL, deriv_tol: float = DEFAULT_DERIV_TOL,
                    boundary_tol: float = DEFAULT_BOUNDARY_TOL,
                    pmap: Callable = map) -> list[PartitionRow]:
    """One row per (delta, nu) cell, nu-major order.

    ``lam`` only fixes mu0 = delta / sqrt(lam); roots depend on delta and nu alone.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    nus = _check_grid(nu_grid, "nu_grid")
    deltas = _check_grid(delta_grid, "delta_grid")
    cells = [(float(d), float(n)) for n in nus for d in deltas]
    work = lambda c: _partition_cell(c, lam, root_tol, deriv_tol, boundary_tol)
    return list(pmap(work, cells))


def count_transitions(rows: Iterable[PartitionRow]) -> list[tuple[float, float, int, int]]:
    """(nu, delta, count_before, count_after) wherever the count changes along a nu row."""
    rows = list(rows)
    out = []
    for a, b in zip(rows, rows[1:]):
        if a.nu == b.nu and a.n_roots != b.n_roots:
            out.append((b.nu, b.delta, a.n_roots, b.n_roots))
    return out
