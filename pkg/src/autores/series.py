"""Truncated Puiseux series and the particular autoresonant solutions.

A :class:`PuiseuxSeries` is a polynomial in ``z = tau**(-1/q)`` starting at
``z**offset``, known modulo ``z**(offset + len(coeffs))``.  Coefficients are
either float64 or mpmath ``mpf`` (object arrays); every operation keeps the
scalar type of its inputs, so the same order solver runs in double or in
extended precision.

The particular solutions are built by substituting unknown-augmented series
into the two equations

    E1 = rho' + mu rho sin(2 psi + nu) - sin(psi)
    E2 = rho psi' - rho**3 + lam tau rho + mu rho cos(2 psi + nu) - cos(psi)

and solving, order by order, for the coefficient pair (rho_k, psi_k) that
annihilates E2 at z**(k - q) and E1 at z**(k + m - 1), m the root multiplicity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import mpmath
import numpy as np

from .phase_model import (AsymptoticSeries, ModelParams, PhaseRoot, Regularized,
                          StabilityClass)


class OrderUnderflow(ValueError):
    """An operation would leave no known coefficient."""


class ConstantTermPresent(ValueError):
    """sin/cos expansion around c requires h to vanish as tau grows."""


class UnsolvableOrder(ArithmeticError):
    """The linear system for one order is singular."""


class NoRealBranch(ValueError):
    """The leading phase correction has no real solution."""


# ---------------------------------------------------------------------------
# scalar backends
# ---------------------------------------------------------------------------


def _is_mp(x) -> bool:
    if isinstance(x, np.ndarray):
        return x.dtype == object
    return isinstance(x, mpmath.mpf)


def _sin(x):
    return mpmath.sin(x) if _is_mp(x) else math.sin(x)


def _cos(x):
    return mpmath.cos(x) if _is_mp(x) else math.cos(x)


def _as_dtype(arr, like_mp: bool) -> np.ndarray:
    arr = np.asarray(arr)
    if like_mp and arr.dtype != object:
        return np.array([mpmath.mpf(float(v)) for v in arr], dtype=object)
    if not like_mp and arr.dtype == object:
        return np.array([float(v) for v in arr], dtype=float)
    return arr


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PuiseuxSeries:
    """sum_k coeffs[k] * z**(offset + k), z = tau**(-1/q), known mod z**precision."""

    q: int
    offset: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be a positive integer")
        c = np.asarray(self.coeffs)
        if c.dtype != object:
            c = c.astype(float)
        if c.ndim != 1 or c.size == 0:
            raise OrderUnderflow("a series needs at least one known coefficient")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def exact(cls, q: int, offset: int, coeffs, precision: int) -> "PuiseuxSeries":
        """Finite sum padded with zeros so that it is known mod z**precision."""
        c = np.asarray(coeffs)
        n = precision - offset
        if n <= 0:
            raise OrderUnderflow("precision must exceed the offset")
        if c.size >= n:
            return cls(q, offset, c[:n])
        pad = np.zeros(n - c.size, dtype=c.dtype if c.dtype == object else float)
        if c.dtype == object:
            pad[:] = mpmath.mpf(0)
        return cls(q, offset, np.concatenate([c, pad]))

    @property
    def trunc_order(self) -> int:
        return self.coeffs.size

    @property
    def precision(self) -> int:
        """First exponent numerator that is not known."""
        return self.offset + self.coeffs.size

    @property
    def is_mp(self) -> bool:
        return self.coeffs.dtype == object

    def tau_exponents(self) -> np.ndarray:
        return -(self.offset + np.arange(self.coeffs.size)) / self.q

    def coeff(self, n: int):
        """Coefficient of z**n."""
        if n >= self.precision:
            raise OrderUnderflow(f"z^{n} is beyond the known precision {self.precision}")
        if n < self.offset:
            return self.coeffs[0] * 0
        return self.coeffs[n - self.offset]

    def truncate(self, precision: int) -> "PuiseuxSeries":
        precision = min(precision, self.precision)
        if precision <= self.offset:
            raise OrderUnderflow("truncation leaves no coefficient")
        return PuiseuxSeries(self.q, self.offset, self.coeffs[:precision - self.offset])

    def lift(self, m: int) -> "PuiseuxSeries":
        """Same series in w = z**(1/m), i.e. with denominator q*m."""
        if m == 1:
            return self
        c = np.zeros(m * self.coeffs.size, dtype=self.coeffs.dtype)
        if self.is_mp:
            c[:] = mpmath.mpf(0)
        c[::m] = self.coeffs
        return PuiseuxSeries(self.q * m, self.offset * m, c)

    def derivative(self) -> "PuiseuxSeries":
        """d/dtau, using d z**n / dtau = -(n/q) z**(n+q)."""
        n = self.offset + np.arange(self.coeffs.size)
        if self.is_mp:
            c = np.array([a * (-int(k)) / self.q for a, k in zip(self.coeffs, n)], dtype=object)
        else:
            c = self.coeffs * (-n / self.q)
        return PuiseuxSeries(self.q, self.offset + self.q, c)

    def leading_exponent(self, rel_tol: float = 1e-12, scale: float | None = None) -> float | None:
        """tau-exponent of the first coefficient above rel_tol*scale (None if all vanish)."""
        mags = np.abs(self.coeffs.astype(float))
        ref = mags.max() if scale is None else scale
        big = np.flatnonzero(mags > rel_tol * ref) if ref > 0 else np.array([], int)
        if big.size == 0:
            return None
        return -(self.offset + int(big[0])) / self.q

    def __call__(self, tau):
        """Horner evaluation in z at tau (float output)."""
        tau = np.asarray(tau, dtype=float)
        z = tau ** (-1.0 / self.q)
        acc = np.zeros_like(z)
        for c in self.coeffs[::-1].astype(float):
            acc = acc * z + c
        out = acc * z ** self.offset
        return float(out) if out.ndim == 0 else out

    def __add__(self, other):
        return series_add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return series_scale(self, -1)

    def __sub__(self, other):
        return series_add(self, -other if isinstance(other, PuiseuxSeries) else -other)

    def __rsub__(self, other):
        return series_add(-self, other)

    def __mul__(self, other):
        if isinstance(other, PuiseuxSeries):
            return series_mul(self, other)
        return series_scale(self, other)

    __rmul__ = __mul__


def _common(a: PuiseuxSeries, b: PuiseuxSeries) -> tuple[PuiseuxSeries, PuiseuxSeries]:
    q = math.lcm(a.q, b.q)
    a, b = a.lift(q // a.q), b.lift(q // b.q)
    mp_mode = a.is_mp or b.is_mp
    if a.is_mp != mp_mode:
        a = PuiseuxSeries(a.q, a.offset, _as_dtype(a.coeffs, True))
    if b.is_mp != mp_mode:
        b = PuiseuxSeries(b.q, b.offset, _as_dtype(b.coeffs, True))
    return a, b


def _constant(value, like: PuiseuxSeries) -> PuiseuxSeries:
    if like.precision <= 0:
        raise OrderUnderflow("adding a constant to a series unknown at z^0")
    c = np.array([value], dtype=like.coeffs.dtype)
    return PuiseuxSeries.exact(like.q, 0, c, like.precision)


def series_add(a: PuiseuxSeries, b) -> PuiseuxSeries:
    if not isinstance(b, PuiseuxSeries):
        b = _constant(b, a)
    a, b = _common(a, b)
    off = min(a.offset, b.offset)
    prec = min(a.precision, b.precision)
    n = prec - off
    if n <= 0:
        raise OrderUnderflow("sum retains no coefficient")
    out = np.zeros(n, dtype=a.coeffs.dtype)
    if a.is_mp:
        out[:] = mpmath.mpf(0)
    for s in (a, b):
        k = min(s.coeffs.size, prec - s.offset)
        if k > 0:
            out[s.offset - off:s.offset - off + k] += s.coeffs[:k]
    return PuiseuxSeries(a.q, off, out)


def series_mul(a: PuiseuxSeries, b) -> PuiseuxSeries:
    """Cauchy product, known to the coarser of the two resolved orders."""
    if not isinstance(b, PuiseuxSeries):
        return series_scale(a, b)
    a, b = _common(a, b)
    off = a.offset + b.offset
    prec = min(a.precision + b.offset, b.precision + a.offset)
    n = prec - off
    if n <= 0:
        raise OrderUnderflow("product retains no coefficient")
    out = np.convolve(a.coeffs[:n], b.coeffs[:n])[:n]
    return PuiseuxSeries(a.q, off, out)


def series_scale(a: PuiseuxSeries, s) -> PuiseuxSeries:
    if _is_mp(s) and not a.is_mp:
        a = PuiseuxSeries(a.q, a.offset, _as_dtype(a.coeffs, True))
    return PuiseuxSeries(a.q, a.offset, a.coeffs * s)


def _strip_constant(h: PuiseuxSeries) -> PuiseuxSeries:
    if h.offset >= 1:
        return h
    head = h.coeffs[:min(1 - h.offset, h.coeffs.size)]
    if any(c != 0 for c in head):
        raise ConstantTermPresent("h must have no terms at tau-exponents >= 0")
    if h.precision <= 1:
        # h is zero and known only through z^0
        zero = h.coeffs[:1] * 0
        return PuiseuxSeries(h.q, 1, zero) if h.precision == 1 else h
    return PuiseuxSeries(h.q, 1, h.coeffs[1 - h.offset:])


def _trig_around(c, h: PuiseuxSeries, phase_shift: int) -> PuiseuxSeries:
    """sum_n f^(n)(c) h^n / n!  with f = sin (phase_shift=0) or cos (1)."""
    h = _strip_constant(h)
    prec = h.precision
    if prec <= 0:
        raise OrderUnderflow("expansion retains no coefficient")
    mp_mode = h.is_mp or _is_mp(c)
    if mp_mode and not h.is_mp:
        h = PuiseuxSeries(h.q, h.offset, _as_dtype(h.coeffs, True))
    if mp_mode and not _is_mp(c):
        c = mpmath.mpf(c)
    # derivative cycle of sin: sin, cos, -sin, -cos
    s, co = _sin(c), _cos(c)
    cycle = (s, co, -s, -co)
    out = PuiseuxSeries.exact(h.q, 0, np.array([cycle[phase_shift % 4]], dtype=h.coeffs.dtype), prec)
    power = None
    n = 1
    fact = 1
    while n * h.offset < prec:
        power = h if power is None else series_mul(power, h).truncate(prec)
        fact *= n
        term = series_scale(power, cycle[(phase_shift + n) % 4] / fact)
        out = series_add(out, term)
        n += 1
    return out


def series_sin_around(c, h: PuiseuxSeries) -> PuiseuxSeries:
    """sin(c + h) for a series h that vanishes as tau grows."""
    return _trig_around(c, h, 0)


def series_cos_around(c, h: PuiseuxSeries) -> PuiseuxSeries:
    """cos(c + h) for a series h that vanishes as tau grows."""
    return _trig_around(c, h, 1)


# ---------------------------------------------------------------------------
# particular solutions
# ---------------------------------------------------------------------------


class CaseTag(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"


_CASE_OF_CLASS = {
    StabilityClass.STABLE_CASE_I: CaseTag.I,
    StabilityClass.UNSTABLE_SIMPLE: CaseTag.I,
    StabilityClass.CASE_II: CaseTag.II,
    StabilityClass.UNSTABLE_DOUBLE: CaseTag.II,
    StabilityClass.CASE_III: CaseTag.III,
    StabilityClass.UNSTABLE_TRIPLE: CaseTag.III,
}

DEFAULT_ORDERS = 6


@dataclass(frozen=True)
class SeriesConstants:
    theta: float | None = None
    phi: float | None = None
    chi: float | None = None


@dataclass(frozen=True)
class AsymptoticSolution:
    case_tag: CaseTag
    branch: int
    root: PhaseRoot
    rho_series: PuiseuxSeries
    psi_series: PuiseuxSeries
    constants: SeriesConstants
    n_orders: int
    # (rho_{n+1}, psi_{n+1}): first omitted coefficients, for error estimates
    next_terms: tuple[float, float] = (0.0, 0.0)
    sigma_exact: object = None
    dps: int | None = None
    lam: float = 1.0
    nu: float = 0.0
    mu_coeffs: tuple[float, ...] = field(default_factory=tuple)

    @property
    def q(self) -> int:
        return self.rho_series.q

    @property
    def multiplicity(self) -> int:
        return self.q // 2

    @property
    def sigma(self) -> float:
        return float(self.psi_series.coeffs[0])

    @property
    def psi1(self) -> float:
        return float(self.psi_series.coeffs[1])

    def rho_coeffs(self) -> list[float]:
        return [float(c) for c in self.rho_series.coeffs]

    def psi_coeffs(self) -> list[float]:
        return [float(c) for c in self.psi_series.coeffs]

    def to_json(self) -> dict:
        return {
            "case": self.case_tag.value,
            "branch": self.branch,
            "sigma": self.sigma,
            "q": self.q,
            "rho_coeffs": self.rho_coeffs(),
            "psi_coeffs": self.psi_coeffs(),
            "constants": {k: v for k, v in vars(self.constants).items()},
        }


class _Model:
    """Substitution of (rho, psi) series into both equations, in z = tau**(-1/q)."""

    def __init__(self, q: int, lam, nu, mu_coeffs: Sequence, mp_mode: bool):
        self.q, self.m = q, q // 2
        self.mp = mp_mode
        num = mpmath.mpf if mp_mode else float
        self.dtype = object if mp_mode else float
        self.lam = num(lam)
        self.nu = num(nu)
        self.mu_coeffs = [num(c) for c in mu_coeffs]

    def array(self, values) -> np.ndarray:
        return np.array(list(values), dtype=self.dtype)

    def mu(self, precision: int) -> PuiseuxSeries:
        q, m = self.q, self.m
        n = max(precision - m, 1)
        c = [self.mu_coeffs[0] * 0] * n
        for k, mk in enumerate(self.mu_coeffs):
            if q * k < n:
                c[q * k] = mk
        return PuiseuxSeries(q, m, self.array(c))

    def equations(self, rho_c: Sequence, psi_c: Sequence, target: int):
        """(E1, E2) known for every exponent below ``target``."""
        q, m = self.q, self.m
        prec = max(target + q, 2)
        rho = PuiseuxSeries.exact(q, -m, self.array(rho_c), prec)
        sigma = psi_c[0]
        h = PuiseuxSeries.exact(q, 1, self.array(psi_c[1:] or [sigma * 0]), prec)
        mu = self.mu(prec)
        tau = PuiseuxSeries.exact(q, -q, self.array([self.lam]), prec + 2 * q)
        mu_rho = mu * rho
        two_h = series_scale(h, 2)
        e1 = (rho.derivative()
              + mu_rho * series_sin_around(2 * sigma + self.nu, two_h)
              - series_sin_around(sigma, h))
        e2 = (rho * h.derivative()
              - rho * rho * rho
              + tau * rho
              + mu_rho * series_cos_around(2 * sigma + self.nu, two_h)
              - series_cos_around(sigma, h))
        clip = lambda s: s.truncate(target) if target > s.offset else s
        return clip(e1), clip(e2)


def _closed_constants(root_derivs, lam, m, sqrt, cbrt) -> SeriesConstants:
    sl = sqrt(lam)
    d1, d2, d3 = root_derivs[:3]
    if m == 1:
        return SeriesConstants(theta=float(sl / (2 * d1)))
    if m == 2:
        return SeriesConstants(phi=float(sqrt(-sl / d2)) if d2 < 0 else None)
    return SeriesConstants(chi=float(cbrt(3 * sl / d3)))


def _real_cbrt(x):
    return math.copysign(abs(float(x)) ** (1 / 3), float(x)) if not _is_mp(x) else \
        mpmath.sign(x) * mpmath.cbrt(abs(x))


def _refine_sigma(root: PhaseRoot, delta, nu, mp_mode: bool):
    """Root of P^(m-1) near root.sigma (simple there), in the working precision."""
    m = root.multiplicity
    if mp_mode:
        f = lambda s: (2 ** (m - 1)) * delta * mpmath.sin(2 * s + nu + (m - 1) * mpmath.pi / 2) \
            - mpmath.sin(s + (m - 1) * mpmath.pi / 2)
        return mpmath.findroot(f, mpmath.mpf(root.sigma))
    from .phase_model import eval_p
    s = root.sigma
    for _ in range(4):
        d = eval_p(s, delta, nu, m)
        if d == 0:
            break
        s_new = s - eval_p(s, delta, nu, m - 1) / d
        if abs(eval_p(s_new, delta, nu, m - 1)) >= abs(eval_p(s, delta, nu, m - 1)):
            break
        s = s_new
    return s


def _p_deriv_mp(s, delta, nu, k):
    shift = k * mpmath.pi / 2
    return (2 ** k) * delta * mpmath.sin(2 * s + nu + shift) - mpmath.sin(s + shift)


def _solve_pivoted(J: list[list], rhs: list, tol: float):
    """Gaussian elimination with partial pivoting and a relative pivot floor."""
    n = len(rhs)
    a = [row[:] + [r] for row, r in zip(J, rhs)]
    scale = max(max(abs(float(v)) for v in rhs), max(abs(float(v)) for row in J for v in row))
    floor = tol * scale
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(float(a[piv][col])) <= floor or a[piv][col] == 0:
            raise UnsolvableOrder(
                f"pivot {float(a[piv][col]):.3e} below {tol:g} x system scale {scale:.3e}")
        a[col], a[piv] = a[piv], a[col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    x = [0] * n
    for r in reversed(range(n)):
        x[r] = (a[r][n] - sum(a[r][c] * x[c] for c in range(r + 1, n))) / a[r][r]
    return x


PIVOT_TOL = 1e-10


def _seed_psi1(model: _Model, rho_c, sigma, branch: int):
    """Real roots of the z**m coefficient of E1 as a polynomial in psi1."""
    m = model.m
    nodes = [model.array([j - m / 2])[0] for j in range(m + 1)]
    vals = [model.equations(rho_c, [sigma, x], m + 1)[0].coeff(m) for x in nodes]
    if model.mp:
        V = mpmath.matrix([[x ** (m - i) for i in range(m + 1)] for x in nodes])
        poly = list(mpmath.lu_solve(V, mpmath.matrix(vals)))
    else:
        poly = list(np.polyfit(np.array(nodes, float), np.array(vals, float), m))
    lead = poly[0]
    scale = max(abs(float(c)) for c in poly)
    if abs(float(lead)) <= PIVOT_TOL * scale:
        raise UnsolvableOrder("leading phase equation degenerates (multiplicity misclassified)")
    if model.mp:
        roots = mpmath.polyroots(poly, maxsteps=200, extraprec=2 * mpmath.mp.prec)
        eps = mpmath.mpf(10) ** (-mpmath.mp.dps // 2)
        real = [mpmath.re(r) for r in roots if abs(mpmath.im(r)) <= eps * max(1, abs(r))]
    else:
        roots = np.roots(poly)
        real = [float(r.real) for r in roots if abs(r.imag) <= 1e-8 * max(1.0, abs(r))]
    if not real:
        raise NoRealBranch(f"no real psi1 for multiplicity {m}")
    if m == 2:
        pick = [r for r in real if (r > 0) == (branch > 0)]
        if not pick:
            raise NoRealBranch("requested branch has no real psi1")
        return pick[0]
    return real[0]


def _solve_orders(model: _Model, sigma, branch: int, n_steps: int):
    q, m = model.q, model.m
    zero = sigma * 0
    rho_c = [mpmath.sqrt(model.lam) if model.mp else math.sqrt(model.lam)]
    psi_c = [sigma]

    def probe(eq_index, exponent, rho_trial, psi_trial, target):
        e = model.equations(rho_trial, psi_trial, target)[eq_index]
        return e.coeff(exponent)

    # growing and constant rho terms, z^j for -m < j <= 0, from E2 at z^(j-q)
    for j in range(-m + 1, 1):
        f = lambda a: probe(1, j - q, rho_c + [a], psi_c, j - q + 1)
        fp, fm = f(1), f(-1)
        slope = (fp - fm) / 2
        base = (fp + fm) / 2
        rho_c.append(_solve_pivoted([[slope]], [-base], PIVOT_TOL)[0])

    for k in range(1, n_steps + 1):
        target = k + m
        if k == 1:
            psi_c.append(_seed_psi1(model, rho_c + [zero], sigma, branch))
            f = lambda a: probe(1, 1 - q, rho_c + [a], psi_c, target)
            fp, fm = f(1), f(-1)
            rho_c.append(_solve_pivoted([[(fp - fm) / 2]], [-(fp + fm) / 2], PIVOT_TOL)[0])
            continue

        def f(a, b):
            e1, e2 = model.equations(rho_c + [a], psi_c + [b], target)
            return [e2.coeff(k - q), e1.coeff(k + m - 1)]

        one = zero + 1
        fa_p, fa_m = f(one, zero), f(-one, zero)
        fb_p, fb_m = f(zero, one), f(zero, -one)
        base = [(x + y) / 2 for x, y in zip(fa_p, fa_m)]
        J = [[(fa_p[i] - fa_m[i]) / 2, (fb_p[i] - fb_m[i]) / 2] for i in range(2)]
        a, b = _solve_pivoted(J, [-v for v in base], PIVOT_TOL)
        rho_c.append(a)
        psi_c.append(b)
    return rho_c, psi_c


def mu_coefficients(params: ModelParams) -> tuple[float, ...]:
    if isinstance(params.mu, Regularized):
        raise ValueError("series construction needs an AsymptoticSeries mu profile; "
                         "use Regularized.as_asymptotic() to expand it")
    return params.mu.mu_coeffs


def build_solution(params: ModelParams, root: PhaseRoot, branch: int = 1,
                   n_orders: int = DEFAULT_ORDERS, dps: int | None = None) -> AsymptoticSolution:
    """Particular solution around ``root`` solved through n_orders correction orders.

    ``dps`` switches the coefficient arithmetic to mpmath with that many digits.
    """
    if n_orders < 2:
        raise ValueError("n_orders must be at least 2")
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    case = _CASE_OF_CLASS[root.stability_class]
    m = root.multiplicity
    if root.stability_class is StabilityClass.UNSTABLE_DOUBLE:
        raise NoRealBranch("double root with P'' > 0 (sin sigma < 0): psi1**2 would be negative")
    mu_c = mu_coefficients(params)
    q = 2 * m
    mp_mode = dps is not None
    ctx = mpmath.workdps(dps) if mp_mode else _NullCtx()
    with ctx:
        delta = mpmath.mpf(mu_c[0]) * mpmath.sqrt(params.lam) if mp_mode else params.delta
        nu = mpmath.mpf(params.nu) if mp_mode else params.nu
        sigma = _refine_sigma(root, delta, nu, mp_mode)
        model = _Model(q, params.lam, params.nu, mu_c, mp_mode)
        rho_c, psi_c = _solve_orders(model, sigma, branch, n_orders + 1)
        if mp_mode:
            derivs = [_p_deriv_mp(sigma, delta, nu, k) for k in (1, 2, 3)]
            consts = _closed_constants(derivs, model.lam, m, mpmath.sqrt, _real_cbrt)
        else:
            consts = _closed_constants(root.p_derivs, params.lam, m, math.sqrt, _real_cbrt)
        next_terms = (float(rho_c[-1]), float(psi_c[-1]))
        rho = PuiseuxSeries(q, -m, model.array(rho_c[:-1]))
        psi = PuiseuxSeries(q, 0, model.array(psi_c[:-1]))
    return AsymptoticSolution(case, branch if case is CaseTag.II else 1, root, rho, psi, consts,
                              n_orders, next_terms, sigma, dps, params.lam, params.nu,
                              tuple(mu_c))


class _NullCtx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def _model_for(sol: AsymptoticSolution) -> _Model:
    return _Model(sol.q, sol.lam, sol.nu, sol.mu_coeffs, sol.dps is not None)


def residual(sol: AsymptoticSolution, params: ModelParams | None = None,
             extra_orders: int | None = None, clean: bool = False):
    """Both equations with the truncated series substituted, as series in z.

    Exponents below the first unsolved order are exactly zero in exact
    arithmetic; ``clean=True`` sets them to zero instead of leaving round-off.
    """
    q, m, n = sol.q, sol.multiplicity, sol.n_orders
    extra = q if extra_orders is None else extra_orders
    target = n + m + 1 + extra
    model = _model_for(sol)
    ctx = mpmath.workdps(sol.dps) if sol.dps else _NullCtx()
    with ctx:
        e1, e2 = model.equations(list(sol.rho_series.coeffs), list(sol.psi_series.coeffs), target)
    if clean:
        e1 = _zero_below(e1, n + m)
        e2 = _zero_below(e2, n + 1 - q)
    return e1, e2


def residual_orders(sol: AsymptoticSolution) -> tuple[float, float]:
    """tau-exponents at which the E1 and E2 residuals start."""
    q, m, n = sol.q, sol.multiplicity, sol.n_orders
    return -(n + m) / q, -(n + 1 - q) / q


def _zero_below(s: PuiseuxSeries, exponent: int) -> PuiseuxSeries:
    c = s.coeffs.copy()
    c[:max(0, min(exponent - s.offset, c.size))] = 0
    return PuiseuxSeries(s.q, s.offset, c)


def eval_solution(sol: AsymptoticSolution, tau) -> tuple:
    """(rho, psi) of the truncated series at tau; tau < 1 is extrapolation."""
    return sol.rho_series(tau), sol.psi_series(tau)


def eval_solution_derivative(sol: AsymptoticSolution, tau) -> tuple:
    return sol.rho_series.derivative()(tau), sol.psi_series.derivative()(tau)


def truncation_estimate(sol: AsymptoticSolution, tau) -> tuple:
    """Size of the first omitted (rho, psi) terms at tau."""
    z = np.asarray(tau, dtype=float) ** (-(sol.n_orders + 1) / sol.q)
    return abs(sol.next_terms[0]) * z, abs(sol.next_terms[1]) * z


def numeric_residual(sol: AsymptoticSolution, params: ModelParams, tau, dps: int = 60):
    """(E1, E2) at tau evaluated directly in mpmath, independent of series algebra."""
    with mpmath.workdps(dps):
        t = mpmath.mpf(tau)
        z = t ** (mpmath.mpf(-1) / sol.q)
        rho = drho = psi = dpsi = mpmath.mpf(0)
        for k, c in enumerate(sol.rho_series.coeffs):
            n = sol.rho_series.offset + k
            rho += mpmath.mpf(c) * z ** n
            drho += mpmath.mpf(c) * (-mpmath.mpf(n) / sol.q) * z ** (n + sol.q)
        for k, c in enumerate(sol.psi_series.coeffs):
            psi += mpmath.mpf(c) * z ** k
            dpsi += mpmath.mpf(c) * (-mpmath.mpf(k) / sol.q) * z ** (k + sol.q)
        mu = sum(mpmath.mpf(c) * t ** (-k) for k, c in enumerate(mu_coefficients(params)))
        mu /= mpmath.sqrt(t)
        nu, lam = mpmath.mpf(params.nu), mpmath.mpf(params.lam)
        e1 = drho + mu * rho * mpmath.sin(2 * psi + nu) - mpmath.sin(psi)
        e2 = rho * (dpsi - rho ** 2 + lam * t) + mu * rho * mpmath.cos(2 * psi + nu) - mpmath.cos(psi)
        return float(e1), float(e2)


def to_float(sol: AsymptoticSolution) -> AsymptoticSolution:
    """Copy of an extended-precision solution with float64 coefficients."""
    if sol.dps is None:
        return sol
    conv = lambda s: PuiseuxSeries(s.q, s.offset, _as_dtype(s.coeffs, False))
    return replace(sol, rho_series=conv(sol.rho_series), psi_series=conv(sol.psi_series),
                   sigma_exact=float(sol.sigma_exact), dps=None)


def predicted_residual_exponent(sol: AsymptoticSolution) -> float:
    """tau-exponent of the slowest-decaying term of the substituted residual.

    Order bookkeeping puts E1 at -(n+m)/q and E2 at -(n+1-q)/q; when the next
    coefficient vanishes identically (e.g. odd rho terms for triple roots) the
    first nonzero coefficient of the residual series decides.
    """
    e1, e2 = residual(sol, clean=True)
    rel = 1e-12 if sol.dps is None else 10.0 ** (-sol.dps // 2)
    scale = max(float(np.max(np.abs(e1.coeffs.astype(float)))),
                float(np.max(np.abs(e2.coeffs.astype(float)))))
    lead = [e.leading_exponent(rel, scale) for e in (e1, e2)]
    lead = [x for x in lead if x is not None]
    return max(lead) if lead else -math.inf


def residual_slope(sol: AsymptoticSolution, params: ModelParams,
                   tau_range: tuple[float, float] = (1e2, 1e6), n_points: int = 17,
                   dps: int = 60) -> float:
    """Least-squares slope of log|(E1, E2)| against log tau, evaluated in mpmath."""
    taus = np.logspace(np.log10(tau_range[0]), np.log10(tau_range[1]), n_points)
    norms = [math.hypot(*numeric_residual(sol, params, t, dps)) for t in taus]
    return float(np.polyfit(np.log(taus), np.log(norms), 1)[0])
