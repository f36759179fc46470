"""Closed forms, bounds and approximations for ordered ZF V-BLAST.

Normalized SNR ``x = gamma / gamma0`` is the abscissa of every outage
function here; error-rate functions take the average SNR ``gamma0`` in
linear units.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial

import mpmath
import numpy as np
from scipy import integrate, special

from .channel import Modulation, SystemDims

INTEGRITY_RTOL = 1e-8
_EXP_CLAMP = 700.0
_PROBE_X = tuple(np.logspace(-3, np.log10(20.0), 7))


class FormulaIntegrityError(RuntimeError):
    pass


class FormulaIntegrityWarning(UserWarning):
    pass


_discrepancies: list[dict] = []


def discrepancy_log() -> list[dict]:
    """Formula-integrity events recorded so far in this process."""
    return [dict(e) for e in _discrepancies]


def clear_discrepancy_log() -> None:
    _discrepancies.clear()
    _integrity_cache.clear()


def _nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("normalized SNR must be non-negative")
    return x


def _scalar_or_array(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


# --------------------------------------------------------------------------
# MRC outage and the angle density


def mrc_outage(order_n: int, x):
    """Outage probability of n-th order MRC, ``1 - exp(-x) sum_{i<n} x^i/i!``.

    Below ``x = n`` the equivalent tail series ``exp(-x) sum_{i>=n} x^i/i!``
    is summed instead so small outages keep full relative precision.
    """
    if int(order_n) != order_n or order_n < 1:
        raise ValueError(f"MRC order must be a positive integer, got {order_n}")
    n = int(order_n)
    xa = _nonneg(x)
    flat = np.atleast_1d(xa).astype(float)
    out = np.ones_like(flat)

    small = flat < n
    if np.any(small):
        xs = flat[small]
        term = np.ones_like(xs)
        for i in range(1, n + 1):
            term = term * xs / i
        acc = term.copy()
        i = n
        while True:
            i += 1
            term = term * xs / i
            acc += term
            if np.all(term <= 1e-17 * acc):
                break
        out[small] = np.exp(-xs) * acc

    big = ~small & (flat <= _EXP_CLAMP)
    if np.any(big):
        xb = flat[big]
        term = np.ones_like(xb)
        acc = np.ones_like(xb)
        for i in range(1, n):
            term = term * xb / i
            acc += term
        out[big] = 1.0 - np.exp(-xb) * acc

    out = np.clip(out, 0.0, 1.0).reshape(np.shape(xa))
    return _scalar_or_array(out, xa)


def marginal_pdf_phi(dims: SystemDims, phi):
    """Density of the angle between one column and the span of the others."""
    n, m = dims.n, dims.m
    if m < 2:
        raise ValueError("the angle density needs m >= 2")
    p = np.asarray(phi, dtype=float)
    if np.any(p < -1e-15) or np.any(p > np.pi / 2 + 1e-15):
        raise ValueError("phi must lie in [0, pi/2]")
    p = np.clip(p, 0.0, np.pi / 2)
    k = 2 * (m - 1) * comb(n - 1, m - 1)
    out = k * np.sin(p) ** (2 * (n - m) + 1) * np.cos(p) ** (2 * m - 3)
    return _scalar_or_array(out, p)


def _angle_quadrature(dims: SystemDims, x: float, power: int) -> float:
    if x == 0:
        return 0.0
    n = dims.n

    def integrand(phi):
        s2 = math.sin(phi) ** 2
        if s2 == 0.0:
            return 0.0
        y = x / s2
        f = 1.0 if y > _EXP_CLAMP else mrc_outage(n, y)
        return marginal_pdf_phi(dims, phi) * f ** power

    # the integrand turns on around sin^2(phi) ~ x; give quad that breakpoint
    points = [math.asin(math.sqrt(min(1.0, c * x))) for c in (0.5, 2.0, 8.0) if c * x < 1.0]
    val, _ = integrate.quad(integrand, 0.0, math.pi / 2, points=points or None,
                            epsabs=0.0, epsrel=1e-13, limit=400)
    return min(max(val, 0.0), 1.0)


def f1_bound_suboptimal_quadrature(dims: SystemDims, x):
    """Inner Hölder bound on the first-step outage, by adaptive quadrature.

    Equals the first-step outage of before-projection (column-norm) ordering.
    """
    if dims.m < 2:
        raise ValueError("the ordering bound needs m >= 2")
    xa = _nonneg(x)
    vals = np.array([_angle_quadrature(dims, float(v), dims.m) for v in np.atleast_1d(xa)])
    return _scalar_or_array(vals.reshape(np.shape(xa)), xa)


def f1_unordered(dims: SystemDims, x):
    """First-step outage of unordered V-BLAST (outer bound), by quadrature."""
    xa = _nonneg(x)
    if dims.m == 1:
        return mrc_outage(dims.n, xa)
    vals = np.array([_angle_quadrature(dims, float(v), 1) for v in np.atleast_1d(xa)])
    return _scalar_or_array(vals.reshape(np.shape(xa)), xa)


def f1_lower_exchangeable(dims: SystemDims, x):
    """Lower bound ``(F1_unordered)^m`` from exchangeability of the angles."""
    base = np.asarray(f1_unordered(dims, x), dtype=float)
    return _scalar_or_array(base ** dims.m, base)


# --------------------------------------------------------------------------
# Coefficient table of the closed-form first-step bound


def _truncated_exp_power(n: int, l: int) -> list[Fraction]:
    """Coefficients of ``(sum_{j<n} t^j / j!)^l``."""
    base = [Fraction(1, factorial(j)) for j in range(n)]
    out = [Fraction(1)]
    for _ in range(l):
        new = [Fraction(0)] * (len(out) + n - 1)
        for i, ci in enumerate(out):
            if ci:
                for j, bj in enumerate(base):
                    new[i + j] += ci * bj
        out = new
    return out


@dataclass(frozen=True)
class CoefficientTable:
    """Exact rational coefficients of the first-step closed-form bound.

    ``convention`` selects how the ``d_p`` prefactor is read: ``"factorial"``
    uses ``(-1)^p / p!`` and ``"printed"`` uses ``(-1)^p / p`` literally
    (with the ``p = 0`` entry taken without prefactor).
    """

    dims: SystemDims
    a: dict
    b: dict
    d: dict
    c: dict
    alpha: dict
    convention: str = "factorial"
    polynomials: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def prefactor(self) -> int:
        n, m = self.dims.n, self.dims.m
        return (-1) ** (m - 2) * (m - 1) * comb(n - 1, m - 1)

    def exponential_polynomials(self) -> dict:
        """``{l: [q_0, q_1, ...]}`` with ``B1(x) = sum_l exp(-l x) sum_k q_k x^k``."""
        return self.polynomials


@functools.lru_cache(maxsize=None)
def build_coefficient_table(dims: SystemDims, convention: str = "factorial") -> CoefficientTable:
    """Build (and cache) the coefficient table for ``dims``."""
    if convention not in ("factorial", "printed"):
        raise ValueError(f"unknown d_p convention {convention!r}")
    n, m = dims.n, dims.m
    if m < 2:
        raise ValueError("the closed-form bound needs m >= 2")
    div = n - m + 1

    c = {}
    for l in range(m + 1):
        for i, v in enumerate(_truncated_exp_power(n, l)):
            c[(i, l)] = v

    def c_at(i, l):
        return c.get((i, l), Fraction(0))

    alpha = {l: (-1) ** l * comb(m, l) for l in range(m + 1)}

    a = {}
    for l in range(2, m + 1):
        top = l * (n - 1) - n
        # suffix[k][lo] = sum_{i=lo}^{top} c_{i+n,l} l^(-i-n) (k+i)!
        suffix = {}
        for k in range(m - 1):
            acc = Fraction(0)
            col = [Fraction(0)] * (top + 2)
            for i in range(top, -1, -1):
                acc += c_at(i + n, l) * Fraction(1, l ** (i + n)) * factorial(k + i)
                col[i] = acc
            suffix[k] = col
        for p in range(l * (n - 1) - n + m - 1):
            total = Fraction(0)
            lo = max(0, p - m + 2)
            for k in range(max(0, m - 2 - p), m - 1):
                inner = suffix[k][lo] if lo <= top else Fraction(0)
                total += Fraction((-1) ** k * comb(m - 2, k), factorial(p + k - m + 2)) * inner
            a[(p, l)] = total

    b = {}
    for p in range(m - 2):
        total = Fraction(0)
        for k in range(p + 1):
            kk = k - p + m - 2
            binom = comb(m - 2, kk) if 0 <= kk <= m - 2 else 0
            inner = sum((Fraction(factorial(k + i), factorial(i + p + n - m + 2)) for i in range(m - p - 2)),
                        Fraction(0))
            total += Fraction((-1) ** k * binom, factorial(k)) * inner
        b[p] = total

    d = {}
    for p in range(n - 1):
        s = sum((Fraction((-1) ** k * comb(m - 2, k), n - k - 1) for k in range(min(m - 2, n - 2 - p) + 1)),
                Fraction(0))
        if convention == "factorial":
            pref = Fraction((-1) ** p, factorial(p))
        else:
            pref = Fraction((-1) ** p, p) if p else Fraction(1)
        d[p] = pref * s

    # expand prefactor * alpha_l * (J3 + J4 [+ J2]) into plain polynomials
    pre = (-1) ** (m - 2) * (m - 1) * comb(n - 1, m - 1)
    polys = {}
    for l in range(m + 1):
        q: dict[int, Fraction] = {}
        for p, bp in b.items():
            k = div + p
            q[k] = q.get(k, 0) + (-1) ** (n + 1) * Fraction((-l) ** k) * bp
        for p, dp in d.items():
            q[p] = q.get(p, 0) + Fraction((-l) ** p) * dp
        if l >= 2:
            for (p, ll), apl in a.items():
                if ll == l:
                    k = div + p
                    q[k] = q.get(k, 0) + Fraction(l ** k) * apl
        deg = max(q) if q else 0
        coeffs = [pre * alpha[l] * Fraction(q.get(k, 0)) for k in range(deg + 1)]
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        polys[l] = coeffs

    return CoefficientTable(dims, a, b, d, c, alpha, convention, polys)


def _closed_form_value(table: CoefficientTable, x: float) -> float:
    if x == 0:
        return 0.0
    polys = table.exponential_polynomials()
    # the alternating sum cancels badly at small x: raise precision until the
    # result is well above the rounding floor of its largest term
    magnitude = 0.0
    for l, q in polys.items():
        magnitude += math.exp(-l * x) * sum(abs(float(v)) * x ** k for k, v in enumerate(q))
    dps = 30
    while True:
        with mpmath.workdps(dps):
            xm = mpmath.mpf(x)
            total = mpmath.mpf(0)
            for l, q in polys.items():
                poly = mpmath.mpf(0)
                for v in reversed(q):
                    poly = poly * xm + mpmath.mpf(v.numerator) / v.denominator
                total += mpmath.exp(-l * xm) * poly
            val = float(total)
        if magnitude == 0 or abs(val) > magnitude * 10.0 ** (15 - dps) or dps >= 800:
            return min(max(val, 0.0), 1.0)
        dps *= 2


_integrity_cache: dict = {}


def check_table_integrity(table: CoefficientTable) -> bool:
    """Compare the closed form against quadrature on probe points.

    A failure is recorded in the discrepancy log and warned about once.
    """
    key = (table.dims, table.convention)
    if key in _integrity_cache:
        return _integrity_cache[key]
    worst = 0.0
    worst_x = None
    for x in _PROBE_X:
        ref = _angle_quadrature(table.dims, x, table.dims.m)
        got = _closed_form_value(table, x)
        rel = abs(got - ref) / max(abs(ref), 1e-300)
        if rel > worst:
            worst, worst_x = rel, x
    ok = worst <= INTEGRITY_RTOL
    _integrity_cache[key] = ok
    if not ok:
        event = {
            "formula": "f1_bound_closedform",
            "n": table.dims.n,
            "m": table.dims.m,
            "convention": table.convention,
            "max_rel_error": worst,
            "at_x": float(worst_x),
            "action": "quadrature values substituted",
        }
        _discrepancies.append(event)
        warnings.warn(
            f"closed-form bound for {table.dims.n}x{table.dims.m} ({table.convention}) disagrees with "
            f"quadrature by {worst:.3g} at x={worst_x:.3g}; using quadrature",
            FormulaIntegrityWarning,
            stacklevel=3,
        )
    return ok


def f1_bound_closedform(dims: SystemDims, x, table: CoefficientTable | None = None, strict: bool = False):
    """First-step outage bound as a sum of exponentials times polynomials.

    The table is cross-checked against quadrature once. When it fails, the
    quadrature values are returned instead, unless ``strict`` is set, in
    which case :class:`FormulaIntegrityError` is raised.
    """
    if table is None:
        table = build_coefficient_table(dims)
    elif table.dims != dims:
        raise ValueError("coefficient table was built for different dimensions")
    xa = _nonneg(x)
    if not check_table_integrity(table):
        if strict:
            raise FormulaIntegrityError(f"coefficient table for {dims.n}x{dims.m} failed the quadrature check")
        return f1_bound_suboptimal_quadrature(dims, xa)
    vals = np.array([_closed_form_value(table, float(v)) for v in np.atleast_1d(xa)])
    return _scalar_or_array(vals.reshape(np.shape(xa)), xa)


def f1_bound_asymptote(dims: SystemDims, x):
    """Small-x behaviour of the bound: ``(x/2)^(n-m+1) / (n-m+1)!``."""
    d = dims.diversity
    xa = _nonneg(x)
    return _scalar_or_array(np.minimum((xa / 2.0) ** d / factorial(d), 1.0), xa)


def f1_approx_highsnr(dims: SystemDims, x):
    """High-SNR first-step outage of optimal ordering, ``(x/m)^d / d!``."""
    d = dims.diversity
    xa = _nonneg(x)
    return _scalar_or_array(np.minimum((xa / dims.m) ** d / factorial(d), 1.0), xa)


def joint_norm_distribution_approx(dims: SystemDims, x_vec) -> float:
    """Small-argument joint CDF of the m after-projection powers.

    Implemented as ``(sum 1/x_i)^-(n-m+1) / (n-m+1)!`` so that its diagonal
    reproduces :func:`f1_approx_highsnr`.
    """
    xs = np.asarray(x_vec, dtype=float)
    if xs.shape != (dims.m,):
        raise ValueError(f"expected {dims.m} thresholds, got shape {xs.shape}")
    if np.any(xs <= 0):
        raise ValueError("thresholds must be positive")
    d = dims.diversity
    val = (np.sum(1.0 / xs) ** -d) / factorial(d)
    return float(min(val, 1.0))


def step_outage_3x3(step: int, x):
    """Approximate conditional outage at step 2 or 3 of 3x3 V-BLAST."""
    xa = _nonneg(x)
    if step == 2:
        e = np.exp(-xa)
        out = 1.0 - 2.0 * e * (1.0 + xa) + e * e * (1.0 + 2.0 * xa + 9.0 * xa ** 2 / 8.0 + xa ** 3 / 4.0)
    elif step == 3:
        f = np.asarray(mrc_outage(3, xa))
        out = f * (2.0 - f)
    else:
        raise ValueError("step must be 2 or 3")
    return _scalar_or_array(np.clip(out, 0.0, 1.0), xa)


def step_outage_3x3_asymptote(step: int, x):
    """Leading small-x terms: ``x^2/8`` (step 2) and ``x^3/3`` (step 3)."""
    xa = _nonneg(x)
    if step == 2:
        out = xa ** 2 / 8.0
    elif step == 3:
        out = xa ** 3 / 3.0
    else:
        raise ValueError("step must be 2 or 3")
    return _scalar_or_array(out, xa)


def bound_3x3_explicit(x):
    """The explicit 3x3 form of the closed-form bound."""
    xa = _nonneg(x)
    out = (1.0 - 3.0 * np.exp(-xa)
           + np.exp(-2 * xa) * (3.0 + 15.0 / 8.0 * xa + 3.0 / 8.0 * xa ** 2)
           - np.exp(-3 * xa) * (1.0 + 110.0 / 81.0 * xa + 7.0 / 9.0 * xa ** 2 + 2.0 / 9.0 * xa ** 3 + xa ** 4 / 36.0))
    return _scalar_or_array(np.clip(out, 0.0, 1.0), xa)


# --------------------------------------------------------------------------
# Average error rates

_GL_NODES = 96
_laguerre_cache: dict = {}
_leg_x, _leg_w = np.polynomial.legendre.leggauss(_GL_NODES)
_CRAIG_THETA = (np.pi / 4) * (_leg_x + 1.0)
_CRAIG_W = (np.pi / 4) * _leg_w


def _genlaguerre(alpha: int):
    if alpha not in _laguerre_cache:
        _laguerre_cache[alpha] = special.roots_genlaguerre(_GL_NODES, alpha)
    return _laguerre_cache[alpha]


def mrc_avg_ber(order_k: int, gamma0, mod: Modulation):
    """Average BER of k-th order MRC over Rayleigh fading at mean branch SNR ``gamma0``.

    BFSK: generalized Gauss-Laguerre with the exponential folded into the
    weight (exact for this integrand). BPSK: Craig's form of Q averaged
    through the fading MGF, Gauss-Legendre on ``(0, pi/2)``.
    """
    if int(order_k) != order_k or order_k < 1:
        raise ValueError(f"MRC order must be a positive integer, got {order_k}")
    k = int(order_k)
    g = np.asarray(gamma0, dtype=float)
    if np.any(g < 0) or np.any(np.isnan(g)):
        raise ValueError("average SNR must be non-negative")
    mod = Modulation(mod)
    flat = np.atleast_1d(g)
    out = np.empty_like(flat)
    for idx, g0 in enumerate(flat):
        if g0 == 0:
            out[idx] = 0.5
        elif mod is Modulation.BFSK:
            _, weights = _genlaguerre(k - 1)
            rate = 0.5 + 1.0 / g0
            # E[0.5 exp(-g/2)], g ~ Gamma(k, g0), substituted t = rate * g
            integral = np.sum(weights * 0.5) / math.gamma(k)
            out[idx] = integral / (g0 * rate) ** k
        else:
            s2 = np.sin(_CRAIG_THETA) ** 2
            out[idx] = np.sum(_CRAIG_W * (s2 / (s2 + g0)) ** k) / np.pi
    out = np.clip(out, 0.0, 0.5).reshape(g.shape)
    return _scalar_or_array(out, g)


def bler_approx(dims: SystemDims, gamma0, mod: Modulation, variant: str = "mrc-gain"):
    """Average BLER approximations of ordered V-BLAST.

    ``mrc-gain``: first-step MRC average at ``m gamma0``; ``power-law``:
    its high-SNR asymptote; ``two-step``: mrc-gain plus a second-step term.
    """
    n, m, d = dims.n, dims.m, dims.diversity
    mod = Modulation(mod)
    g = np.asarray(gamma0, dtype=float)
    if np.any(g <= 0):
        raise ValueError("average SNR must be positive")
    if variant == "mrc-gain":
        out = np.asarray(mrc_avg_ber(d, m * g, mod))
    elif variant == "power-law":
        if mod is Modulation.BFSK:
            out = 0.5 * (2.0 / (m * g)) ** d
        else:
            out = comb(2 * d - 1, d) / (4.0 * m * g) ** d
    elif variant == "two-step":
        out = np.asarray(mrc_avg_ber(d, m * g, mod)) + np.asarray(mrc_avg_ber(d + 1, g, mod))
    else:
        raise ValueError(f"unknown BLER approximation {variant!r}")
    return _scalar_or_array(np.clip(out, 0.0, 1.0), g)


def autocoding_constant(mod: Modulation) -> float:
    """Constant ``a`` in ``BLER ~ a/(m gamma0)`` for square systems."""
    return 0.25 if Modulation(mod) is Modulation.BPSK else 1.0


def tber_approx(dims: SystemDims, gamma0, mod: Modulation, form: str = "bler-over-m"):
    """Average total error rate: ``mrc-gain BLER / m``, or ``a / (m^2 gamma0)`` (form ``square``)."""
    if form == "bler-over-m":
        b = np.asarray(bler_approx(dims, gamma0, mod, "mrc-gain"))
        return _scalar_or_array(b / dims.m, np.asarray(gamma0))
    if form == "square":
        if dims.n != dims.m:
            raise ValueError("the square-system form needs n == m")
        g = np.asarray(gamma0, dtype=float)
        return _scalar_or_array(autocoding_constant(mod) / (dims.m ** 2 * g), g)
    raise ValueError(f"unknown TBER form {form!r}")


def solve_snr_for_target(fn, target: float, lo_db: float = -40.0, hi_db: float = 120.0, tol_db: float = 0.01) -> float:
    """SNR (dB) at which a decreasing error-rate curve ``fn(gamma0)`` hits ``target``.

    Bisection on log10 of the curve against SNR in dB.
    """
    def h(db):
        return math.log10(max(float(fn(10.0 ** (db / 10.0))), 1e-300)) - math.log10(target)

    f_lo, f_hi = h(lo_db), h(hi_db)
    if f_lo < 0 or f_hi > 0:
        raise ValueError(f"target {target} not bracketed by [{lo_db}, {hi_db}] dB")
    while hi_db - lo_db > tol_db:
        mid = 0.5 * (lo_db + hi_db)
        if h(mid) > 0:
            lo_db = mid
        else:
            hi_db = mid
    return 0.5 * (lo_db + hi_db)


@dataclass
class LinearPenaltyReport:
    gamma0: float
    p_e1_unordered: float
    bler_linear_exact: float
    bler_linear_approx: float
    bler_unordered: float
    bler_ordered: float
    target: float | None = None
    snr_db: dict = field(default_factory=dict)

    @property
    def ratio_linear_unordered(self) -> float:
        return self.bler_linear_exact / self.bler_unordered

    @property
    def ratio_linear_ordered(self) -> float:
        return self.bler_linear_exact / self.bler_ordered

    @property
    def penalty_db(self) -> dict:
        """SNR offsets at ``target``: linear vs unordered and linear vs ordered."""
        if not self.snr_db:
            return {}
        s = self.snr_db
        return {
            "linear_vs_unordered": s["linear"] - s["unordered"],
            "linear_vs_ordered": s["linear"] - s["ordered"],
            "unordered_vs_ordered": s["unordered"] - s["ordered"],
        }


def linear_bler_approx(dims: SystemDims, gamma0: float, mod: Modulation, target: float | None = None) -> LinearPenaltyReport:
    """BLER of the linear ZF interface next to unordered and ordered V-BLAST."""
    m, d = dims.m, dims.diversity

    def p_un(g):
        return float(mrc_avg_ber(d, g, mod))

    def lin(g):
        return 1.0 - (1.0 - p_un(g)) ** m

    def ordered(g):
        return float(bler_approx(dims, g, mod, "mrc-gain"))

    p = p_un(gamma0)
    rep = LinearPenaltyReport(
        gamma0=float(gamma0),
        p_e1_unordered=p,
        bler_linear_exact=lin(gamma0),
        bler_linear_approx=m * p,
        bler_unordered=p,
        bler_ordered=ordered(gamma0),
        target=target,
    )
    if target is not None:
        rep.snr_db = {
            "linear": solve_snr_for_target(lin, target),
            "unordered": solve_snr_for_target(p_un, target),
            "ordered": solve_snr_for_target(ordered, target),
        }
    return rep


# --------------------------------------------------------------------------
# Genie chain and slope extraction


@dataclass
class GenieLink:
    k: int
    value: float | None
    source: str


@dataclass
class GenieChain:
    links: list

    @property
    def monotone(self) -> bool:
        vals = [l.value for l in self.links if l.value is not None]
        return all(a >= b for a, b in zip(vals, vals[1:]))


def genie_lower_bound_chain(dims: SystemDims, x: float | None = None, estimator=None) -> GenieChain:
    """First-step outage (or any estimator) for n x k systems, k = m down to 2.

    Without an estimator only the sharp n x 2 closed form is available;
    other links are tagged ``"mc-required"``. ``estimator(SystemDims)``
    supplies Monte-Carlo values, in which case the same estimator also
    serves the n x 2 link when ``x`` is None.
    """
    links = []
    for k in range(dims.m, 1, -1):
        sub = SystemDims(dims.n, k)
        if k == 2 and x is not None:
            links.append(GenieLink(k, float(f1_bound_closedform(sub, x)), "closed-form"))
        elif estimator is not None:
            links.append(GenieLink(k, float(estimator(sub)), "mc"))
        else:
            links.append(GenieLink(k, None, "mc-required"))
    return GenieChain(links)


def loglog_slope(fn, x_lo: float = 1e-3, x_hi: float = 1e-2, points: int = 9) -> float:
    """Least-squares slope of log F against log x on a log-spaced grid."""
    xs = np.logspace(np.log10(x_lo), np.log10(x_hi), points)
    ys = np.asarray([float(fn(x)) for x in xs])
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
