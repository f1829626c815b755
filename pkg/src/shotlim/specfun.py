"""Special functions used by the Levy tail formulas and Gaussian probabilities.

Every scalar routine returns a :class:`SpecFunResult` carrying the value and
an absolute error bound.  The bound covers series truncation, the
Euler-Maclaurin remainder and accumulated rounding; it is conservative rather
than tight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

EULER_GAMMA = 0.57721566490153286061
_EPS = np.finfo(float).eps

# below this margin b1+b2-a1-a2-a3 the x=1 series is flagged as risky
DIVERGENCE_RISK_MARGIN = 0.1


class DomainError(ValueError):
    """Argument outside the domain of the function."""


class DivergenceError(ArithmeticError):
    """The hypergeometric series does not converge at the requested point."""


class ConvergenceError(ArithmeticError):
    """A series or continued fraction did not settle within its term budget."""


@dataclass(frozen=True)
class SpecFunResult:
    value: float
    est_abs_error: float
    divergence_risk: bool = False

    def __float__(self) -> float:
        return float(self.value)


# ---------------------------------------------------------------------------
# exponential integral E1
# ---------------------------------------------------------------------------

def _ei1_series(x: float) -> SpecFunResult:
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    total = 0.0
    abs_total = 0.0
    term = 1.0
    k = 0
    while True:
        k += 1
        term *= -x / k
        contrib = term / k
        total += contrib
        abs_total += abs(contrib)
        nxt = abs(term * x / (k + 1) / (k + 1))
        if nxt < _EPS * max(abs(total), 1e-300) or k > 200:
            break
    log_x = math.log(x)
    value = -EULER_GAMMA - log_x - total
    # alternating series: first omitted term bounds the truncation error
    err = nxt + 4 * _EPS * (EULER_GAMMA + abs(log_x) + abs_total)
    return SpecFunResult(value, float(err))


def _ei1_contfrac(x: float) -> SpecFunResult:
    # modified Lentz on E1(x) = e^{-x} / (x+1- 1/(x+3- 4/(x+5- ...)))
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    delta = 0.0
    for i in range(1, 500):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ConvergenceError(f"E1 continued fraction stalled at x={x}")
    value = h * math.exp(-x)
    err = abs(value) * (abs(delta - 1.0) + 8 * i * _EPS)
    return SpecFunResult(value, float(err))


def ei1(x: float) -> SpecFunResult:
    """Exponential integral E1(x) = int_1^inf e^{-sx}/s ds for x > 0."""
    x = float(x)
    if not x > 0:
        raise DomainError(f"ei1 requires x > 0, got {x}")
    if x < 1.0:
        return _ei1_series(x)
    return _ei1_contfrac(x)


# ---------------------------------------------------------------------------
# generalized hypergeometric 3F2
# ---------------------------------------------------------------------------

def _is_nonpos_int(v: float) -> bool:
    return v <= 0 and float(v).is_integer()


def _series_terms(a, b, x, n_max):
    """First n_max terms t_0..t_{n_max-1} of the 3F2 series."""
    n = np.arange(n_max - 1, dtype=float)
    ratio = (a[0] + n) * (a[1] + n) * (a[2] + n) / ((b[0] + n) * (b[1] + n) * (n + 1.0)) * x
    terms = np.empty(n_max)
    terms[0] = 1.0
    terms[1:] = np.cumprod(ratio)
    return terms


def _lgamma_ratio_rest(z: float, a: float, b: float) -> float:
    """ln Gamma(z+a) - ln Gamma(z+b) - (a-b) ln z, stable for large z."""
    if z > 1e300:
        return 0.0
    w1, w2 = z + a, z + b
    val = (z + a - 0.5) * math.log1p(a / z) - (z + b - 0.5) * math.log1p(b / z) - (a - b)
    # Stirling corrections B_2k / (2k (2k-1) w^(2k-1))
    for coef, p in ((1 / 12, 1), (-1 / 360, 3), (1 / 1260, 5), (-1 / 1680, 7)):
        val += coef * (w1 ** -p - w2 ** -p)
    return val


def _tail_at_one(a, b, n0: int, t_n0: float, margin: float):
    """Euler-Maclaurin estimate of sum_{n>=n0} t_n at x = 1.

    The term continued to real n behaves like n^(-1-margin) exp(R(n)) with R
    slowly varying; substituting n = n0 w^(-1/margin) turns the integral part
    into (n0/margin) int_0^1 exp(R(n) - R(n0)) dw.
    """
    pairs = ((a[0], b[0]), (a[1], b[1]), (a[2], 1.0))

    def rest(n):
        return sum(_lgamma_ratio_rest(n, ai, bi) for ai, bi in pairs)

    r0 = rest(float(n0))
    log_n0 = math.log(n0)

    def integrand(w):
        log_n = log_n0 - math.log(w) / margin
        n = math.exp(log_n) if log_n < 690.0 else math.inf
        return math.exp(rest(n) - r0)

    integral, quad_err = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    integral *= n0 / margin
    quad_err *= n0 / margin

    nn = float(n0)
    g = sum(special.digamma(nn + ai) - special.digamma(nn + bi) for ai, bi in pairs)
    g1 = sum(special.polygamma(1, nn + ai) - special.polygamma(1, nn + bi) for ai, bi in pairs)
    g2 = sum(special.polygamma(2, nn + ai) - special.polygamma(2, nn + bi) for ai, bi in pairs)
    d1 = g
    d3 = g ** 3 + 3 * g * g1 + g2
    em = 0.5 - d1 / 12.0 + d3 / 720.0
    tail = t_n0 * (integral + em)
    # next Euler-Maclaurin term is of order |g|^5 / 30240
    rem = abs(t_n0) * (2 * abs(g) ** 5 / 30240.0 + abs(integral) * 1e-13 + quad_err)
    return tail, rem


def hyp3f2(a1: float, a2: float, a3: float, b1: float, b2: float, x: float) -> SpecFunResult:
    """Generalized hypergeometric series 3F2(a1,a2,a3; b1,b2; x) for x in [0, 1].

    For x < 1 the series is summed directly with a geometric tail bound.  At
    x = 1 the first terms are summed directly and the remainder is evaluated by
    Euler-Maclaurin summation of the analytically continued term.
    """
    a = (float(a1), float(a2), float(a3))
    b = (float(b1), float(b2))
    x = float(x)
    if any(_is_nonpos_int(v) for v in b):
        raise DomainError("lower parameters must not be non-positive integers")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"hyp3f2 is implemented for x in [0, 1], got {x}")
    if x == 0.0 or any(v == 0.0 for v in a):
        return SpecFunResult(1.0, 0.0)

    # terminating series: a negative integer upper parameter
    stops = [int(-v) for v in a if _is_nonpos_int(v)]
    if stops:
        terms = _series_terms(a, b, x, min(stops) + 1)
        value = math.fsum(terms)
        return SpecFunResult(float(value), 4 * len(terms) * _EPS * float(np.abs(terms).sum()))

    margin = b[0] + b[1] - a[0] - a[1] - a[2]
    if x == 1.0:
        if margin <= 0:
            raise DivergenceError(
                f"3F2 diverges at x=1: b1+b2-a1-a2-a3 = {margin:g} <= 0")
        n0 = int(max(256, 40 * max(abs(v) for v in a + b)))
        terms = _series_terms(a, b, 1.0, n0 + 1)
        head = math.fsum(terms[:n0])
        tail, rem = _tail_at_one(a, b, n0, float(terms[n0]), margin)
        err = rem + 4 * n0 * _EPS * float(np.abs(terms).sum()) + _EPS * abs(tail)
        return SpecFunResult(float(head + tail), float(err), divergence_risk=margin < DIVERGENCE_RISK_MARGIN)

    chunk = 4096
    total = 0.0
    abs_sum = 0.0
    last = 1.0
    n_start = 0
    max_terms = 4_000_000
    while n_start < max_terms:
        n = np.arange(n_start, n_start + chunk, dtype=float)
        ratio = (a[0] + n) * (a[1] + n) * (a[2] + n) / ((b[0] + n) * (b[1] + n) * (n + 1.0)) * x
        block = last * np.concatenate(([1.0], np.cumprod(ratio[:-1])))
        total += math.fsum(block)
        abs_sum += float(np.abs(block).sum())
        last = float(block[-1] * ratio[-1])
        n_end = n_start + chunk
        # beyond n_end the term ratio approaches x monotonically
        nn = np.array([n_end, 4 * n_end], dtype=float)
        r_far = np.abs((a[0] + nn) * (a[1] + nn) * (a[2] + nn) / ((b[0] + nn) * (b[1] + nn) * (nn + 1.0)) * x)
        rho = max(float(r_far.max()), x)
        if rho < 1.0:
            bound = abs(last) / (1.0 - rho)
            if bound <= _EPS * abs(total) or bound == 0.0:
                err = bound + 4 * n_end * _EPS * abs_sum
                return SpecFunResult(float(total), float(err))
        n_start = n_end
    raise ConvergenceError(f"3F2 series did not converge within {max_terms} terms at x={x}")


def hyp3f2_partial_sums(a1, a2, a3, b1, b2, x, n_terms: int) -> np.ndarray:
    """Partial sums S_0..S_{n_terms-1} of the 3F2 series."""
    terms = _series_terms((a1, a2, a3), (b1, b2), float(x), int(n_terms))
    return np.cumsum(terms)


# ---------------------------------------------------------------------------
# Gaussian helpers
# ---------------------------------------------------------------------------

def std_normal_cdf(x):
    """Standard normal cdf through the complementary error function."""
    out = 0.5 * special.erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def lgamma(x: float) -> float:
    """ln|Gamma(x)| from the C library (relative accuracy near 1e-15)."""
    return math.lgamma(x)
