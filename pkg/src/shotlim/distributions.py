"""Jump amplitude families: moments, densities, characteristic functions, sampling.

Each family is a frozen dataclass.  The module-level functions
``jump_moment``, ``sample_jump`` and ``pdf_or_pmf`` dispatch to the methods
so that callers can treat the families as a tagged union.

JSON form (used by CLI configs)::

    {"family": "gamma", "shape": 0.001, "rate": 0.5}

with ``family`` one of degenerate(j), bernoulli(p), poisson(lam_tilde),
exponential(theta), gamma(shape, rate), chisquare(k),
inverse_gaussian(mean, shape), beta(shape_a, shape_b) and
mixture(pos, neg_value, neg_prob) where ``pos`` is itself a family object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import ClassVar

import numpy as np
from scipy import integrate, special, stats

from .specfun import DomainError


def cexpm1(z):
    """exp(z) - 1 for complex z, accurate when |z| is small."""
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    re = np.expm1(x) * np.cos(y) - 2.0 * np.sin(0.5 * y) ** 2
    im = np.exp(x) * np.sin(y)
    return re + 1j * im


class JumpFamily:
    """Base class of the jump amplitude families."""

    tag: ClassVar[str] = ""
    continuous: ClassVar[bool] = False

    def moment(self, k: int) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def cf_minus_one(self, w):
        """E[exp(i w J)] - 1, evaluated without cancellation for small jumps."""
        raise NotImplementedError

    def char_fn(self, w):
        return 1.0 + self.cf_minus_one(w)

    def atoms(self) -> list[tuple[float, float]]:
        """Point masses (location, probability) not covered by ``pdf``."""
        return []

    @property
    def nonnegative(self) -> bool:
        return True

    def nonzero_prob(self) -> float:
        return 1.0

    def sample_nonzero(self, rng, n):
        return self.sample(rng, n)

    def to_dict(self) -> dict:
        out = {"family": self.tag}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_dict() if isinstance(v, JumpFamily) else float(v)
        return out

    def _check_k(self, k):
        if k not in (1, 2, 3, 4):
            raise ValueError(f"moment order must be 1..4, got {k}")


def _require(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class Degenerate(JumpFamily):
    j: float
    tag: ClassVar[str] = "degenerate"

    def moment(self, k):
        self._check_k(k)
        return float(self.j) ** k

    def sample(self, rng, n):
        return np.full(int(n), float(self.j))

    def pdf(self, x):
        return np.where(np.asarray(x) == self.j, 1.0, 0.0)

    def cf_minus_one(self, w):
        return cexpm1(1j * np.asarray(w, dtype=float) * self.j)

    def atoms(self):
        return [(float(self.j), 1.0)]

    @property
    def nonnegative(self):
        return self.j >= 0

    def nonzero_prob(self):
        return 0.0 if self.j == 0 else 1.0


@dataclass(frozen=True)
class Bernoulli(JumpFamily):
    p: float
    tag: ClassVar[str] = "bernoulli"

    def __post_init__(self):
        _require(0.0 <= self.p <= 1.0, f"Bernoulli p must lie in [0, 1], got {self.p}")

    def moment(self, k):
        self._check_k(k)
        return float(self.p)

    def sample(self, rng, n):
        return (rng.random(int(n)) < self.p).astype(float)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x == 1.0, self.p, np.where(x == 0.0, 1.0 - self.p, 0.0))

    def cf_minus_one(self, w):
        return self.p * cexpm1(1j * np.asarray(w, dtype=float))

    def atoms(self):
        return [(0.0, 1.0 - self.p), (1.0, float(self.p))]

    def nonzero_prob(self):
        return float(self.p)

    def sample_nonzero(self, rng, n):
        return np.ones(int(n))


@dataclass(frozen=True)
class Poisson(JumpFamily):
    lam_tilde: float
    tag: ClassVar[str] = "poisson"

    def __post_init__(self):
        _require(self.lam_tilde > 0, f"Poisson lam_tilde must be > 0, got {self.lam_tilde}")

    def moment(self, k):
        self._check_k(k)
        m = self.lam_tilde
        # Touchard polynomials
        return {1: m, 2: m + m**2, 3: m + 3 * m**2 + m**3, 4: m + 7 * m**2 + 6 * m**3 + m**4}[k]

    def sample(self, rng, n):
        return rng.poisson(self.lam_tilde, int(n)).astype(float)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        ok = (x >= 0) & (x == np.floor(x))
        xs = np.where(ok, x, 0.0)
        val = np.exp(special.xlogy(xs, self.lam_tilde) - self.lam_tilde - special.gammaln(xs + 1.0))
        return np.where(ok, val, 0.0)

    def cf_minus_one(self, w):
        return cexpm1(self.lam_tilde * cexpm1(1j * np.asarray(w, dtype=float)))

    def nonzero_prob(self):
        return float(-math.expm1(-self.lam_tilde))

    def sample_nonzero(self, rng, n):
        """Zero-truncated Poisson draws."""
        n = int(n)
        lam = self.lam_tilde
        if lam > 1.0:
            out = rng.poisson(lam, n)
            bad = out == 0
            while bad.any():
                out[bad] = rng.poisson(lam, int(bad.sum()))
                bad = out == 0
            return out.astype(float)
        # inversion on P(K=k | K>=1) = lam^k / (k! (e^lam - 1))
        u = rng.random(n) * (-math.expm1(-lam))
        out = np.ones(n)
        prob = lam * math.exp(-lam)
        cum = np.full(n, prob)
        k = 1
        active = u > cum
        while active.any() and k < 200:
            k += 1
            prob *= lam / k
            out[active] = k
            cum[active] += prob
            active = active & (u > cum)
        return out


@dataclass(frozen=True)
class Exponential(JumpFamily):
    theta: float
    tag: ClassVar[str] = "exponential"
    continuous: ClassVar[bool] = True

    def __post_init__(self):
        _require(self.theta > 0, f"Exponential mean must be > 0, got {self.theta}")

    def as_gamma(self) -> "Gamma":
        return Gamma(1.0, 1.0 / self.theta)

    def moment(self, k):
        self._check_k(k)
        return math.factorial(k) * self.theta**k

    def sample(self, rng, n):
        return rng.exponential(self.theta, int(n))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, np.exp(-np.maximum(x, 0.0) / self.theta) / self.theta, 0.0)

    def cf_minus_one(self, w):
        z = 1j * np.asarray(w, dtype=float) * self.theta
        return z / (1.0 - z)


@dataclass(frozen=True)
class Gamma(JumpFamily):
    shape: float
    rate: float
    tag: ClassVar[str] = "gamma"
    continuous: ClassVar[bool] = True

    def __post_init__(self):
        _require(self.shape > 0 and self.rate > 0, "Gamma shape and rate must be > 0")

    def as_gamma(self) -> "Gamma":
        return self

    def moment(self, k):
        self._check_k(k)
        a = self.shape
        return float(np.prod([a + r for r in range(k)])) / self.rate**k

    def sample(self, rng, n):
        return rng.gamma(self.shape, 1.0 / self.rate, int(n))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, r = self.shape, self.rate
        with np.errstate(divide="ignore"):
            return a * math.log(r) + (a - 1.0) * np.log(x) - r * x - special.gammaln(a)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            return np.where(x > 0, np.exp(self.logpdf(np.where(x > 0, x, 1.0))), 0.0)

    def cf_minus_one(self, w):
        w = np.asarray(w, dtype=float)
        return cexpm1(-self.shape * np.log(1.0 - 1j * w / self.rate))


@dataclass(frozen=True)
class ChiSquare(JumpFamily):
    k: float
    tag: ClassVar[str] = "chisquare"
    continuous: ClassVar[bool] = True

    def __post_init__(self):
        _require(self.k > 0, f"ChiSquare degrees of freedom must be > 0, got {self.k}")

    def as_gamma(self) -> Gamma:
        return Gamma(self.k / 2.0, 0.5)

    def moment(self, k):
        return self.as_gamma().moment(k)

    def sample(self, rng, n):
        return self.as_gamma().sample(rng, n)

    def pdf(self, x):
        return self.as_gamma().pdf(x)

    def logpdf(self, x):
        return self.as_gamma().logpdf(x)

    def cf_minus_one(self, w):
        return self.as_gamma().cf_minus_one(w)


@dataclass(frozen=True)
class InverseGaussian(JumpFamily):
    mean: float
    shape: float
    tag: ClassVar[str] = "inverse_gaussian"
    continuous: ClassVar[bool] = True

    def __post_init__(self):
        _require(self.mean > 0 and self.shape > 0, "InverseGaussian mean and shape must be > 0")

    def moment(self, k):
        self._check_k(k)
        m, lam = self.mean, self.shape
        return {
            1: m,
            2: m**2 + m**3 / lam,
            3: m**3 + 3 * m**4 / lam + 3 * m**5 / lam**2,
            4: m**4 + 6 * m**5 / lam + 15 * m**6 / lam**2 + 15 * m**7 / lam**3,
        }[k]

    def sample(self, rng, n):
        # Michael-Schucany-Haas with the root written to avoid cancellation
        n = int(n)
        m, lam = self.mean, self.shape
        y = rng.standard_normal(n) ** 2
        u = rng.random(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = 4.0 * lam / (m * y)
            x = np.where(y > 0, m * r / (1.0 + np.sqrt(1.0 + r)) ** 2, m)
        return np.where(u <= m / (m + x), x, m * m / x)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        m, lam = self.mean, self.shape
        return 0.5 * (math.log(lam) - math.log(2 * math.pi) - 3.0 * np.log(x)) - lam * (x - m) ** 2 / (2 * m * m * x)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0, np.exp(self.logpdf(np.where(x > 0, x, 1.0))), 0.0)

    def cf_minus_one(self, w):
        w = np.asarray(w, dtype=float)
        m, lam = self.mean, self.shape
        z = 2j * m * m * w / lam
        # (lam/m) (1 - sqrt(1 - z)) = (lam/m) z / (1 + sqrt(1 - z)); Re(1 - z) = 1 > 0
        return cexpm1(lam / m * z / (1.0 + np.sqrt(1.0 - z)))

    def sf(self, x: float) -> float:
        return float(stats.invgauss.sf(x, self.mean / self.shape, scale=self.shape))

    def partial_moment(self, k: int, upper: float) -> float:
        """E[J^k ; J <= upper] by quadrature in log x."""
        lo = math.log(self.shape) - 40.0
        hi = math.log(upper)
        if hi <= lo:
            return 0.0
        mode = math.log(self.shape / 3.0)
        pts = [p for p in (mode, mode + 3.0) if lo < p < hi]

        def f(s):
            return math.exp((k + 1) * s + float(self.logpdf(math.exp(s))))

        val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=0.0, epsrel=1e-11, limit=200)
        return val

    def sample_above(self, rng, n: int, eps: float) -> np.ndarray:
        """Draws conditioned on J > eps (exact rejection sampler).

        On (eps, inf) the density is proportional to
        x^{-3/2} exp(-g x / 2) exp(-shape / (2x)) with g = shape/mean^2; the
        first two factors form the proposal, the last one is the acceptance.
        """
        n = int(n)
        out = np.empty(n)
        g = self.shape / self.mean**2
        filled = 0
        while filled < n:
            need = n - filled
            m = int(need * 1.3) + 16
            if g * eps < 1.0:
                x = eps / rng.random(m) ** 2
                acc = np.exp(-0.5 * g * (x - eps) - 0.5 * self.shape / x)
            else:
                x = eps + rng.exponential(2.0 / g, m)
                acc = (eps / x) ** 1.5 * np.exp(-0.5 * self.shape / x)
            keep = x[rng.random(m) < acc][:need]
            out[filled:filled + keep.size] = keep
            filled += keep.size
        return out


@dataclass(frozen=True)
class Beta(JumpFamily):
    shape_a: float
    shape_b: float
    tag: ClassVar[str] = "beta"
    continuous: ClassVar[bool] = True

    def __post_init__(self):
        _require(self.shape_a > 0 and self.shape_b > 0, "Beta shapes must be > 0")

    def moment(self, k):
        self._check_k(k)
        a, b = self.shape_a, self.shape_b
        return float(np.prod([(a + r) / (a + b + r) for r in range(k)]))

    def sample(self, rng, n):
        return rng.beta(self.shape_a, self.shape_b, int(n))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.shape_a, self.shape_b
        return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - special.betaln(a, b)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any((x <= 0) | (x >= 1)):
            raise DomainError("Beta density is defined on (0, 1)")
        return np.exp(self.logpdf(x))

    def cf_minus_one(self, w):
        w = np.asarray(w, dtype=float)
        out = np.empty(w.shape, dtype=complex)
        flat_w, flat_o = w.ravel(), out.ravel()
        for i, wi in enumerate(flat_w):
            flat_o[i] = self._cf_m1_scalar(float(wi))
        return out

    def _cf_m1_scalar(self, w: float) -> complex:
        a, b = self.shape_a, self.shape_b
        if abs(w) <= 12.0:
            # sum_{k>=1} (iw)^k E[J^k] / k!
            total = 0j
            c = 1.0 + 0j
            for k in range(1, 200):
                c *= 1j * w / k * (a + k - 1) / (a + b + k - 1)
                total += c
                if abs(c) < 1e-18 * max(abs(total), 1e-300) and k > abs(w):
                    break
            return total
        norm = math.exp(-special.betaln(a, b))
        re, _ = integrate.quad(lambda x: math.cos(w * x) - 1.0, 0.0, 1.0, weight="alg", wvar=(a - 1.0, b - 1.0), limit=400)
        im, _ = integrate.quad(lambda x: math.sin(w * x), 0.0, 1.0, weight="alg", wvar=(a - 1.0, b - 1.0), limit=400)
        return complex(re * norm, im * norm)

    def sf(self, x: float) -> float:
        return float(special.betaincc(self.shape_a, self.shape_b, x))

    def partial_moment(self, k: int, upper: float) -> float:
        a, b = self.shape_a, self.shape_b
        return self.moment(k) * float(special.betainc(a + k, b, min(upper, 1.0)))

    def sample_above(self, rng, n: int, eps: float) -> np.ndarray:
        """Draws conditioned on J > eps; two-piece exact rejection sampler."""
        n = int(n)
        a, b = self.shape_a, self.shape_b
        c = max(0.5, eps)
        p_low = float(special.betainc(a, b, c) - special.betainc(a, b, eps)) if c > eps else 0.0
        p_high = float(special.betaincc(a, b, c))
        n_low = rng.binomial(n, p_low / (p_low + p_high)) if p_low > 0 else 0
        low = np.empty(0)
        if n_low:
            low = self._piece_low(rng, n_low, eps, c)
        high = self._piece_high(rng, n - n_low, c)
        out = np.concatenate([low, high])
        rng.shuffle(out)
        return out

    def _piece_low(self, rng, n, lo, hi):
        # proposal ~ x^{a-1} on (lo, hi], acceptance (1-x)^{b-1} / max
        a, b = self.shape_a, self.shape_b
        log_lo, log_hi = math.log(lo), math.log(hi)
        span = math.expm1(a * (log_hi - log_lo))
        top = (1.0 - hi) ** (b - 1.0) if b < 1 else (1.0 - lo) ** (b - 1.0)
        out, filled = np.empty(n), 0
        while filled < n:
            m = int((n - filled) * 1.5) + 16
            x = np.exp(log_lo + np.log1p(rng.random(m) * span) / a)
            x = np.minimum(x, hi)
            acc = (1.0 - x) ** (b - 1.0) / top
            keep = x[rng.random(m) < acc][: n - filled]
            out[filled:filled + keep.size] = keep
            filled += keep.size
        return out

    def _piece_high(self, rng, n, lo):
        # proposal ~ (1-x)^{b-1} on (lo, 1), acceptance x^{a-1} / max
        a, b = self.shape_a, self.shape_b
        top = lo ** (a - 1.0) if a < 1 else 1.0
        out, filled = np.empty(n), 0
        while filled < n:
            m = int((n - filled) * 1.5) + 16
            x = 1.0 - (1.0 - lo) * rng.random(m) ** (1.0 / b)
            acc = x ** (a - 1.0) / top
            keep = x[(rng.random(m) < acc) & (x > lo) & (x < 1.0)][: n - filled]
            out[filled:filled + keep.size] = keep
            filled += keep.size
        return out


@dataclass(frozen=True)
class Mixture(JumpFamily):
    """J = J+ with probability 1-f, J = neg_value with probability f."""

    pos: JumpFamily
    neg_value: float
    neg_prob: float
    tag: ClassVar[str] = "mixture"

    def __post_init__(self):
        _require(self.neg_value <= 0, "Mixture neg_value must be <= 0")
        _require(0.0 <= self.neg_prob <= 1.0, "Mixture neg_prob must be a probability")
        _require(self.pos.nonnegative, "Mixture positive part must be nonnegative")

    @property
    def continuous(self):
        return self.pos.continuous

    @property
    def nonnegative(self):
        return self.neg_prob == 0 or self.neg_value == 0

    def moment(self, k):
        self._check_k(k)
        f = self.neg_prob
        return (1.0 - f) * self.pos.moment(k) + f * self.neg_value**k

    def sample(self, rng, n):
        n = int(n)
        neg = rng.random(n) < self.neg_prob
        out = np.full(n, float(self.neg_value))
        out[~neg] = self.pos.sample(rng, int((~neg).sum()))
        return out

    def pdf(self, x):
        return (1.0 - self.neg_prob) * self.pos.pdf(x)

    def cf_minus_one(self, w):
        f = self.neg_prob
        return (1.0 - f) * self.pos.cf_minus_one(w) + f * cexpm1(1j * np.asarray(w, dtype=float) * self.neg_value)

    def atoms(self):
        f = self.neg_prob
        return [(loc, (1 - f) * p) for loc, p in self.pos.atoms()] + [(float(self.neg_value), f)]


FAMILIES = {cls.tag: cls for cls in (Degenerate, Bernoulli, Poisson, Exponential, Gamma,
                                      ChiSquare, InverseGaussian, Beta, Mixture)}


def family_from_dict(d: dict) -> JumpFamily:
    d = dict(d)
    tag = d.pop("family")
    if tag not in FAMILIES:
        raise ValueError(f"unknown jump family {tag!r}; choose from {sorted(FAMILIES)}")
    if tag == "mixture":
        d["pos"] = family_from_dict(d["pos"])
    return FAMILIES[tag](**d)


def jump_moment(family: JumpFamily, k: int) -> float:
    return family.moment(k)


def sample_jump(family: JumpFamily, rng: np.random.Generator, n: int) -> np.ndarray:
    return family.sample(rng, n)


def pdf_or_pmf(family: JumpFamily, x):
    return family.pdf(x)
