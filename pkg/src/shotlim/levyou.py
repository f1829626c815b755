"""Levy-driven OU limits dY = -a Y dt + dL and the Gaussian OU.

Subordinators: compound Poisson with unit jumps (PoissonProc), gamma process
(GammaProc), inverse Gaussian process (IGProc) and the beta-type process
(BetaProc, density/tail/moments only).

The exact transitions of OU-Gamma and OU-IG split the stochastic integral
int_0^h e^{-a(h-s)} dL(s) into an infinitely active part that has a closed
law (gamma or inverse Gaussian) and a compound Poisson remainder with finite
rate.  Long steps are cut into sub-steps of length at most 1/a; composing
exact transitions keeps the result exact and bounds the compound Poisson
rate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy import integrate, special, stats

from .distributions import Degenerate, InverseGaussian
from .shotnoise import QuadratureError, sample_window
from .specfun import DomainError, ei1, hyp3f2, std_normal_cdf


class NoExactSamplerError(NotImplementedError):
    """No exact transition sampler exists for this subordinator."""


class DivergenceRiskWarning(RuntimeWarning):
    """The closed form relies on a 3F2 value at x=1 with a small convergence margin."""


class SubordinatorSpec:
    tag: ClassVar[str] = ""

    def density(self, x):
        raise NotImplementedError

    def tail(self, x: float) -> float:
        raise NotImplementedError

    def exponent(self, w):
        """Levy exponent psi(w) = int (e^{iwx} - 1) u(x) dx."""
        raise NotImplementedError

    @property
    def increment_mean(self) -> float:
        raise NotImplementedError

    @property
    def increment_msq(self) -> float:
        """int x^2 u(x) dx, which is the variance of L(1)."""
        raise NotImplementedError

    @property
    def support_upper(self) -> float:
        return math.inf

    def atoms(self):
        return []

    def to_dict(self) -> dict:
        return {"subordinator": self.tag, **{k: float(v) for k, v in self.__dict__.items()}}

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0) or np.any(x >= self.support_upper):
            raise DomainError(f"Levy density of {self.tag} is defined on (0, {self.support_upper})")
        return x


@dataclass(frozen=True)
class PoissonProc(SubordinatorSpec):
    mu: float
    tag: ClassVar[str] = "PP"

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("PoissonProc rate must be > 0")

    def density(self, x):
        raise DomainError("PoissonProc has an atom at 1 and no density; use atoms()")

    def atoms(self):
        return [(1.0, float(self.mu))]

    def tail(self, x):
        if x <= 0:
            raise DomainError("tail requires x > 0")
        return float(self.mu) if x < 1.0 else 0.0

    def exponent(self, w):
        w = np.asarray(w, dtype=float)
        return self.mu * (np.exp(1j * w) - 1.0)

    @property
    def increment_mean(self):
        return float(self.mu)

    @property
    def increment_msq(self):
        return float(self.mu)


@dataclass(frozen=True)
class GammaProc(SubordinatorSpec):
    shape: float
    rate: float
    tag: ClassVar[str] = "GP"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("GammaProc parameters must be > 0")

    def density(self, x):
        x = self._check_x(x)
        return self.shape * np.exp(-self.rate * x) / x

    def tail(self, x):
        if x <= 0:
            raise DomainError("tail requires x > 0")
        return self.shape * ei1(self.rate * x).value

    def exponent(self, w):
        w = np.asarray(w, dtype=float)
        return -self.shape * np.log(1.0 - 1j * w / self.rate)

    @property
    def increment_mean(self):
        return self.shape / self.rate

    @property
    def increment_msq(self):
        return self.shape / self.rate**2


@dataclass(frozen=True)
class IGProc(SubordinatorSpec):
    s: float
    b: float
    tag: ClassVar[str] = "IGP"

    def __post_init__(self):
        if not (self.s > 0 and self.b > 0):
            raise ValueError("IGProc parameters must be > 0")

    def density(self, x):
        x = self._check_x(x)
        return self.s * np.exp(-0.5 * self.b**2 * x) / np.sqrt(2 * math.pi * x**3)

    def tail(self, x):
        if x <= 0:
            raise DomainError("tail requires x > 0")
        z = self.b * math.sqrt(x / 2.0)
        if z < 8.0:
            return self.s * (math.sqrt(2.0 / (math.pi * x)) * math.exp(-z * z) - self.b * special.erfc(z))
        # 1 - sqrt(pi) z erfcx(z) by its asymptotic series, avoiding cancellation
        acc, term = 0.0, 1.0
        for k in range(1, 12):
            term *= -(2 * k - 1) / (2 * z * z)
            acc -= term
        return self.s * math.sqrt(2.0 / (math.pi * x)) * math.exp(-z * z) * acc

    def exponent(self, w):
        w = np.asarray(w, dtype=float)
        arg = self.b**2 - 2j * w
        # Re(arg) = b^2 > 0 along any path, so the principal root never crosses its cut
        assert np.all(arg.real > 0)
        return self.s * (self.b - np.sqrt(arg))

    @property
    def increment_mean(self):
        return self.s / self.b

    @property
    def increment_msq(self):
        return self.s / self.b**3


@dataclass(frozen=True)
class BetaProc(SubordinatorSpec):
    mu: float
    beta: float
    tag: ClassVar[str] = "BP"

    def __post_init__(self):
        if not (self.mu > 0 and self.beta > 0):
            raise ValueError("BetaProc parameters must be > 0")

    @property
    def support_upper(self):
        return 1.0

    def density(self, x):
        x = self._check_x(x)
        return self.mu * self.beta * (1.0 - x) ** (self.beta - 1.0) / x

    def tail(self, x):
        """mu beta {(beta-1) [x F(x) - F(1)] - ln x} with F = 3F2(1,1,2-beta; 2,2; .)."""
        if not 0 < x < 1:
            raise DomainError("BetaProc tail requires x in (0, 1)")
        beta = self.beta
        f1 = hyp3f2(1, 1, 2 - beta, 2, 2, 1.0)
        if f1.divergence_risk:
            warnings.warn(f"3F2 at x=1 has convergence margin {beta:g}; using quadrature",
                          DivergenceRiskWarning, stacklevel=2)
            return self._tail_quad(x)
        fx = hyp3f2(1, 1, 2 - beta, 2, 2, x)
        return self.mu * beta * ((beta - 1.0) * (x * fx.value - f1.value) - math.log(x))

    def _tail_quad(self, x):
        val, _ = integrate.quad(lambda s: 1.0 / s, x, 1.0, weight="alg", wvar=(0.0, self.beta - 1.0),
                                epsabs=0.0, epsrel=1e-12, limit=400)
        return self.mu * self.beta * val

    def exponent(self, w):
        w = np.asarray(w, dtype=float)
        out = np.empty(w.shape, dtype=complex)
        for i, wi in np.ndenumerate(w):
            out[i] = self._exponent_scalar(float(wi))
        return out

    def _exponent_scalar(self, w):
        mb, beta = self.mu * self.beta, self.beta
        if abs(w) <= 12.0:
            # mu beta sum_k (iw)^k B(k, beta) / k!
            total, c = 0j, 1.0 + 0j
            for k in range(1, 200):
                # B(k, beta) / k! built up recursively
                c *= 1j * w / k
                term = c * math.exp(special.betaln(k, beta))
                total += term
                if abs(term) < 1e-18 * max(abs(total), 1e-300) and k > abs(w):
                    break
            return mb * total
        opts = dict(weight="alg", wvar=(0.0, beta - 1.0), limit=400)
        re, _ = integrate.quad(lambda x: (math.cos(w * x) - 1.0) / x, 0.0, 1.0, **opts)
        im, _ = integrate.quad(lambda x: math.sin(w * x) / x, 0.0, 1.0, **opts)
        return mb * complex(re, im)

    @property
    def increment_mean(self):
        return float(self.mu)

    @property
    def increment_msq(self):
        return self.mu / (self.beta + 1.0)


SUBORDINATORS = {cls.tag: cls for cls in (PoissonProc, GammaProc, IGProc, BetaProc)}


def subordinator_from_dict(d: dict) -> SubordinatorSpec:
    d = dict(d)
    tag = d.pop("subordinator")
    return SUBORDINATORS[tag](**d)


def levy_density(spec: SubordinatorSpec, x):
    return spec.density(x)


def levy_tail(spec: SubordinatorSpec, x: float) -> float:
    return spec.tail(x)


# ---------------------------------------------------------------------------
# OU processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevyOUParams:
    alpha: float
    y0: float
    subordinator: SubordinatorSpec

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.y0 < 0:
            raise ValueError("y0 must be >= 0")

    def to_dict(self):
        return {"alpha": self.alpha, "y0": self.y0, "subordinator": self.subordinator.to_dict()}


@dataclass(frozen=True)
class OUMoments:
    mean: float
    variance: float
    covariance: float


def levyou_moments(params: LevyOUParams, t: float, s: float = 0.0) -> OUMoments:
    if t < 0 or s < 0:
        raise ValueError("t and s must be >= 0")
    a, sub = params.alpha, params.subordinator
    mean = sub.increment_mean / a * (-math.expm1(-a * t)) + params.y0 * math.exp(-a * t)
    var = sub.increment_msq / (2 * a) * (-math.expm1(-2 * a * t))
    return OUMoments(mean, var, var * math.exp(-a * s))


def levyou_char_fn(params: LevyOUParams, t: float, u: float, tol: float = 1e-8) -> complex:
    """exp(int_0^t psi(u e^{-a v}) dv + i u y0 e^{-a t}), outer integral in r = e^{-a v}."""
    if t < 0:
        raise ValueError("t must be >= 0")
    u = float(u)
    a, sub = params.alpha, params.subordinator
    r_lo = math.exp(-a * t)
    if u == 0.0 or t == 0.0:
        return complex(np.exp(1j * u * params.y0 * r_lo))

    def g(r):
        return complex(sub.exponent(u * r)) / (a * r)

    opts = dict(epsabs=tol / 4, epsrel=1e-12, limit=500)
    re, e1 = integrate.quad(lambda r: g(r).real, r_lo, 1.0, **opts)
    im, e2 = integrate.quad(lambda r: g(r).imag, r_lo, 1.0, **opts)
    if e1 + e2 > tol:
        raise QuadratureError(f"characteristic function quadrature reached only {e1 + e2:.2e}")
    return complex(np.exp(complex(re, im) + 1j * u * params.y0 * r_lo))


def _as_state(y0, size):
    y = np.asarray(y0, dtype=float)
    if size is not None:
        y = np.broadcast_to(y, (int(size),)).copy()
    return y.astype(float, copy=True)


def _finish(y, y0, size):
    return float(y) if (size is None and np.ndim(y0) == 0) else y


def ou_gamma_transition(y0, dt: float, alpha: float, spec: GammaProc, rng, size: int | None = None):
    """Exact draw(s) of Y(t+dt) given Y(t)=y0 for the OU process driven by a gamma process.

    Per sub-step h with E = e^{a h}: Y = y0/E + Gamma(shape h, rate beta E)
    + sum_{k<=N} Exp(rate beta e^{a h sqrt(U_k)}) with N ~ Poisson(shape a h^2 / 2).
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    y = _as_state(y0, size)
    n = y.size
    sh, beta = spec.shape, spec.rate
    step = min(1.0 / alpha, math.sqrt(8.0 / (sh * alpha)))
    m = max(1, math.ceil(dt / step - 1e-12))
    h = dt / m
    x = alpha * h
    decay = math.exp(-x)
    cp_rate = sh * alpha * h * h / 2.0
    flat = y.reshape(-1)
    for _ in range(m):
        g = rng.gamma(sh * h, 1.0, n) / (beta / decay)
        k = rng.poisson(cp_rate, n)
        tot = int(k.sum())
        cp = np.zeros(n)
        if tot:
            z = x * np.sqrt(rng.random(tot))
            jumps = rng.exponential(1.0, tot) / (beta * np.exp(z))
            cp = np.bincount(np.repeat(np.arange(n), k), weights=jumps, minlength=n)
        flat = flat * decay + g + cp
    return _finish(flat.reshape(y.shape), y0, size)


def ou_ig_transition(y0, dt: float, alpha: float, spec: IGProc, rng, size: int | None = None):
    """Exact draw(s) of Y(t+dt) given Y(t)=y0 for the OU process driven by an IG process.

    Per sub-step h (a h <= 1) the increment is IG with Levy parameters
    s' = 2 s (1 - e^{-a h/2}) / a, b' = b e^{a h/2}, plus a compound Poisson sum
    with rate (s b / a)(2 (e^{a h/2} - 1) - a h) and jumps Z^2 / (b q)^2 where
    q on [1, e^{a h/2}] has density proportional to 1 - 1/q.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    y = _as_state(y0, size)
    n = y.size
    s, b = spec.s, spec.b
    m = max(1, math.ceil(alpha * dt - 1e-12))
    h = dt / m
    x = alpha * h
    decay = math.exp(-x)
    s_ig = 2.0 * s * (-math.expm1(-x / 2.0)) / alpha
    b_ig = b * math.exp(x / 2.0)
    ig = InverseGaussian(s_ig / b_ig, s_ig * s_ig)
    if x < 1e-3:
        cp_rate = s * b / alpha * (x * x / 4.0 + x**3 / 24.0 + x**4 / 192.0)
    else:
        cp_rate = s * b / alpha * (2.0 * math.expm1(x / 2.0) - x)
    q_max = math.exp(x / 2.0)
    flat = y.reshape(-1)
    for _ in range(m):
        inc = ig.sample(rng, n)
        k = rng.poisson(cp_rate, n)
        tot = int(k.sum())
        cp = np.zeros(n)
        if tot:
            q = _sample_q(rng, q_max, tot)
            jumps = rng.standard_normal(tot) ** 2 / (b * q) ** 2
            cp = np.bincount(np.repeat(np.arange(n), k), weights=jumps, minlength=n)
        flat = flat * decay + inc + cp
    return _finish(flat.reshape(y.shape), y0, size)


def _sample_q(rng, q_max, k):
    """k draws on [1, q_max] with density proportional to 1 - 1/q (q_max <= 2)."""
    out = np.empty(k)
    filled = 0
    while filled < k:
        m = int((k - filled) * 1.4) + 16
        q = 1.0 + (q_max - 1.0) * np.sqrt(rng.random(m))
        keep = q[rng.random(m) < 1.0 / q][: k - filled]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


def ou_poisson_transition(y0, dt: float, alpha: float, spec: PoissonProc, rng, size: int | None = None):
    """OU-Poisson is shot noise with unit jumps at rate mu."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    y = _as_state(y0, size)
    inc, _ = sample_window(Degenerate(1.0), spec.mu, alpha, dt, y.size, rng)
    out = y.reshape(-1) * math.exp(-alpha * dt) + inc
    return _finish(out.reshape(y.shape), y0, size)


def levyou_transition(params: LevyOUParams, y0, dt: float, rng, size: int | None = None):
    sub = params.subordinator
    if isinstance(sub, GammaProc):
        return ou_gamma_transition(y0, dt, params.alpha, sub, rng, size)
    if isinstance(sub, IGProc):
        return ou_ig_transition(y0, dt, params.alpha, sub, rng, size)
    if isinstance(sub, PoissonProc):
        return ou_poisson_transition(y0, dt, params.alpha, sub, rng, size)
    raise NoExactSamplerError(f"no exact sampler for {type(sub).__name__}")


# ---------------------------------------------------------------------------
# Gaussian OU
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianOUParams:
    mu: float
    sigma2: float
    alpha: float
    y0: float = 0.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be > 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    def to_dict(self):
        return {"mu": self.mu, "sigma2": self.sigma2, "alpha": self.alpha, "y0": self.y0}


class GaussianOU:
    """Gaussian OU dY = (mu - a Y) dt + sigma dW with closed-form marginals."""

    def __init__(self, params: GaussianOUParams):
        self.p = params

    def mean(self, t, y0=None):
        a = self.p.alpha
        y0 = self.p.y0 if y0 is None else y0
        return self.p.mu / a * (-math.expm1(-a * t)) + y0 * math.exp(-a * t)

    def variance(self, t):
        a = self.p.alpha
        return self.p.sigma2 / (2 * a) * (-math.expm1(-2 * a * t))

    def covariance(self, t, s):
        return self.variance(t) * math.exp(-self.p.alpha * s)

    def density(self, t, x):
        v = self.variance(t)
        if v == 0:
            raise DomainError("the law at t=0 is a point mass")
        return stats.norm.pdf(x, self.mean(t), math.sqrt(v))

    def cdf(self, t, x):
        v = self.variance(t)
        x = np.asarray(x, dtype=float)
        if v == 0:
            return np.where(x >= self.mean(t), 1.0, 0.0)
        return std_normal_cdf((x - self.mean(t)) / math.sqrt(v))

    def char_fn(self, t, u):
        u = np.asarray(u, dtype=float)
        return np.exp(1j * u * self.mean(t) - 0.5 * u * u * self.variance(t))

    def nonneg_prob(self, t):
        """P(Y(t) >= 0) = 1 - Phi(-mean / sqrt(variance))."""
        v = self.variance(t)
        m = self.mean(t)
        if v == 0:
            return 1.0 if m >= 0 else 0.0
        return 1.0 - std_normal_cdf(-m / math.sqrt(v))

    def transition_sample(self, y0, dt, rng, size=None):
        a = self.p.alpha
        m = self.p.mu / a * (-math.expm1(-a * dt)) + np.asarray(y0, dtype=float) * math.exp(-a * dt)
        sd = math.sqrt(self.variance(dt))
        if size is None and np.ndim(y0) == 0:
            return float(m + sd * rng.standard_normal())
        shape = (int(size),) if size is not None else np.shape(y0)
        return m + sd * rng.standard_normal(shape)


def gaussian_ou(params: GaussianOUParams) -> GaussianOU:
    return GaussianOU(params)


def tail_table_csv(spec: SubordinatorSpec, xs) -> str:
    """CSV with columns x,u,U; u is left empty for the atomic PoissonProc."""
    lines = ["x,u,U"]
    for x in xs:
        x = float(x)
        u = "" if isinstance(spec, PoissonProc) else repr(float(spec.density(x)))
        lines.append(f"{x!r},{u},{float(spec.tail(x))!r}")
    return "\n".join(lines) + "\n"
