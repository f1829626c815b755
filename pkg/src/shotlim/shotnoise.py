"""Shot noise X(t) = x0 e^{-at} + sum_k J_k e^{-a(t - tau_k)} driven by a Poisson stream.

Path simulation is event driven and exact.  For ensembles of the time-t
marginal the module also provides window samplers that draw the decayed sum
of all events in a window of length h directly:

* families with an atom at zero (Bernoulli, Poisson, Degenerate) are thinned
  to the events with nonzero amplitude, which is exact;
* gamma-type amplitudes (Gamma, Exponential, ChiSquare) use an exact
  decomposition of the window sum into a gamma part plus a compound Poisson
  part whose rate stays bounded as the event rate grows;
* inverse Gaussian and beta amplitudes simulate every jump above a threshold
  exactly and replace the sum of the sub-threshold jumps by a gamma variable
  with the same mean and variance.  The threshold is chosen so that the
  relative error on the third and fourth cumulants stays below
  ``small_jump_tol``; ``exact=True`` switches this off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .distributions import (Beta, ChiSquare, Degenerate, Exponential, Gamma, InverseGaussian,
                            JumpFamily, Mixture)

MAX_PATH_EVENTS = 1e8
_CHUNK_EVENTS = 2_000_000


class ResourceGuardError(RuntimeError):
    """Refusal to start a simulation whose expected size is unreasonable."""


class QuadratureError(ArithmeticError):
    """Numerical integration did not reach the requested accuracy."""


@dataclass(frozen=True)
class ShotNoiseParams:
    lam: float
    alpha: float
    x0: float
    jump: JumpFamily

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"event rate must be > 0, got {self.lam}")
        if not self.alpha > 0:
            raise ValueError(f"decay rate must be > 0, got {self.alpha}")
        if self.x0 < 0:
            raise ValueError(f"x0 must be >= 0, got {self.x0}")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "alpha": self.alpha, "x0": self.x0, "jump": self.jump.to_dict()}


@dataclass
class SamplePath:
    grid_times: np.ndarray
    values: np.ndarray
    event_times: np.ndarray | None = None
    event_amplitudes: np.ndarray | None = None
    seed: int | None = None

    def to_csv(self) -> str:
        lines = ["time,value"]
        lines += [f"{t!r},{v!r}" for t, v in zip(self.grid_times.tolist(), self.values.tolist())]
        return "\n".join(lines) + "\n"

    def events_to_csv(self) -> str:
        lines = ["time,amplitude"]
        if self.event_times is not None:
            lines += [f"{t!r},{a!r}" for t, a in zip(self.event_times.tolist(), self.event_amplitudes.tolist())]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# exact paths
# ---------------------------------------------------------------------------

def draw_events(jump: JumpFamily, lam: float, horizon: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Event times on [0, horizon] and their amplitudes.

    Given the Poisson count the times are sorted uniforms, which is the same
    law as exponential inter-arrival times.
    """
    if lam * horizon > MAX_PATH_EVENTS:
        raise ResourceGuardError(
            f"expected {lam * horizon:.3g} events exceeds {MAX_PATH_EVENTS:.0e}; "
            "use shot_moments or shot_char_fn instead")
    k = int(rng.poisson(lam * horizon))
    times = np.sort(rng.random(k) * horizon)
    amps = jump.sample(rng, k)
    return times, amps


def path_from_events(x0: float, alpha: float, grid, times, amps) -> np.ndarray:
    """Read the path off exactly on ``grid`` given the events."""
    grid = np.asarray(grid, dtype=float)
    times = np.asarray(times, dtype=float)
    amps = np.asarray(amps, dtype=float)
    out = np.empty(grid.size)
    # events in (grid[g-1], grid[g]] decayed to grid[g], then carried forward
    cut = np.searchsorted(times, grid, side="right")
    state = 0.0
    prev_t = 0.0
    prev_c = 0
    for g, (t, c) in enumerate(zip(grid, cut)):
        state *= math.exp(-alpha * (t - prev_t))
        if c > prev_c:
            state += float(np.sum(amps[prev_c:c] * np.exp(-alpha * (t - times[prev_c:c]))))
        out[g] = state + x0 * math.exp(-alpha * t)
        prev_t, prev_c = t, c
    return out


def _check_grid(grid, horizon):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty vector of times")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid times must be strictly increasing")
    if grid[0] < 0 or grid[-1] > horizon:
        raise ValueError("grid must lie within [0, horizon]")
    return grid


def simulate_path(params: ShotNoiseParams, horizon: float, grid, rng, seed: int | None = None) -> SamplePath:
    grid = _check_grid(grid, horizon)
    times, amps = draw_events(params.jump, params.lam, horizon, rng)
    values = path_from_events(params.x0, params.alpha, grid, times, amps)
    return SamplePath(grid, values, times, amps, seed)


def simulate_stein_path(pos: JumpFamily, neg_value: float, lambda_pos: float, lambda_neg: float,
                        alpha: float, x0: float, grid, rng, horizon: float | None = None,
                        seed: int | None = None) -> SamplePath:
    """Two independent Poisson streams: amplitudes from ``pos`` and the constant ``neg_value``."""
    if lambda_pos <= 0 or lambda_neg < 0:
        raise ValueError("stream rates must be positive")
    grid = np.asarray(grid, dtype=float)
    horizon = float(grid[-1]) if horizon is None else horizon
    grid = _check_grid(grid, horizon)
    t_pos, a_pos = draw_events(pos, lambda_pos, horizon, rng)
    if lambda_neg > 0:
        t_neg, a_neg = draw_events(Degenerate(neg_value), lambda_neg, horizon, rng)
        times = np.concatenate([t_pos, t_neg])
        amps = np.concatenate([a_pos, a_neg])
        order = np.argsort(times, kind="stable")
        times, amps = times[order], amps[order]
    else:
        times, amps = t_pos, a_pos
    values = path_from_events(x0, alpha, grid, times, amps)
    return SamplePath(grid, values, times, amps, seed)


# ---------------------------------------------------------------------------
# analytic characterization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShotMoments:
    mean: float
    variance: float
    covariance: float
    fourth_moment: float


def shot_cumulants(params: ShotNoiseParams, t: float) -> tuple[float, float, float, float]:
    """Cumulants of X(t); the k-th one is lam E[J^k] (1 - e^{-k a t}) / (k a) plus x0 e^{-at} for k=1."""
    a, lam, J = params.alpha, params.lam, params.jump
    kap = [lam * J.moment(k) * (-math.expm1(-k * a * t)) / (k * a) for k in (1, 2, 3, 4)]
    kap[0] += params.x0 * math.exp(-a * t)
    return tuple(kap)


def shot_moments(params: ShotNoiseParams, t: float, s: float = 0.0) -> ShotMoments:
    if t < 0 or s < 0:
        raise ValueError("t and s must be >= 0")
    k1, k2, k3, k4 = shot_cumulants(params, t)
    m, v = k1, k2
    fourth = m**4 + 6 * m * m * v + 3 * v * v + 4 * m * k3 + k4
    return ShotMoments(m, v, math.exp(-params.alpha * s) * v, fourth)


def shot_char_fn(params: ShotNoiseParams, t: float, u: float, tol: float = 1e-8) -> complex:
    """E[exp(iuX(t))] by quadrature over v = e^{-a y} of the jump CF."""
    if t < 0:
        raise ValueError("t must be >= 0")
    u = float(u)
    if u == 0.0 or t == 0.0:
        return complex(np.exp(1j * u * params.x0))
    a, lam, J = params.alpha, params.lam, params.jump
    v_lo = math.exp(-a * t)

    def g(v):
        return complex(J.cf_minus_one(u * v)) / (a * v)

    target = tol / (4.0 * lam)
    opts = dict(epsabs=target, epsrel=1e-12, limit=500)
    re, e_re = integrate.quad(lambda v: g(v).real, v_lo, 1.0, **opts)
    im, e_im = integrate.quad(lambda v: g(v).imag, v_lo, 1.0, **opts)
    err = lam * (e_re + e_im)
    if err > tol:
        raise QuadratureError(f"characteristic function quadrature reached only {err:.2e}")
    expo = lam * complex(re, im) + 1j * u * params.x0 * v_lo
    return complex(np.exp(expo))


@dataclass(frozen=True)
class InfinitesimalMoments:
    alpha: float
    m1_intercept: float
    M2: float
    M4: float

    def M1(self, x):
        return -self.alpha * np.asarray(x, dtype=float) + self.m1_intercept


def infinitesimal_moments(params: ShotNoiseParams) -> InfinitesimalMoments:
    lam, J = params.lam, params.jump
    return InfinitesimalMoments(params.alpha, lam * J.moment(1), lam * J.moment(2), lam * J.moment(4))


# ---------------------------------------------------------------------------
# window samplers for ensembles
# ---------------------------------------------------------------------------

@dataclass
class WindowInfo:
    method: str
    eps: float = 0.0
    rel_kappa3_error: float = 0.0
    rel_kappa4_error: float = 0.0
    notes: dict = field(default_factory=dict)


def _events_sum(counts, alpha, h, amp_sampler, rng):
    """Sum of amp * exp(-alpha * age) over events with uniform ages in [0, h]."""
    n = counts.size
    out = np.zeros(n)
    csum = np.cumsum(counts)
    start = 0
    while start < n:
        # chunk the windows so the event arrays stay bounded
        base = csum[start - 1] if start else 0
        stop = int(np.searchsorted(csum, base + _CHUNK_EVENTS, side="right"))
        stop = max(stop, start + 1)
        c = counts[start:stop]
        total = int(c.sum())
        if total:
            idx = np.repeat(np.arange(stop - start), c)
            age = rng.random(total) * h
            amps = amp_sampler(total)
            out[start:stop] = np.bincount(idx, weights=amps * np.exp(-alpha * age), minlength=stop - start)
        start = stop
    return out


def _thinned_window(jump, rate, alpha, h, n, rng):
    r = rate * jump.nonzero_prob()
    counts = rng.poisson(r * h, n)
    return _events_sum(counts, alpha, h, lambda k: jump.sample_nonzero(rng, k), rng)


def _event_window(jump, rate, alpha, h, n, rng):
    counts = rng.poisson(rate * h, n)
    return _events_sum(counts, alpha, h, lambda k: jump.sample(rng, k), rng)


def _sample_tilted_age(rng, a, zmax, k):
    """k draws on [0, zmax] with density proportional to 1 - exp(-a z)."""
    out = np.empty(k)
    filled = 0
    tri = a * zmax <= 1.0
    top = -math.expm1(-a * zmax)
    while filled < k:
        m = int((k - filled) * 1.6) + 16
        if tri:
            z = zmax * np.sqrt(rng.random(m))
            with np.errstate(invalid="ignore", divide="ignore"):
                acc = np.where(z > 0, -np.expm1(-a * z) / (a * z), 1.0)
        else:
            z = zmax * rng.random(m)
            acc = -np.expm1(-a * z) / top
        keep = z[rng.random(m) < acc][: k - filled]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


def _gamma_window(g: Gamma, rate, alpha, h, n, rng):
    """Exact window sum for Gamma(a, beta) amplitudes.

    Over a step of length s with E = e^{alpha s} the decayed sum splits into
    Gamma(K_A a, beta E) with K_A ~ Poisson(rate (1 - E^{-a}) / (alpha a)), plus
    K_B ~ Poisson(rate s - E[K_A]) terms Gamma(a + 1, beta e^z) where z has
    density proportional to 1 - e^{-a z} on [0, alpha s].
    """
    a, beta = g.shape, g.rate
    lam_a = rate * a
    step = min(1.0 / alpha, math.sqrt(8.0 / (lam_a * alpha))) if lam_a > 0 else 1.0 / alpha
    m = max(1, math.ceil(h / step - 1e-12))
    s = h / m
    x = alpha * s
    decay = math.exp(-x)
    rate_a = rate * (-math.expm1(-a * x)) / (alpha * a)
    ax = a * x
    if ax < 1e-3:
        # x - (1 - e^{-a x}) / a without cancellation
        rate_b = rate / alpha * a * x * x / 2.0 * (1.0 - ax / 3.0 + ax * ax / 12.0 - ax**3 / 60.0)
    else:
        rate_b = rate / alpha * (x - (-math.expm1(-ax)) / a)
    y = np.zeros(n)
    for _ in range(m):
        ka = rng.poisson(rate_a, n)
        part_a = rng.gamma(ka * a, 1.0 / (beta / decay))
        kb = rng.poisson(rate_b, n)
        tot = int(kb.sum())
        part_b = np.zeros(n)
        if tot:
            z = _sample_tilted_age(rng, a, x, tot)
            jumps = rng.gamma(a + 1.0, 1.0, tot) / (beta * np.exp(z))
            part_b = np.bincount(np.repeat(np.arange(n), kb), weights=jumps, minlength=n)
        y = y * decay + part_a + part_b
    return y


@lru_cache(maxsize=256)
def _hybrid_threshold(jump, rate, alpha, h, tol):
    """Largest threshold whose gamma substitute keeps cumulant errors below tol."""
    c = [(-math.expm1(-k * alpha * h)) / (k * alpha) for k in (1, 2, 3, 4)]
    kap3 = rate * jump.moment(3) * c[2]
    kap4 = rate * jump.moment(4) * c[3]

    def errors(eps):
        s1, s2, s3, s4 = (rate * jump.partial_moment(k, eps) * c[k - 1] for k in (1, 2, 3, 4))
        if s1 <= 0 or s2 <= 0:
            return 0.0, 0.0, s1, s2
        g3 = 2.0 * s2 * s2 / s1
        g4 = 6.0 * s2**3 / s1**2
        return abs(g3 - s3) / kap3, abs(g4 - s4) / kap4, s1, s2

    hi_eps = 1.0 if isinstance(jump, Beta) else max(100.0 * jump.moment(1), 10.0 * math.sqrt(jump.moment(2)))
    lo, hi = math.log(hi_eps) - 60.0, math.log(hi_eps)
    if max(errors(math.exp(hi))[:2]) <= tol:
        lo = hi
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if max(errors(math.exp(mid))[:2]) <= tol:
                lo = mid
            else:
                hi = mid
    eps = math.exp(lo)
    e3, e4, s1, s2 = errors(eps)
    return eps, e3, e4, s1, s2, jump.sf(eps)


def _hybrid_window(jump, rate, alpha, h, n, rng, tol):
    eps, e3, e4, s1, s2, tail = _hybrid_threshold(jump, rate, alpha, h, tol)
    counts = rng.poisson(rate * h * tail, n)
    big = _events_sum(counts, alpha, h, lambda k: jump.sample_above(rng, k, eps), rng)
    small = rng.gamma(s1 * s1 / s2, s2 / s1, n) if s1 > 0 and s2 > 0 else np.zeros(n)
    return big + small, WindowInfo("hybrid", eps, e3, e4, {"big_rate": rate * tail})


# expected events per window below which plain event simulation is used
_EVENT_LIMIT = 64.0


def window_method(jump: JumpFamily, rate: float, h: float, exact: bool = False) -> str:
    if isinstance(jump, Mixture):
        return "mixture"
    if isinstance(jump, (Gamma, Exponential, ChiSquare)):
        return "gamma"
    if jump.nonzero_prob() < 1.0 or isinstance(jump, Degenerate):
        return "thinned"
    if not exact and hasattr(jump, "sample_above") and rate * h > _EVENT_LIMIT:
        return "hybrid"
    return "events"


def sample_window(jump: JumpFamily, rate: float, alpha: float, h: float, n: int, rng,
                  exact: bool = False, small_jump_tol: float = 1e-6) -> tuple[np.ndarray, WindowInfo]:
    """n independent draws of sum_{events in [0,h]} J_k e^{-alpha (h - tau_k)}."""
    n = int(n)
    if h <= 0 or rate == 0:
        return np.zeros(n), WindowInfo("empty")
    method = window_method(jump, rate, h, exact)
    if method == "mixture":
        f = jump.neg_prob
        pos, info = sample_window(jump.pos, rate * (1.0 - f), alpha, h, n, rng, exact, small_jump_tol)
        neg, _ = sample_window(Degenerate(jump.neg_value), rate * f, alpha, h, n, rng)
        return pos + neg, WindowInfo("mixture", info.eps, info.rel_kappa3_error, info.rel_kappa4_error,
                                     {"positive": info.method})
    if method == "gamma":
        return _gamma_window(jump.as_gamma(), rate, alpha, h, n, rng), WindowInfo("gamma")
    if method == "thinned":
        return _thinned_window(jump, rate, alpha, h, n, rng), WindowInfo("thinned")
    if method == "hybrid":
        return _hybrid_window(jump, rate, alpha, h, n, rng, small_jump_tol)
    return _event_window(jump, rate, alpha, h, n, rng), WindowInfo("events")


def sample_marginals(params: ShotNoiseParams, times, n: int, rng, exact: bool = False,
                     small_jump_tol: float = 1e-6) -> tuple[np.ndarray, list[WindowInfo]]:
    """Joint draws of (X(t_1), ..., X(t_m)) for n independent paths; shape (n, m)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be nonnegative and nondecreasing")
    out = np.empty((int(n), times.size))
    state = np.full(int(n), float(params.x0))
    prev = 0.0
    infos = []
    for i, t in enumerate(times):
        h = t - prev
        if h > 0:
            inc, info = sample_window(params.jump, params.lam, params.alpha, h, n, rng, exact, small_jump_tol)
            state = state * math.exp(-params.alpha * h) + inc
            infos.append(info)
        out[:, i] = state
        prev = t
    return out, infos
