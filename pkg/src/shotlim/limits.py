"""Jump-amplitude sequences J_n indexed by the event rate lambda_n, and their limits.

A :class:`FamilySequence` fixes how the parameters of a jump family scale
with lambda_n.  The diffusion approximation of the shot noise requires

    lambda_n E[J_n]   -> mu        (finite)
    lambda_n E[J_n^2] -> sigma^2   (> 0)
    lambda_n E[J_n^4] -> 0

:func:`check_conditions` evaluates the three sequences on a grid of rates,
compares them with the closed-form limits and classifies the limit process.
Every nonnegative family with a nondegenerate second moment keeps a positive
fourth moment in the limit; the Lévy-OU limit then replaces the Gaussian
one.  The ``theorem3`` sequence mixes a calibrated nonnegative family with a
rare negative atom and recovers a Gaussian limit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import ClassVar

import numpy as np

from .distributions import (Bernoulli, Beta, ChiSquare, Degenerate, Exponential, Gamma,
                            InverseGaussian, JumpFamily, Mixture, Poisson, jump_moment)
from .levyou import BetaProc, GammaProc, IGProc, PoissonProc, SubordinatorSpec

KINDS = ("bernoulli", "poisson", "gamma", "chisq", "ig", "beta", "exponential", "degenerate",
         "theorem3")
CALIBRATIONS = ("gamma", "ig", "beta")

# scaled families and the subordinator tag of their limit
LEVY_TAGS = {"bernoulli": "PP", "poisson": "PP", "gamma": "GP", "chisq": "GP", "ig": "IGP",
             "beta": "BP"}


class InadmissibleParameterError(ValueError):
    """The sequence parameters give an invalid jump law at this lambda_n."""


class InfeasibleCalibration(ValueError):
    """No member of the requested family meets the prescribed moments."""

    def __init__(self, message: str, violated: str):
        super().__init__(message)
        self.violated = violated


@dataclass(frozen=True)
class FamilySequence:
    """Scaling of a jump family with lambda_n.

    ``sigma_tilde2`` is the limiting variance parameter for gamma/ig and, for
    ``theorem3``, the target limit sigma^2.  A beta sequence built without
    ``beta`` but with ``sigma_tilde2`` uses the tied preset beta = mu/sigma_tilde2.
    ``degenerate_scaling`` picks which moment a constant jump matches:
    ``"mean"`` (j = mu/lambda_n) or ``"variance"`` (j = sqrt(sigma_tilde2/lambda_n)).
    """

    family_kind: str
    mu: float
    sigma_tilde2: float | None = None
    beta: float | None = None
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None
    calibration: str = "gamma"
    degenerate_scaling: str = "mean"

    def __post_init__(self):
        kind = self.family_kind
        if kind not in KINDS:
            raise InadmissibleParameterError(f"unknown family kind {kind!r}; choose from {KINDS}")
        if not self.mu > 0:
            raise InadmissibleParameterError("mu must be > 0")
        if self.sigma_tilde2 is not None and not self.sigma_tilde2 > 0:
            raise InadmissibleParameterError("sigma_tilde2 must be > 0")
        if kind in ("gamma", "ig", "theorem3") and self.sigma_tilde2 is None:
            raise InadmissibleParameterError(f"{kind} sequences need sigma_tilde2")
        if kind == "chisq":
            if self.sigma_tilde2 is None:
                object.__setattr__(self, "sigma_tilde2", 2.0 * self.mu)
            elif not math.isclose(self.sigma_tilde2, 2.0 * self.mu, rel_tol=1e-12):
                raise InadmissibleParameterError("chi-square sequences have sigma_tilde2 = 2 mu")
        if kind == "beta":
            if self.beta is None:
                if self.sigma_tilde2 is None:
                    raise InadmissibleParameterError("beta sequences need beta or sigma_tilde2")
                object.__setattr__(self, "beta", self.mu / self.sigma_tilde2)
            if not self.beta > 0:
                raise InadmissibleParameterError("beta must be > 0")
        if kind == "degenerate":
            if self.degenerate_scaling not in ("mean", "variance"):
                raise InadmissibleParameterError("degenerate_scaling is 'mean' or 'variance'")
            if self.degenerate_scaling == "variance" and self.sigma_tilde2 is None:
                raise InadmissibleParameterError("variance scaling needs sigma_tilde2")
        if kind == "theorem3":
            _check_theorem3_constants(self.c1, self.c2, self.c3)
            if self.calibration not in CALIBRATIONS:
                raise InadmissibleParameterError(f"calibration must be one of {CALIBRATIONS}")

    @classmethod
    def beta_tied(cls, mu: float, sigma_tilde2: float) -> "FamilySequence":
        """Beta row with beta = mu / sigma_tilde2."""
        return cls("beta", mu, sigma_tilde2=sigma_tilde2, beta=mu / sigma_tilde2)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _check_theorem3_constants(c1, c2, c3):
    if c1 is None or c2 is None or c3 is None:
        raise InadmissibleParameterError("theorem3 sequences need c1, c2 and c3")
    if not 0 < c1 < 2.0 / 3.0:
        raise InadmissibleParameterError(f"c1 must lie in (0, 2/3), got {c1}")
    if not 0 < c2 < c1 / 2.0:
        raise InadmissibleParameterError(f"c2 must lie in (0, c1/2), got {c2}")
    if not c3 > 0:
        raise InadmissibleParameterError(f"c3 must be > 0, got {c3}")


# ---------------------------------------------------------------------------
# scaled parametrizations and limits
# ---------------------------------------------------------------------------

def table1_family(seq: FamilySequence, lambda_n: float) -> JumpFamily:
    """Jump law of the sequence at rate lambda_n."""
    lam = float(lambda_n)
    if not lam > 0:
        raise InadmissibleParameterError("lambda_n must be > 0")
    mu, kind = seq.mu, seq.family_kind
    try:
        if kind == "bernoulli":
            return Bernoulli(mu / lam)
        if kind == "poisson":
            return Poisson(mu / lam)
        if kind == "gamma":
            rate = mu / seq.sigma_tilde2
            return Gamma(mu * rate / lam, rate)
        if kind == "chisq":
            return ChiSquare(mu / lam)
        if kind == "ig":
            return InverseGaussian(mu / lam, mu**3 / (lam**2 * seq.sigma_tilde2))
        if kind == "beta":
            return Beta(mu * seq.beta / lam, seq.beta)
        if kind == "exponential":
            return Exponential(mu / lam)
        if kind == "degenerate":
            if seq.degenerate_scaling == "mean":
                return Degenerate(mu / lam)
            return Degenerate(math.sqrt(seq.sigma_tilde2 / lam))
        return theorem3_mixture(mu, seq.sigma_tilde2, seq.c1, seq.c2, seq.c3, lam, seq.calibration)
    except InfeasibleCalibration:
        raise
    except ValueError as exc:
        raise InadmissibleParameterError(f"{kind} at lambda_n={lam:g}: {exc}") from exc


@dataclass(frozen=True)
class LimitingMoments:
    """Closed-form limits of lambda_n E[J_n^k] for k = 1, 2, 4.

    ``incompatible`` marks sequences for which the first two limits cannot be
    finite and positive at the same time (constant jumps).
    """

    mu_lim: float | None
    sigma2_lim: float | None
    m4_lim: float | None
    incompatible: bool = False

    def __iter__(self):
        return iter((self.mu_lim, self.sigma2_lim, self.m4_lim))


def limiting_moments(seq: FamilySequence) -> LimitingMoments:
    mu, s2, kind = seq.mu, seq.sigma_tilde2, seq.family_kind
    if kind in ("bernoulli", "poisson"):
        return LimitingMoments(mu, mu, mu)
    if kind in ("gamma", "chisq"):
        return LimitingMoments(mu, s2, 6.0 * s2**3 / mu**2)
    if kind == "ig":
        return LimitingMoments(mu, s2, 15.0 * s2**3 / mu**2)
    if kind == "beta":
        b = seq.beta
        return LimitingMoments(mu, mu / (b + 1.0), 6.0 * mu / ((b + 1.0) * (b + 2.0) * (b + 3.0)))
    if kind == "exponential":
        return LimitingMoments(mu, 0.0, 0.0)
    if kind == "degenerate":
        if seq.degenerate_scaling == "mean":
            return LimitingMoments(mu, 0.0, 0.0, incompatible=True)
        return LimitingMoments(math.inf, s2, 0.0, incompatible=True)
    return LimitingMoments(mu, s2, 0.0)


def classify(lim: LimitingMoments, family_kind: str | None = None) -> str:
    """mean_explodes | deterministic | gaussian_diffusion | levy_ou(TAG) | unknown."""
    mu, s2, m4 = lim.mu_lim, lim.sigma2_lim, lim.m4_lim
    if mu is None or s2 is None or m4 is None:
        return "unknown"
    if not math.isfinite(mu):
        return "mean_explodes"
    if s2 == 0:
        return "deterministic"
    if s2 > 0 and m4 == 0:
        return "gaussian_diffusion"
    tag = LEVY_TAGS.get(family_kind or "")
    return f"levy_ou({tag})" if tag else "unknown"


# ---------------------------------------------------------------------------
# condition checking
# ---------------------------------------------------------------------------

def _rate_gap(seq: FamilySequence) -> tuple[float, float, float]:
    """Exponents g_k with |lambda E[J^k] - lim| = O(lambda^{-g_k})."""
    if seq.family_kind == "theorem3":
        c1, c2, c3 = seq.c1, seq.c2, seq.c3
        return (1 - c1 - c2, min(1 - c1, c1 - 2 * c2), min(c3, 1 - c1 + c3, 3 * c1 - 4 * c2))
    if seq.family_kind == "degenerate" and seq.degenerate_scaling == "variance":
        return (0.0, 1.0, 1.0)
    return (1.0, 1.0, 1.0)


def _assess(values, limit, gap, lam_max):
    """Monotone approach to ``limit`` and final error below 10 lambda_max^-gap."""
    if limit is None:
        return None, None, False, False
    values = np.asarray(values, dtype=float)
    if not math.isfinite(limit):
        diverging = bool(np.all(np.diff(values) > 0))
        return math.inf, math.inf, diverging, diverging
    scale = abs(limit) if limit != 0 else 1.0
    err = np.abs(values - limit) / scale
    slack = 1e-13 * (1.0 + np.abs(values) / scale)
    monotone = bool(np.all(np.diff(err) <= slack[1:]))
    tol = 10.0 * lam_max ** (-gap)
    return float(err[-1]), tol, monotone, bool(monotone and err[-1] < tol)


@dataclass
class ConditionReport:
    family: dict
    lambda_grid: list[float]
    m1_values: list[float]
    m2_values: list[float]
    m4_values: list[float]
    closed_form_limits: tuple
    classification: str
    incompatible: bool = False
    final_rel_errors: tuple = ()
    tolerances: tuple = ()
    monotone: tuple = ()
    converged: tuple = ()

    FIELDS: ClassVar[tuple] = ("m1", "m2", "m4")

    @property
    def all_converged(self) -> bool:
        return all(self.converged)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return "inf" if v > 0 else "-inf"
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        d = asdict(self)
        return {k: clean(v) for k, v in d.items()}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_table(self) -> str:
        lines = [f"family: {self.family}", f"classification: {self.classification}"]
        lines.append(f"{'lambda_n':>12} {'lam E[J]':>16} {'lam E[J^2]':>16} {'lam E[J^4]':>16}")
        for row in zip(self.lambda_grid, self.m1_values, self.m2_values, self.m4_values):
            lines.append(f"{row[0]:>12.4g} {row[1]:>16.10g} {row[2]:>16.10g} {row[3]:>16.10g}")
        lim = ["-" if v is None else f"{v:.10g}" for v in self.closed_form_limits]
        lines.append(f"{'limit':>12} {lim[0]:>16} {lim[1]:>16} {lim[2]:>16}")
        for name, err, tol, ok in zip(self.FIELDS, self.final_rel_errors, self.tolerances, self.converged):
            if err is None:
                continue
            lines.append(f"{name}: final error {err:.3g} (tolerance {tol:.3g}) converged={ok}")
        if self.incompatible:
            lines.append("note: the first two conditions cannot hold together for this sequence")
        return "\n".join(lines)


def check_conditions(seq: FamilySequence, lambda_grid) -> ConditionReport:
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 4:
        raise ValueError("lambda_grid needs at least 4 rates")
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ValueError("lambda_grid must be positive and increasing")
    vals = {1: [], 2: [], 4: []}
    for lam in grid:
        fam = table1_family(seq, lam)
        for k in vals:
            vals[k].append(float(lam * jump_moment(fam, k)))
    lim = limiting_moments(seq)
    gaps = _rate_gap(seq)
    assessed = [_assess(vals[k], limit, g, grid[-1])
                for k, limit, g in zip((1, 2, 4), tuple(lim), gaps)]
    return ConditionReport(
        family=seq.to_dict(),
        lambda_grid=[float(x) for x in grid],
        m1_values=vals[1], m2_values=vals[2], m4_values=vals[4],
        closed_form_limits=tuple(lim),
        classification=classify(lim, seq.family_kind),
        incompatible=lim.incompatible,
        final_rel_errors=tuple(a[0] for a in assessed),
        tolerances=tuple(a[1] for a in assessed),
        monotone=tuple(a[2] for a in assessed),
        converged=tuple(a[3] for a in assessed),
    )


# ---------------------------------------------------------------------------
# negative-jump mixture with a Gaussian limit
# ---------------------------------------------------------------------------

def theorem3_targets(mu, sigma2, c1, c2, c3, lambda_n):
    """(f_n, theta_n, (E[J+], E[J+^2], E[J+^4])) prescribed at lambda_n."""
    _check_theorem3_constants(c1, c2, c3)
    lam = float(lambda_n)
    f = lam ** (-1.0 + c1)
    theta = -lam ** (-c1 + c2) + lam ** (-c1) * mu
    return f, theta, (lam ** (-1.0 + c2), sigma2 / lam, lam ** (-1.0 - c3))


def _calibrate(kind: str, m1: float, m2: float) -> JumpFamily:
    """Member of ``kind`` with E[J] = m1 and E[J^2] = m2 exactly."""
    var = m2 - m1 * m1
    if not var > 0:
        raise InfeasibleCalibration(f"second moment {m2:g} leaves no variance for mean {m1:g}",
                                    "E[J+^2]")
    if kind == "gamma":
        return Gamma(m1 * m1 / var, m1 / var)
    if kind == "ig":
        return InverseGaussian(m1, m1**3 / var)
    if kind == "beta":
        if not m2 < m1 < 1:
            raise InfeasibleCalibration(f"a law on (0,1) needs E[J^2] < E[J] < 1, got {m2:g}, {m1:g}",
                                        "E[J+^2]")
        s = (m1 - m2) / var
        return Beta(m1 * s, (1.0 - m1) * s)
    raise ValueError(f"unknown calibration family {kind!r}")


@dataclass(frozen=True)
class Theorem3Calibration:
    lambda_n: float
    f_n: float
    theta_n: float
    family: str
    targets: tuple
    achieved: tuple
    fourth_moment_floor: float
    violated: tuple

    @property
    def feasible(self) -> bool:
        return not self.violated


def theorem3_calibration(mu, sigma2, c1, c2, c3, lambda_n, calibration: str = "gamma") -> Theorem3Calibration:
    """Calibrate the positive part and report which moment targets it misses.

    The first two targets are met exactly.  The fourth cannot be met by any
    nonnegative law when lambda^{-1-c3} is below the moment-interpolation floor
    E[J^2]^3 / E[J]^2 = sigma^6 lambda^{-1-2 c2}.
    """
    f, theta, targets = theorem3_targets(mu, sigma2, c1, c2, c3, lambda_n)
    pos = _calibrate(calibration, targets[0], targets[1])
    achieved = tuple(float(pos.moment(k)) for k in (1, 2, 4))
    floor = targets[1] ** 3 / targets[0] ** 2
    violated = []
    for name, want, got in zip(("E[J+]", "E[J+^2]", "E[J+^4]"), targets, achieved):
        if not math.isclose(want, got, rel_tol=1e-9):
            violated.append(name)
    return Theorem3Calibration(float(lambda_n), f, theta, calibration, targets, achieved, floor,
                               tuple(violated))


def theorem3_mixture(mu, sigma2, c1, c2, c3, lambda_n, calibration: str = "gamma",
                     strict_fourth: bool = False) -> Mixture:
    """Mixture of the calibrated positive family with the atom theta_n of weight f_n.

    With ``strict_fourth`` a missed fourth-moment target raises
    :class:`InfeasibleCalibration`; otherwise the mixture is returned and the
    miss is visible through :func:`theorem3_calibration`.
    """
    cal = theorem3_calibration(mu, sigma2, c1, c2, c3, lambda_n, calibration)
    if strict_fourth and cal.violated:
        lam = cal.lambda_n
        raise InfeasibleCalibration(
            f"E[J+^4] target {cal.targets[2]:.3e} at lambda_n={lam:g} is below the floor "
            f"E[J+^2]^3/E[J+]^2 = {cal.fourth_moment_floor:.3e}; {calibration} gives {cal.achieved[2]:.3e}",
            cal.violated[0])
    pos = _calibrate(calibration, cal.targets[0], cal.targets[1])
    return Mixture(pos, cal.theta_n, cal.f_n)


def theorem3_expansions(mu, sigma2, c1, c2, c3, lambda_n) -> tuple[float, float, float]:
    """Closed expressions for lambda E[J^k], k = 1, 2, 4, under the prescribed moments."""
    _check_theorem3_constants(c1, c2, c3)
    lam = float(lambda_n)
    d = -lam**c2 + mu
    e1 = mu - lam ** (-1.0 + c1 + c2)
    e2 = sigma2 - sigma2 * lam ** (-1.0 + c1) + lam ** (-c1) * d * d
    e4 = lam ** (-c3) - lam ** (-1.0 + c1 - c3) + lam ** (-3.0 * c1) * d**4
    return e1, e2, e4


# ---------------------------------------------------------------------------
# parameter mappings and limit Levy densities
# ---------------------------------------------------------------------------

_KIND_OF_TAG = {"chisquare": "chisq", "inverse_gaussian": "ig"}


def appendixA_mapping(family_kind, params=None, lambda_n: float = 1.0) -> tuple[float, float]:
    """(mu, sigma^2) = lambda_n times the first two moments, in the tabulated forms.

    ``family_kind`` may be a :class:`JumpFamily` instance, in which case
    ``params`` is ignored; otherwise ``params`` holds the constructor fields.
    The inverse Gaussian, Poisson and beta rows are the leading-order forms.
    """
    if isinstance(family_kind, JumpFamily):
        fam = family_kind
        kind = _KIND_OF_TAG.get(fam.tag, fam.tag)
        params = {k: v for k, v in fam.__dict__.items()}
    else:
        kind = family_kind
        params = dict(params or {})
    lam = float(lambda_n)
    if kind == "bernoulli":
        return lam * params["p"], lam * params["p"]
    if kind == "poisson":
        return lam * params["lam_tilde"], lam * params["lam_tilde"]
    if kind == "gamma":
        a, b = params["shape"], params["rate"]
        return lam * a / b, lam * a * (1.0 + a) / b**2
    if kind == "chisq":
        k = params["k"]
        return lam * k, lam * k * (k + 2.0)
    if kind == "ig":
        m, shape = params["mean"], params["shape"]
        return lam * m, lam * m**3 / shape
    if kind == "beta":
        a, b = params["shape_a"], params["shape_b"]
        return lam * a / b, lam * a / (b * (b + 1.0))
    if kind == "exponential":
        th = params["theta"]
        return lam * th, 2.0 * lam * th * th
    if kind == "degenerate":
        j = params["j"]
        return lam * j, lam * j * j
    raise ValueError(f"no mapping for family {kind!r}")


def limit_levy_density(seq: FamilySequence) -> SubordinatorSpec:
    kind, mu, s2 = seq.family_kind, seq.mu, seq.sigma_tilde2
    if kind in ("bernoulli", "poisson"):
        return PoissonProc(mu)
    if kind in ("gamma", "chisq"):
        return GammaProc(mu * mu / s2, mu / s2)
    if kind == "ig":
        return IGProc(math.sqrt(mu**3 / s2), math.sqrt(mu / s2))
    if kind == "beta":
        return BetaProc(mu, seq.beta)
    raise ValueError(f"{kind} sequences have no Levy-OU limit")


DENSITY_FLOOR = 1e-18


def verify_density_convergence(seq: FamilySequence, x_grid, lambda_grid) -> np.ndarray:
    """sup_x |lambda_n f_{J_n}(x) - u(x)| / u(x) for each lambda_n.

    Continuous rows compare densities in log space; points where both sides
    fall below ``DENSITY_FLOOR`` are skipped.  For the Poisson-process rows the
    limit is an atom, so the comparison is lambda_n P(J_n = 1) against mu.
    """
    lam_grid = np.asarray(lambda_grid, dtype=float)
    spec = limit_levy_density(seq)
    if isinstance(spec, PoissonProc):
        out = []
        for lam in lam_grid:
            mass = float(table1_family(seq, lam).pdf(1.0))
            out.append(abs(lam * mass - seq.mu) / seq.mu)
        return np.array(out)
    x = np.asarray(x_grid, dtype=float)
    if np.any(x <= 0) or np.any(x >= spec.support_upper):
        raise ValueError("x_grid must lie in the interior of the support")
    log_u = np.log(spec.density(x))
    out = []
    for lam in lam_grid:
        fam = table1_family(seq, lam)
        log_f = math.log(lam) + fam.logpdf(x)
        keep = (log_f > math.log(DENSITY_FLOOR)) | (log_u > math.log(DENSITY_FLOOR))
        if not np.any(keep):
            out.append(0.0)
            continue
        out.append(float(np.max(np.abs(np.expm1(log_f[keep] - log_u[keep])))))
    return np.array(out)
