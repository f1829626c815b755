"""Ensembles of time-t marginals, binned densities and integrated absolute error.

Ensembles are generated in fixed-size blocks; block ``b`` draws from
``stream(seed, b)``.  The sample vector therefore depends only on
(process, t, n, seed, block_size), and worker processes merely evaluate
blocks in parallel before they are concatenated in block order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .levyou import (GaussianOU, GaussianOUParams, LevyOUParams, NoExactSamplerError, PoissonProc,
                     levyou_transition)
from .limits import (FamilySequence, limit_levy_density, limiting_moments, table1_family)
from .rng import derive_seed, stream
from .shotnoise import ResourceGuardError, ShotNoiseParams, sample_window, window_method

BLOCK_SIZE = 8192
# refuse ensembles that would simulate more individual events than this
MAX_ENSEMBLE_EVENTS = 5e9
MAX_ENSEMBLE_SIZE = 50_000_000


@dataclass
class EnsembleResult:
    process_tag: str
    t: float
    samples: np.ndarray
    seed: int
    n: int
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.shape != (self.n,):
            raise ValueError("samples must be a vector of length n")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("index,value\n")
        for i, v in enumerate(self.samples):
            buf.write(f"{i},{float(v)!r}\n")
        return buf.getvalue()


def process_tag(spec) -> str:
    if isinstance(spec, ShotNoiseParams):
        return f"shot({spec.jump.tag})"
    if isinstance(spec, LevyOUParams):
        return f"ou({spec.subordinator.tag})"
    if isinstance(spec, GaussianOUParams):
        return "gauss-ou"
    raise TypeError(f"unsupported process spec {type(spec).__name__}")


def expected_event_work(spec, t: float, n: int, exact: bool = False) -> float:
    """Rough count of individually simulated events for an ensemble."""
    if isinstance(spec, LevyOUParams) and isinstance(spec.subordinator, PoissonProc):
        return n * spec.subordinator.mu * t
    if not isinstance(spec, ShotNoiseParams):
        return float(n)
    method = window_method(spec.jump, spec.lam, t, exact)
    if method == "events":
        return n * spec.lam * t
    if method == "thinned":
        return n * spec.lam * spec.jump.nonzero_prob() * t
    if method == "mixture":
        f = spec.jump.neg_prob
        return n * spec.lam * f * t + n * (1.0 + spec.alpha * t) * 64.0
    return n * (1.0 + spec.alpha * t) * 64.0


def _sample_block(spec, t, size, seed, block_id, exact, small_jump_tol):
    rng = stream(seed, block_id)
    if isinstance(spec, ShotNoiseParams):
        inc, _ = sample_window(spec.jump, spec.lam, spec.alpha, t, size, rng, exact, small_jump_tol)
        return spec.x0 * math.exp(-spec.alpha * t) + inc
    if isinstance(spec, LevyOUParams):
        return np.asarray(levyou_transition(spec, spec.y0, t, rng, size), dtype=float)
    return np.asarray(GaussianOU(spec).transition_sample(spec.y0, t, rng, size), dtype=float)


def _block_task(args):
    return _sample_block(*args)


def run_ensemble(spec, t: float, n: int, seed: int, workers: int = 1, block_size: int = BLOCK_SIZE,
                 exact: bool = False, small_jump_tol: float = 1e-6) -> EnsembleResult:
    """n independent draws of the process at time t started from its initial value."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    tag = process_tag(spec)
    if isinstance(spec, LevyOUParams) and tag == "ou(BP)":
        raise NoExactSamplerError("no exact sampler for BetaProc")
    if n > MAX_ENSEMBLE_SIZE:
        raise ResourceGuardError(f"ensemble of {n} samples exceeds the limit {MAX_ENSEMBLE_SIZE}")
    work = expected_event_work(spec, t, n, exact)
    if work > MAX_ENSEMBLE_EVENTS:
        raise ResourceGuardError(f"ensemble would simulate about {work:.3g} events "
                                 f"(limit {MAX_ENSEMBLE_EVENTS:.3g}); reduce n, lambda or t")
    block_size = int(block_size)
    starts = range(0, n, block_size)
    tasks = [(spec, float(t), min(block_size, n - s), int(seed), b, exact, small_jump_tol)
             for b, s in enumerate(starts)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            parts = list(pool.map(_block_task, tasks))
    else:
        parts = [_block_task(task) for task in tasks]
    samples = np.concatenate(parts)
    info = {"block_size": block_size, "exact": bool(exact)}
    if isinstance(spec, ShotNoiseParams):
        info["window_method"] = window_method(spec.jump, spec.lam, t, exact)
    return EnsembleResult(tag, float(t), samples, int(seed), n, info)


# ---------------------------------------------------------------------------
# densities and distances
# ---------------------------------------------------------------------------

class DegenerateSampleError(ValueError):
    """All samples coincide, so no histogram range exists."""


@dataclass(frozen=True)
class DensityEstimate:
    bin_edges: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        if self.bin_edges.size != self.density.size + 1:
            raise ValueError("bin_edges must have one more entry than density")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin_edges must be increasing")

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.widths


def freedman_diaconis_bins(samples, lo: int = 64, hi: int = 2048) -> int:
    x = np.asarray(samples, dtype=float)
    q75, q25 = np.percentile(x, [75, 25])
    width = 2.0 * (q75 - q25) * x.size ** (-1.0 / 3.0)
    span = float(x.max() - x.min())
    if width <= 0:
        return hi
    return int(np.clip(math.ceil(span / width), lo, hi))


def estimate_density(samples, binning="auto") -> DensityEstimate:
    """Histogram density on [min, max]; ``binning`` is a bin count or ``"auto"``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        raise DegenerateSampleError("all samples are equal; the histogram range is empty")
    m = freedman_diaconis_bins(x) if binning == "auto" else int(binning)
    if m < 1:
        raise ValueError("bin count must be >= 1")
    counts, edges = np.histogram(x, bins=m, range=(lo, hi))
    dens = counts / (x.size * np.diff(edges))
    return DensityEstimate(edges, dens)


def default_iae_bins(n: int) -> int:
    """Bin count that keeps the sampling noise of a binned IAE small.

    Two independent histograms of n samples on m roughly equally filled bins
    differ by about 2 sqrt(m / (pi n)) in IAE, so m grows like n^(1/3).
    """
    return int(np.clip(round(n ** (1.0 / 3.0) / 3.0), 8, 512))


class AnalyticLaw:
    """Wrap a cdf (and optionally quantile function) for use in :func:`iae`."""

    def __init__(self, cdf, ppf=None):
        self.cdf = cdf
        self.ppf = ppf


def gaussian_ou_law(params: GaussianOUParams, t: float) -> AnalyticLaw:
    g = GaussianOU(params)
    sd = math.sqrt(g.variance(t))
    if sd == 0:
        raise ValueError("the Gaussian OU law at t=0 is a point mass")
    return AnalyticLaw(lambda x: stats.norm.cdf(x, g.mean(t), sd), lambda q: stats.norm.ppf(q, g.mean(t), sd))


def _kind(obj):
    if isinstance(obj, DensityEstimate):
        return "hist"
    if hasattr(obj, "cdf"):
        return "law"
    if callable(obj):
        return "cdf"
    return "samples"


def _masses(obj, kind, inner_edges):
    """Probability of (-inf, e0), [e0, e1), ..., [e_last, inf) under obj."""
    if kind == "samples":
        x = np.asarray(obj, dtype=float).ravel()
        idx = np.searchsorted(inner_edges, x, side="right")
        return np.bincount(idx, minlength=inner_edges.size + 1) / x.size
    if kind == "hist":
        # piecewise-uniform cdf of the histogram
        cum = np.concatenate(([0.0], np.cumsum(obj.masses)))
        cdf = np.interp(inner_edges, obj.bin_edges, cum, left=0.0, right=cum[-1])
        total = cum[-1]
    else:
        fn = obj.cdf if kind == "law" else obj
        cdf = np.asarray(fn(inner_edges), dtype=float)
        total = 1.0
    return np.diff(np.concatenate(([0.0], cdf, [total])))


def iae(d1, d2, bins=None, quantiles=(0.001, 0.999)) -> float:
    """Integrated absolute error between two laws on a shared bin grid.

    Each argument is a sample vector, a :class:`DensityEstimate`, an object
    with a ``cdf`` method (e.g. :class:`AnalyticLaw` or a frozen scipy
    distribution) or a bare cdf callable.  The grid is the union of the
    histogram edges when a histogram is involved; otherwise ``bins`` equal
    cells over the pooled ``quantiles`` range of the sampled (or analytic)
    laws, with ``bins`` defaulting to :func:`default_iae_bins`.  Mass outside
    the grid is kept in two overflow cells, so the result is sum |p1 - p2|
    over a partition of the line and lies in [0, 2].
    """
    objs = (d1, d2)
    kinds = [_kind(o) for o in objs]
    hists = [o for o, k in zip(objs, kinds) if k == "hist"]
    if hists:
        edges = np.unique(np.concatenate([h.bin_edges for h in hists]))
    else:
        lows, highs, sizes = [], [], []
        for o, k in zip(objs, kinds):
            if k == "samples":
                x = np.asarray(o, dtype=float).ravel()
                if x.size == 0:
                    raise ValueError("samples must be nonempty")
                q = np.quantile(x, quantiles)
                lows.append(q[0])
                highs.append(q[1])
                sizes.append(x.size)
            elif k == "law" and getattr(o, "ppf", None) is not None:
                lows.append(float(o.ppf(quantiles[0])))
                highs.append(float(o.ppf(quantiles[1])))
        if not lows:
            raise ValueError("cannot place a grid: give samples, a histogram or a law with ppf")
        lo, hi = min(lows), max(highs)
        m = int(bins) if bins is not None else default_iae_bins(min(sizes) if sizes else 10**6)
        if hi <= lo:
            hi = lo + 1e-12 * max(1.0, abs(lo))
        edges = np.linspace(lo, hi, m + 1)
    p1 = _masses(d1, kinds[0], edges)
    p2 = _masses(d2, kinds[1], edges)
    return float(min(np.abs(p1 - p2).sum(), 2.0))


def empirical_char_fn(samples, u_grid) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    u = np.atleast_1d(np.asarray(u_grid, dtype=float))
    if x.size == 0 or u.size == 0:
        raise ValueError("samples and u_grid must be nonempty")
    out = np.empty(u.size, dtype=complex)
    for i, ui in enumerate(u):
        ph = ui * x
        out[i] = complex(np.cos(ph).mean(), np.sin(ph).mean())
    return out


# ---------------------------------------------------------------------------
# comparison experiments
# ---------------------------------------------------------------------------

CSV_FIELDS = ("family", "mu", "sigma_tilde2", "lambda", "t", "n", "iae_levy", "iae_gauss", "seed")

DEFAULT_EXPERIMENT = {
    "families": ["bernoulli", "poisson", "gamma", "ig"],
    "mu": [1.0, 3.0, 10.0],
    "sigma_tilde2": 3.0,
    "lambda": [1e4],
    "t": [1.0, 2.0, 100.0],
    "alpha": 1.0,
    "x0": 0.0,
    "n": 100_000,
    "seed": 20240,
    "bins": None,
}


def _cells(cfg):
    i = 0
    for fam in cfg["families"]:
        for mu in cfg["mu"]:
            for lam in cfg["lambda"]:
                for t in cfg["t"]:
                    yield i, fam, float(mu), float(lam), float(t)
                    i += 1


def compare_cell(family, mu, sigma_tilde2, lam, t, alpha, x0, n, seed, bins=None, workers=1,
                 beta=None) -> dict:
    """IAE of the shot noise against its Levy-OU limit and the Gaussian OU at one cell."""
    seq = FamilySequence(family, mu, sigma_tilde2=sigma_tilde2 if family != "chisq" else None,
                         beta=beta)
    jump = table1_family(seq, lam)
    shot = run_ensemble(ShotNoiseParams(lam, alpha, x0, jump), t, n, derive_seed(seed, 0), workers)
    mu_lim, s2_lim, _ = limiting_moments(seq)
    gauss = gaussian_ou_law(GaussianOUParams(mu_lim, s2_lim, alpha, x0), t)
    row = {"iae_gauss": iae(shot.samples, gauss, bins=bins), "iae_levy": math.nan, "error": ""}
    try:
        levy = run_ensemble(LevyOUParams(alpha, x0, limit_levy_density(seq)), t, n, derive_seed(seed, 1),
                            workers)
        row["iae_levy"] = iae(shot.samples, levy.samples, bins=bins)
    except NoExactSamplerError as exc:
        row["error"] = str(exc)
    return row


def compare_experiment(config: dict | None = None, workers: int = 1) -> list[dict]:
    """One row per (family, mu, lambda, t) cell; failures are recorded in ``error``."""
    cfg = dict(DEFAULT_EXPERIMENT)
    cfg.update(config or {})
    rows = []
    for i, fam, mu, lam, t in _cells(cfg):
        cell_seed = derive_seed(int(cfg["seed"]), i)
        s2 = None if fam == "chisq" else cfg.get("sigma_tilde2")
        row = {"family": fam, "mu": mu, "sigma_tilde2": s2, "lambda": lam, "t": t, "n": int(cfg["n"]),
               "iae_levy": math.nan, "iae_gauss": math.nan, "seed": cell_seed, "error": ""}
        try:
            row.update(compare_cell(fam, mu, s2, lam, t, float(cfg["alpha"]), float(cfg["x0"]),
                                    int(cfg["n"]), cell_seed, cfg.get("bins"), workers, cfg.get("beta")))
        except (ArithmeticError, ValueError, ResourceGuardError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS + ("error",))
    for r in rows:
        writer.writerow([_fmt(r.get(k)) for k in CSV_FIELDS + ("error",)])
    return buf.getvalue()


def rows_to_json(rows: list[dict], meta: dict | None = None) -> str:
    clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in rows]
    return json.dumps({"meta": meta or {}, "rows": clean}, indent=2, sort_keys=True)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)
