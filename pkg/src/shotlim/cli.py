"""Command-line interface: ``shotnoise {simulate,moments,check,tails,compare}``.

Every output carries a metadata record with the tool version, the parsed
configuration (including argv) and the master seed, and nothing time
dependent, so re-running the recorded command reproduces the file byte for
byte.  Exit codes: 0 ok, 2 usage or inadmissible parameters, 3 resource
guard, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .distributions import JumpFamily
from .levyou import (BetaProc, GammaProc, GaussianOU, GaussianOUParams, IGProc, LevyOUParams,
                     NoExactSamplerError, PoissonProc, levyou_moments, levyou_transition,
                     tail_table_csv)
from .limits import (KINDS, FamilySequence, InadmissibleParameterError, check_conditions,
                     table1_family)
from .montecarlo import (DEFAULT_EXPERIMENT, compare_experiment, rows_to_csv, rows_to_json,
                         run_ensemble)
from .rng import stream
from .shotnoise import ResourceGuardError, ShotNoiseParams, shot_moments, simulate_path

EXIT_OK, EXIT_USAGE, EXIT_GUARD, EXIT_NUMERIC = 0, 2, 3, 4
PROCESSES = ("shot", "ou-gamma", "ou-ig", "ou-poisson", "ou-beta", "gauss-ou")
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _env_seed() -> int:
    raw = os.environ.get("SHOTNOISE_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SHOTNOISE_SEED must be an integer, got {raw!r}")


def _add_common(p, seed_default):
    p.add_argument("--seed", type=int, default=seed_default,
                   help="master seed, a nonnegative integer (default: $SHOTNOISE_SEED or 0)")
    p.add_argument("-o", "--output", default="-", help="output file path; '-' writes to stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format")


def _add_family(p):
    p.add_argument("--family", choices=KINDS, default="gamma",
                   help="jump family whose lambda-scaling is used")
    p.add_argument("--mu", type=float, default=1.0,
                   help="limit drift mu = lim lambda E[J] (amplitude per unit time)")
    p.add_argument("--sigma-tilde2", "--sigma2", dest="sigma_tilde2", type=float, default=None,
                   help="limiting variance parameter sigma_tilde^2 (amplitude^2 per unit time); "
                        "gamma/ig rows, tied beta preset, theorem3 target sigma^2")
    p.add_argument("--beta", type=float, default=None,
                   help="beta row second shape parameter (dimensionless)")
    p.add_argument("--lambda", dest="lam", type=float, default=1000.0,
                   help="event rate lambda_n (events per unit time)")
    p.add_argument("--alpha", type=float, default=1.0, help="decay rate alpha (1 / time)")
    p.add_argument("--x0", type=float, default=0.0, help="initial value X(0) (amplitude units)")
    p.add_argument("--c1", type=float, default=None, help="theorem3 exponent c1 in (0, 2/3) (dimensionless)")
    p.add_argument("--c2", type=float, default=None, help="theorem3 exponent c2 in (0, c1/2) (dimensionless)")
    p.add_argument("--c3", type=float, default=None, help="theorem3 exponent c3 > 0 (dimensionless)")
    p.add_argument("--calibration", choices=("gamma", "ig", "beta"), default="gamma",
                   help="theorem3 family of the positive jump part")
    p.add_argument("--degenerate-scaling", choices=("mean", "variance"), default="mean",
                   help="constant jumps: match lambda E[J] (mean) or lambda E[J^2] (variance)")


def build_parser() -> argparse.ArgumentParser:
    seed_default = _env_seed()
    parser = _Parser(prog="shotnoise", description="Shot noise, its Levy-OU and Gaussian OU limits.")
    parser.add_argument("--version", action="version", version=f"shotnoise {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="ensembles or single paths of a process")
    p.add_argument("--process", choices=PROCESSES, default="shot", help="process to simulate")
    _add_family(p)
    p.add_argument("--t", type=float, default=None, help="observation time (time units)")
    p.add_argument("--t-grid", type=_float_list, default=None,
                   help="comma-separated observation times (time units); one ensemble per time")
    p.add_argument("--n", type=int, default=1000, help="ensemble size (number of samples)")
    p.add_argument("--path", action="store_true",
                   help="write one sample path on the time grid instead of an ensemble")
    p.add_argument("--exact", action="store_true",
                   help="simulate every jump even for infinitely divisible amplitude laws")
    p.add_argument("--workers", type=int, default=1, help="worker processes (count)")
    _add_common(p, seed_default)

    p = sub.add_parser("moments", help="closed-form mean, variance, covariance and fourth moment")
    p.add_argument("--process", choices=PROCESSES, default="shot", help="process")
    _add_family(p)
    p.add_argument("--t", type=float, required=True, help="time (time units)")
    p.add_argument("--s", type=float, default=0.0, help="lag for Cov(X(t), X(t+s)) (time units)")
    _add_common(p, seed_default)

    p = sub.add_parser("check", help="diffusion-approximation conditions and limit classification")
    _add_family(p)
    p.add_argument("--lambda-grid", type=_float_list, default=[1e3, 1e4, 1e6, 1e8],
                   help="increasing comma-separated rates lambda_n (events per unit time), >= 4 values")
    p.add_argument("--table", action="store_true", help="also print a readable table to stderr")
    _add_common(p, seed_default)

    p = sub.add_parser("tails", help="Levy tail U(x) = int_x^inf u(s) ds of a limit subordinator")
    p.add_argument("--sub", choices=("pp", "gp", "igp", "bp"), required=True, help="subordinator")
    p.add_argument("--mu", type=float, default=1.0, help="mu (amplitude per unit time)")
    p.add_argument("--sigma2", "--sigma-tilde2", dest="sigma_tilde2", type=float, default=1.0,
                   help="sigma_tilde^2 for gp/igp (amplitude^2 per unit time)")
    p.add_argument("--beta", type=float, default=2.0, help="bp shape beta (dimensionless)")
    p.add_argument("--x", type=_float_list, required=True,
                   help="comma-separated jump sizes x > 0 (amplitude units; bp needs x < 1)")
    _add_common(p, seed_default)

    p = sub.add_parser("compare", help="IAE of shot noise vs Levy-OU and Gaussian OU over a grid")
    p.add_argument("--config", default=None,
                   help="JSON experiment file with keys families, mu, sigma_tilde2, lambda, t, "
                        "alpha (1/time), x0, n (samples), seed, bins")
    p.add_argument("--n", type=int, default=None, help="override the ensemble size (samples)")
    p.add_argument("--full", action="store_true", help="use 10^6 samples per ensemble")
    p.add_argument("--workers", type=int, default=1, help="worker processes (count)")
    _add_common(p, seed_default)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _strip_output(argv) -> list[str]:
    # the destination is not part of the run, so files stay identical wherever they are written
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok in ("-o", "--output"):
            skip = True
        elif not tok.startswith("--output="):
            out.append(tok)
    return out


def _meta(args, argv) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("output",)}
    return {"tool": "shotnoise", "version": __version__, "seed": args.seed, "config": cfg,
            "argv": _strip_output(argv)}


def _write(args, text: str):
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)


def _csv_header(meta: dict) -> str:
    return "# meta: " + json.dumps(meta, sort_keys=True) + "\n"


def _sequence(args) -> FamilySequence:
    return FamilySequence(args.family, args.mu, sigma_tilde2=args.sigma_tilde2, beta=args.beta,
                          c1=args.c1, c2=args.c2, c3=args.c3, calibration=args.calibration,
                          degenerate_scaling=args.degenerate_scaling)


def _jump(args) -> JumpFamily:
    return table1_family(_sequence(args), args.lam)


def _process_spec(args):
    """ShotNoiseParams, LevyOUParams or GaussianOUParams from the flags."""
    if args.process == "shot":
        return ShotNoiseParams(args.lam, args.alpha, args.x0, _jump(args))
    mu = args.mu
    s2 = args.sigma_tilde2
    if args.process == "ou-poisson":
        return LevyOUParams(args.alpha, args.x0, PoissonProc(mu))
    if args.process == "ou-beta":
        beta = args.beta if args.beta is not None else (mu / s2 if s2 else None)
        if beta is None:
            raise UsageError("ou-beta needs --beta or --sigma-tilde2")
        return LevyOUParams(args.alpha, args.x0, BetaProc(mu, beta))
    if s2 is None:
        raise UsageError(f"{args.process} needs --sigma-tilde2")
    if args.process == "ou-gamma":
        return LevyOUParams(args.alpha, args.x0, GammaProc(mu * mu / s2, mu / s2))
    if args.process == "ou-ig":
        return LevyOUParams(args.alpha, args.x0, IGProc(math.sqrt(mu**3 / s2), math.sqrt(mu / s2)))
    return GaussianOUParams(mu, s2, args.alpha, args.x0)


def _times(args) -> list[float]:
    if args.t_grid:
        times = args.t_grid
    elif args.t is not None:
        times = [args.t]
    else:
        raise UsageError("give --t or --t-grid")
    if any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise UsageError("times must be nonnegative and increasing")
    return times


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _single_path(spec, times, seed):
    rng = stream(seed, 0)
    if isinstance(spec, ShotNoiseParams):
        return simulate_path(spec, times[-1], times, rng, seed).values
    y = spec.y0
    values, prev = [], 0.0
    for t in times:
        if t > prev:
            if isinstance(spec, LevyOUParams):
                y = float(levyou_transition(spec, y, t - prev, rng))
            else:
                y = float(GaussianOU(spec).transition_sample(y, t - prev, rng))
        values.append(y)
        prev = t
    return np.array(values)


def cmd_simulate(args, argv) -> int:
    spec = _process_spec(args)
    if isinstance(spec, LevyOUParams) and isinstance(spec.subordinator, BetaProc):
        raise NoExactSamplerError("no exact sampler for BetaProc")
    times = _times(args)
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    meta = _meta(args, argv)
    if args.path:
        values = _single_path(spec, times, args.seed)
        if args.format == "json":
            _write(args, json.dumps({"meta": meta, "time": times, "value": values.tolist()},
                                    sort_keys=True) + "\n")
        else:
            body = "".join(f"{t!r},{float(v)!r}\n" for t, v in zip(times, values))
            _write(args, _csv_header(meta) + "time,value\n" + body)
        return EXIT_OK
    results = [run_ensemble(spec, t, args.n, args.seed, workers=args.workers, exact=args.exact)
               for t in times]
    if args.format == "json":
        payload = {"meta": meta, "ensembles": [
            {"process_tag": r.process_tag, "t": r.t, "n": r.n, "seed": r.seed, "info": r.info,
             "samples": r.samples.tolist()} for r in results]}
        _write(args, json.dumps(payload, sort_keys=True) + "\n")
        return EXIT_OK
    lines = [_csv_header(meta)]
    if len(results) == 1:
        lines.append("index,value\n")
        lines.extend(f"{i},{float(v)!r}\n" for i, v in enumerate(results[0].samples))
    else:
        lines.append("t,index,value\n")
        for r in results:
            lines.extend(f"{r.t!r},{i},{float(v)!r}\n" for i, v in enumerate(r.samples))
    _write(args, "".join(lines))
    return EXIT_OK


def cmd_moments(args, argv) -> int:
    spec = _process_spec(args)
    if isinstance(spec, ShotNoiseParams):
        m = shot_moments(spec, args.t, args.s)
        rec = {"mean": m.mean, "variance": m.variance, "covariance": m.covariance,
               "fourth_moment": m.fourth_moment}
    elif isinstance(spec, LevyOUParams):
        m = levyou_moments(spec, args.t, args.s)
        rec = {"mean": m.mean, "variance": m.variance, "covariance": m.covariance}
    else:
        g = GaussianOU(spec)
        rec = {"mean": g.mean(args.t), "variance": g.variance(args.t),
               "covariance": g.covariance(args.t, args.s), "nonneg_prob": g.nonneg_prob(args.t)}
    meta = _meta(args, argv)
    if args.format == "json":
        _write(args, json.dumps({"meta": meta, "moments": rec}, sort_keys=True) + "\n")
    else:
        keys = list(rec)
        _write(args, _csv_header(meta) + ",".join(keys) + "\n"
               + ",".join(repr(float(rec[k])) for k in keys) + "\n")
    return EXIT_OK


def cmd_check(args, argv) -> int:
    report = check_conditions(_sequence(args), args.lambda_grid)
    print(report.classification)
    if args.table:
        print(report.to_table(), file=sys.stderr)
    if args.output != "-":
        payload = {"meta": _meta(args, argv), "report": report.to_dict()}
        _write(args, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_tails(args, argv) -> int:
    mu, s2 = args.mu, args.sigma_tilde2
    spec = {"pp": lambda: PoissonProc(mu),
            "gp": lambda: GammaProc(mu * mu / s2, mu / s2),
            "igp": lambda: IGProc(math.sqrt(mu**3 / s2), math.sqrt(mu / s2)),
            "bp": lambda: BetaProc(mu, args.beta)}[args.sub]()
    meta = _meta(args, argv)
    if args.format == "json":
        xs = list(args.x)
        dens = None if isinstance(spec, PoissonProc) else [float(spec.density(x)) for x in xs]
        payload = {"meta": meta, "x": xs, "u": dens, "U": [float(spec.tail(x)) for x in xs]}
        _write(args, json.dumps(payload, sort_keys=True) + "\n")
    else:
        _write(args, _csv_header(meta) + tail_table_csv(spec, args.x))
    return EXIT_OK


def cmd_compare(args, argv) -> int:
    cfg = dict(DEFAULT_EXPERIMENT)
    user = {}
    if args.config:
        with open(args.config) as fh:
            user = json.load(fh)
    cfg.update(user)
    if "seed" not in user:
        cfg["seed"] = args.seed
    if args.full:
        cfg["n"] = 1_000_000
    if args.n is not None:
        cfg["n"] = args.n
    rows = compare_experiment(cfg, workers=args.workers)
    meta = _meta(args, argv)
    meta["experiment"] = cfg
    if args.format == "json":
        _write(args, rows_to_json(rows, meta) + "\n")
    else:
        _write(args, _csv_header(meta) + rows_to_csv(rows))
    failed = [r for r in rows if r["error"] and math.isnan(r["iae_gauss"])]
    return EXIT_NUMERIC if rows and len(failed) == len(rows) else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "moments": cmd_moments, "check": cmd_check,
            "tails": cmd_tails, "compare": cmd_compare}


def _fail(code: int, message: str) -> int:
    print(f"shotnoise: error: {message}".splitlines()[0], file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except NoExactSamplerError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except ResourceGuardError as exc:
        return _fail(EXIT_GUARD, str(exc))
    except (InadmissibleParameterError, ValueError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    except ArithmeticError as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    except OSError as exc:
        return _fail(EXIT_USAGE, str(exc))


if __name__ == "__main__":
    sys.exit(main())
