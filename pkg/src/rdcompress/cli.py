"""Command-line interface.

    rdcompress importance --model M.json --data D.csv --labels y --objective unsup-cls
    rdcompress compress   --model M.json --data D.csv --labels y --compressor prune --ratio 0.2 --model-out M2.json
    rdcompress rd-curve   --preset fig2 --d-grid 0.6,3,9,14
    rdcompress verify     relu-prune --preset relu8
    rdcompress sweep      --preset mlp --objective baseline,unsup-cls --ratio-grid 0.05,0.1,0.2,0.4

Every output is CSV whose ``#`` preamble echoes the effective configuration.
Exit status: 0 ok, 2 usage or shape error, 3 domain error, 4 numeric error,
5 verification failure.
"""

import argparse
import sys

import numpy as np

from . import __version__, importance, io, metrics, presets, suites
from ._accel import backend
from .errors import DomainError, NumericError, ShapeError
from .rd_linear import LinearSource, nats_to_bits, rd_curve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_NUMERIC = 4
EXIT_VERIFY = 5


class UsageError(Exception):
    pass


def _floats(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _ratio(text):
    r = float(text)
    if not 0.0 <= r <= 1.0:
        raise argparse.ArgumentTypeError(f"ratio {r} outside [0, 1]")
    return r


def _ratio_grid(text):
    vals = _floats(text)
    for r in vals:
        if not 0.0 <= r <= 1.0:
            raise argparse.ArgumentTypeError(f"ratio {r} outside [0, 1]")
    return vals


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--threads", type=_positive_int, default=1)


def _add_model(p, presets_allowed=("mlp",)):
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--labels", help="label column of the dataset CSV")
    p.add_argument("--preset", choices=presets_allowed)
    p.add_argument("--temperature", type=float)
    p.add_argument("--exclude-bias", action="store_true", help="leave biases out of the compressed parameters")
    p.add_argument("--n-data", type=_positive_int, default=2000, help="samples drawn by the mlp preset")


def _add_objective(p, multi=False):
    names = list(importance.ALIASES)
    if multi:
        p.add_argument("--objective", default="baseline,unsup-cls",
                       help="comma-separated subset of " + ",".join(names))
    else:
        p.add_argument("--objective", choices=names, default="baseline")
    p.add_argument("--hessian-ridge", type=float, default=0.0)


def _add_compressor(p):
    p.add_argument("--compressor", choices=metrics.COMPRESSORS, default="prune")
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--bits", type=_positive_int, default=32)
    p.add_argument("--iters", type=_positive_int, default=100)
    p.add_argument("--n-init", type=_positive_int, default=10)
    p.add_argument("--mode", choices=metrics.MODES, default="layer")


def build_parser():
    ap = argparse.ArgumentParser(prog="rdcompress", description="Importance-weighted network compression toolkit.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("importance", help="diagonal importance scores as CSV")
    _add_model(p)
    _add_objective(p)
    _add_common(p)

    p = sub.add_parser("compress", help="compress a model once")
    _add_model(p)
    _add_objective(p)
    _add_compressor(p)
    p.add_argument("--ratio", type=_ratio, help="kept fraction for pruning")
    p.add_argument("--eval-data", help="dataset CSV for the report row (default --data)")
    p.add_argument("--model-out", help="write the compressed model JSON here")
    _add_common(p)

    p = sub.add_parser("rd-curve", help="water-filling rate-distortion curve of a linear model")
    p.add_argument("--preset", choices=("fig2",))
    p.add_argument("--sigma-w", type=_floats, help="diagonal of the weight prior covariance")
    p.add_argument("--lambda-x", type=_floats, help="diagonal of the input covariance")
    p.add_argument("--d-grid", type=_floats, help="ascending distortion values")
    p.add_argument("--d-points", type=_positive_int, default=50, help="uniform grid size when --d-grid is absent")
    _add_common(p)

    p = sub.add_parser("verify", help="run a self-check suite")
    p.add_argument("suite", choices=suites.SUITES)
    p.add_argument("--preset", choices=("fig2", "relu8"))
    p.add_argument("--instances", type=_positive_int)
    p.add_argument("--samples", type=_positive_int)
    p.add_argument("--distortion", type=float, default=3.0)
    p.add_argument("--pmax", type=int, default=40)
    p.add_argument("--detail", help="also write per-instance rows to this CSV")
    _add_common(p)

    p = sub.add_parser("sweep", help="metrics over a grid of ratios or codebook sizes")
    _add_model(p)
    _add_objective(p, multi=True)
    _add_compressor(p)
    p.add_argument("--ratio-grid", type=_ratio_grid, default=[0.05, 0.1, 0.2, 0.4])
    p.add_argument("--k-grid", type=_ints, help="codebook sizes for the quant compressors (default: --k)")
    p.add_argument("--eval-data", help="dataset CSV for the metrics (default --data)")
    p.add_argument("--plot-data", help="also write (x, y, series) triples here")
    p.add_argument("--plot-metric", default="cross_entropy", choices=metrics.REPORT_COLUMNS[4:])
    _add_common(p)
    return ap


def _config_lines(args):
    lines = [f"rdcompress {__version__} backend={backend()}"]
    for k in sorted(vars(args)):
        lines.append(f"{k} = {getattr(args, k)}")
    return lines


def _load(args):
    """(net, importance data, evaluation data) from flags or the mlp preset."""
    if args.preset == "mlp":
        if args.model or args.data:
            raise UsageError("--preset mlp replaces --model and --data")
        net = presets.bundled_model(include_bias=not args.exclude_bias)
        data = presets.gmm_dataset(args.n_data, [args.seed, 1])
        eval_data = presets.gmm_dataset(args.n_data, [args.seed, 2])
    else:
        if not args.model:
            raise UsageError("--model is required (or --preset mlp)")
        net = io.load_model(args.model, include_bias=not args.exclude_bias)
        data = io.load_dataset(args.data, args.labels, net.head) if args.data else None
        eval_path = getattr(args, "eval_data", None)
        eval_data = io.load_dataset(eval_path, args.labels, net.head) if eval_path else data
    if args.temperature is not None:
        net = net.with_temperature(args.temperature)
    return net, data, eval_data


def _check_objective(net, data, kind):
    kind = importance.ALIASES.get(kind, kind)
    if kind not in importance.KINDS:
        raise UsageError(f"unknown objective {kind!r}")
    if kind != "baseline" and data is None:
        raise UsageError(f"objective {kind} needs --data")
    if kind in importance.SUPERVISED and not data.has_labels:
        raise UsageError(f"objective {kind} needs --labels")
    if kind == "unsup_regression" and net.head != "regression":
        raise UsageError("unsup-reg needs a regression model")
    if kind == "unsup_classification" and net.head != "classification":
        raise UsageError("unsup-cls needs a classification model")
    return kind


def cmd_importance(args):
    net, data, _ = _load(args)
    kind = _check_objective(net, data, args.objective)
    imp = importance.compute(kind, net, data, args.hessian_ridge)
    io.write_importance(args.out, net, imp, _config_lines(args))
    return EXIT_OK


def _param(args):
    if args.compressor == "prune":
        if args.ratio is None:
            raise UsageError("prune needs --ratio")
        return args.ratio
    if args.k is None:
        raise UsageError(f"{args.compressor} needs --k")
    return args.k


def cmd_compress(args):
    net, data, eval_data = _load(args)
    kind = _check_objective(net, data, args.objective)
    param = _param(args)
    imp = importance.compute(kind, net, data, args.hessian_ridge)
    res = metrics.compress_network(net, imp, args.compressor, param, args.bits, args.iters,
                                   args.seed, args.mode, args.n_init)
    if args.model_out:
        io.save_model(res.net, args.model_out)
    if eval_data is None:
        vals = {c: float("nan") for c in metrics.REPORT_COLUMNS[4:]}
    else:
        vals = metrics.evaluate(net, res.net, eval_data)
    row = metrics.ReportRow(kind, args.compressor, param, res.ratio, vals)
    io.write_csv(args.out, metrics.REPORT_COLUMNS, [row.values()], _config_lines(args))
    return EXIT_OK


def _source(args):
    if args.preset == "fig2":
        if args.sigma_w or args.lambda_x:
            raise UsageError("--preset fig2 replaces --sigma-w and --lambda-x")
        return presets.fig2_source()
    if not (args.sigma_w and args.lambda_x):
        raise UsageError("give --preset fig2 or both --sigma-w and --lambda-x")
    return LinearSource(np.array(args.sigma_w), np.array(args.lambda_x))


def cmd_rd_curve(args):
    src = _source(args)
    if args.d_grid is not None:
        grid = args.d_grid
    else:
        grid = np.linspace(src.d_max / args.d_points, src.d_max, args.d_points)
    curve = rd_curve(src, grid)
    cols = ("D", "rate_bits", "mu") + tuple(f"D_{i + 1}" for i in range(src.m))
    rows = [(D, nats_to_bits(r), sol.mu) + tuple(sol.levels) for D, r, sol in curve]
    io.write_csv(args.out, cols, rows, _config_lines(args))
    return EXIT_OK


def cmd_verify(args):
    kw = {"seed": args.seed}
    if args.suite == "linear":
        if args.preset not in (None, "fig2"):
            raise UsageError("verify linear runs on the fig2 source")
        kw["D"] = args.distortion
        if args.samples:
            kw["n_samples"] = args.samples
    elif args.suite in ("relu-prune", "relu-quant"):
        if args.preset not in (None, "relu8"):
            raise UsageError(f"verify {args.suite} runs on the relu8 family")
        kw["p_max"] = args.pmax
        if args.instances:
            kw["n_instances"] = args.instances
    elif args.suite == "hermite":
        kw["p_max"] = args.pmax
        if args.instances:
            kw["n_instances"] = args.instances
        if args.samples:
            kw["n_samples"] = args.samples
    elif args.suite == "cubic" and args.instances:
        kw["n_cubics"] = args.instances
    res = suites.run(args.suite, **kw)
    comments = _config_lines(args) + [f"suite {res.name}: {'PASS' if res.passed else 'FAIL'}"]
    io.write_csv(args.out, suites.CHECK_COLUMNS, res.checks, comments)
    if args.detail and res.detail:
        io.write_csv(args.detail, res.detail_columns, res.detail, comments)
    return EXIT_OK if res.passed else EXIT_VERIFY


def cmd_sweep(args):
    net, data, eval_data = _load(args)
    kinds = [_check_objective(net, data, k.strip()) for k in args.objective.split(",") if k.strip()]
    if not kinds:
        raise UsageError("no objective given")
    if args.compressor == "prune":
        grid = args.ratio_grid
    else:
        grid = args.k_grid or ([args.k] if args.k else None)
        if not grid:
            raise UsageError(f"{args.compressor} needs --k-grid or --k")
    rep = metrics.sweep(net, data, kinds, args.compressor, grid, seed=args.seed, eval_data=eval_data,
                        ridge=args.hessian_ridge, bits=args.bits, iters=args.iters, mode=args.mode,
                        n_init=args.n_init, threads=args.threads)
    io.write_csv(args.out, metrics.REPORT_COLUMNS, rep.table(), _config_lines(args))
    if args.plot_data:
        io.write_csv(args.plot_data, ("x", "y", "series"), rep.plot_data(args.plot_metric), _config_lines(args))
    return EXIT_OK


COMMANDS = {
    "importance": cmd_importance,
    "compress": cmd_compress,
    "rd-curve": cmd_rd_curve,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ShapeError, KeyError, FileNotFoundError) as e:
        print(f"rdcompress: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as e:
        print(f"rdcompress: domain error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (NumericError, FloatingPointError) as e:
        print(f"rdcompress: numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"rdcompress: error: {e}", file=sys.stderr)
        return EXIT_USAGE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
