"""Command-line surface: ensemble, learn-weights, evaluate, gen-toy,
check-soundness, export-figure.

Exit codes: 0 success, 1 usage error, 2 data/file error, 3 soundness
violations found (check-soundness only). All outputs are deterministic
given the same inputs and --seed; files are written with sorted keys and
shortest round-trip floats, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .core import DataError, NORM_L2, NORMS, WeightVector
from .ensemble import ENSEMBLER_KINDS, PREFIX_BOUNDS, make_ensembler
from .io_jsonl import (
    load_records,
    load_weights,
    save_predictions,
    save_records,
    save_trace_csv,
    save_weights,
)
from .learning import LearnerConfig, learn
from .metrics import evaluate_all
from .toy import (
    SCENARIOS,
    export_figure,
    find_violations,
    gen_toy,
    read_grid_csv,
    write_grid_csv,
    write_violations_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VIOLATIONS = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would sys.exit(2); we map to 1
        raise _UsageError(message)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _parse_fallback(text: str) -> tuple[str, int]:
    if text == "plurality":
        return "plurality", 0
    if text == "random":
        return "random", 0
    if text.startswith("random:"):
        try:
            return "random", int(text.split(":", 1)[1])
        except ValueError:
            raise _UsageError(f"bad --fallback seed in {text!r}") from None
    raise _UsageError(f"--fallback must be 'plurality' or 'random:SEED', got {text!r}")


def _ensembler_from_args(args, record_set) -> tuple[object, WeightVector | None]:
    """Build and fit the requested ensembler; returns (estimator, weights used)."""
    if args.method == "weighted":
        if args.weights:
            w = load_weights(args.weights)
        else:
            _warn("no --weights given; learning weights on the input records (train = eval)")
            w, _ = learn(record_set)
        est = make_ensembler("weighted", weights=w)
        est.fit(record_set)
        return est, w
    if args.method == "permutation":
        fallback, seed = _parse_fallback(getattr(args, "fallback", "plurality"))
        est = make_ensembler(
            "permutation", prefix_bound=args.prefix_bound, fallback=fallback, seed=seed
        )
    else:
        est = make_ensembler(args.method)
    est.fit(record_set)
    return est, None


def _cmd_ensemble(args) -> int:
    rs = load_records(args.infile)
    est, _ = _ensembler_from_args(args, rs)
    out = est.ensemble_outputs(rs)
    save_predictions(out, rs, args.out, method=args.method)
    print(f"wrote {len(rs)} predictions ({args.method}) to {args.out}")
    return EXIT_OK


def _cmd_learn_weights(args) -> int:
    rs = load_records(args.infile)
    cfg = LearnerConfig(
        temperature=args.t,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        parameterization=args.param,
    )
    weights, trace = learn(rs, cfg)
    extra = {
        "raw_weights": list(trace.raw_weights.values),
        "raw_objective": trace.raw_objective,
        "exact_objective": trace.final_exact,
        "one_hot_exact": list(trace.one_hot_exact),
        "safety_net_applied": trace.safety_net_applied,
    }
    save_weights(weights, args.out, extra=extra)
    if args.trace:
        save_trace_csv(trace.objectives, args.trace)
    pretty = ", ".join(f"{v:.4f}" for v in weights)
    print(f"learned weights [{pretty}] exact objective {trace.final_exact:.4f}")
    if trace.safety_net_applied:
        print("safety net: replaced learned weights with the best single constituent")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    rs = load_records(args.infile)
    weights = load_weights(args.weights) if args.weights else None
    if weights is None:
        _warn("no --weights given; the weighted-voting row learns on these records (train = eval)")
    report = evaluate_all(rs, weights=weights, single_model=args.single_model)
    print(report.to_csv() if args.format == "csv" else report.format_table())
    return EXIT_OK


def _cmd_gen_toy(args) -> int:
    _, grid = gen_toy(
        args.scenario, seed=args.seed, h=args.h, epsilon=args.epsilon, norm=args.norm
    )
    write_grid_csv(grid, args.out)
    nx, ny = grid.shape
    print(f"wrote {nx}x{ny} grid ({args.scenario}, epsilon={args.epsilon}, norm={args.norm}) to {args.out}")
    if args.records:
        save_records(grid.to_record_set(), args.records)
        print(f"wrote {nx * ny} records to {args.records}")
    return EXIT_OK


def _cmd_check_soundness(args) -> int:
    grid = read_grid_csv(args.grid, epsilon=args.epsilon, norm=args.norm)
    weights = None
    if args.method == "weighted":
        if args.weights:
            weights = load_weights(args.weights)
        else:
            _warn("no --weights given; learning weights from the grid's ground truth")
    fallback, seed = _parse_fallback(args.fallback)
    violations = find_violations(
        grid,
        args.method,
        epsilon=args.epsilon,
        norm=args.norm,
        weights=weights,
        prefix_bound=args.prefix_bound,
        fallback=fallback,
        seed=seed,
    )
    if args.report:
        write_violations_csv(violations, args.report)
        print(f"wrote {len(violations)} violation rows to {args.report}")
    if violations:
        v = violations[0]
        print(
            f"UNSOUND on grid: {len(violations)} violation(s) for method {args.method}; "
            f"first: certified {v.output.label} at {v.point} but {v.output_prime.label} "
            f"at {v.point_prime} (distance {v.distance:.6g} <= {args.epsilon})"
        )
        return EXIT_VIOLATIONS
    print(f"no violations found for method {args.method} at grid resolution")
    return EXIT_OK


def _cmd_export_figure(args) -> int:
    grid = read_grid_csv(args.grid)
    export_figure(grid, args.out, cell=args.cell)
    stem = args.out[: -len(".svg")] if args.out.endswith(".svg") else args.out
    print(f"wrote figure to {args.out} and point data to {stem}.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="certvote", description="Ensembling of certifiably robust classifiers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("ensemble", help="apply an ensembling method to a records file")
    sp.add_argument("--in", dest="infile", required=True, metavar="RECORDS")
    sp.add_argument("--method", required=True, choices=ENSEMBLER_KINDS)
    sp.add_argument("--weights", help="weights JSON for --method weighted")
    sp.add_argument("--fallback", default="plurality", help="plurality or random:SEED")
    sp.add_argument("--prefix-bound", default="literal", choices=PREFIX_BOUNDS)
    sp.add_argument("--out", required=True, metavar="PREDICTIONS")
    sp.set_defaults(func=_cmd_ensemble)

    sp = sub.add_parser("learn-weights", help="learn voting weights from a records file")
    sp.add_argument("--in", dest="infile", required=True, metavar="RECORDS")
    sp.add_argument("--t", type=float, default=1e5, help="sigmoid temperature (default 1e5)")
    sp.add_argument("--lr", type=float, default=1e-2, help="learning rate (default 1e-2)")
    sp.add_argument("--epochs", type=int, default=500)
    sp.add_argument("--param", default="softmax", choices=("softmax", "projected"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, metavar="WEIGHTS_JSON")
    sp.add_argument("--trace", help="optional per-epoch objective CSV")
    sp.set_defaults(func=_cmd_learn_weights)

    sp = sub.add_parser("evaluate", help="score constituents and all ensemblers")
    sp.add_argument("--in", dest="infile", required=True, metavar="RECORDS")
    sp.add_argument("--weights", help="weights JSON for the weighted-voting row")
    sp.add_argument("--single-model", default="best", choices=("best", "first"))
    sp.add_argument("--format", default="table", choices=("table", "csv"))
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("gen-toy", help="generate a 2D toy scenario grid")
    sp.add_argument("--scenario", required=True, choices=SCENARIOS)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--h", type=float, default=0.01, help="grid step (default 0.01)")
    sp.add_argument("--epsilon", type=float, default=0.08)
    sp.add_argument("--norm", default=NORM_L2, choices=NORMS)
    sp.add_argument("--out", required=True, metavar="GRID_CSV")
    sp.add_argument("--records", help="also write the grid as a records file")
    sp.set_defaults(func=_cmd_gen_toy)

    sp = sub.add_parser("check-soundness", help="scan a grid for certificate violations")
    sp.add_argument("--grid", required=True, metavar="GRID_CSV")
    sp.add_argument("--method", required=True, choices=ENSEMBLER_KINDS)
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--norm", default=NORM_L2, choices=NORMS)
    sp.add_argument("--weights", help="weights JSON for --method weighted")
    sp.add_argument("--fallback", default="plurality", help="plurality or random:SEED")
    sp.add_argument("--prefix-bound", default="literal", choices=PREFIX_BOUNDS)
    sp.add_argument("--report", help="write violations CSV here")
    sp.set_defaults(func=_cmd_check_soundness)

    sp = sub.add_parser("export-figure", help="render a grid CSV to an SVG raster")
    sp.add_argument("--grid", required=True, metavar="GRID_CSV")
    sp.add_argument("--out", required=True, metavar="SVG")
    sp.add_argument("--cell", type=int, default=2, help="pixels per grid cell")
    sp.set_defaults(func=_cmd_export_figure)

    return p


def cli_main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
