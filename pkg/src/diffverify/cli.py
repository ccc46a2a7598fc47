"""Command-line interface: verify, bounds, truncate, eval, fuzz.

Exit codes: 0 = verified / clean, 1 = undetermined / violations found,
2 = usage or file errors.
"""

import argparse
import json
import os
import sys
import time

# Keep BLAS single-threaded: parallelism lives in the verifier's process pool
# and nested BLAS threads only add noise at these matrix sizes.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np

from . import __version__
from .deltabounds import MODES, SymVarOptions, forward_diff
from .model import (InputBox, ParseError, evaluate, load_network, normalize_box,
                    pair, serialize_json, truncate_weights, write_nnet)
from .oracle import sample_check
from .verifier import SPLIT_STRATEGIES, VerificationTask, verify

EXIT_VERIFIED = 0
EXIT_UNDETERMINED = 1
EXIT_ERROR = 2


class CliError(Exception):
    pass


def _mode_arg(value: str) -> str:
    mode = value.replace("-", "_")
    if mode not in MODES:
        raise argparse.ArgumentTypeError(f"mode must be one of {MODES}")
    return mode


def load_property(path: str):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise CliError(f"cannot read property file: {e}") from None
    except json.JSONDecodeError as e:
        raise CliError(f"property file line {e.lineno}: {e.msg}") from None
    try:
        lo = np.asarray(doc["input_lower"], dtype=np.float64)
        hi = np.asarray(doc["input_upper"], dtype=np.float64)
    except KeyError as e:
        raise CliError(f"property file missing field {e}") from None
    epsilon = doc.get("epsilon")
    normalized = bool(doc.get("normalized", False))
    try:
        box = InputBox(lo, hi)
    except ValueError as e:
        raise CliError(f"property file: {e}") from None
    return box, epsilon, normalized


def _load_pair(args):
    try:
        f = load_network(args.net1, args.format)
    except (OSError, ParseError) as e:
        raise CliError(f"{args.net1}: {e}") from None
    if args.net2:
        try:
            fp = load_network(args.net2, args.format)
        except (OSError, ParseError) as e:
            raise CliError(f"{args.net2}: {e}") from None
    elif args.truncate:
        fp = truncate_weights(f)
    else:
        raise CliError("need --net2 or --truncate to obtain the second network")
    try:
        return pair(f, fp)
    except ValueError as e:
        raise CliError(str(e)) from None


def _resolve_box(net_pair, args):
    box, epsilon, normalized = load_property(args.property)
    if box.lo.shape[0] != net_pair.input_count:
        raise CliError(f"property box has {box.lo.shape[0]} dims, "
                       f"networks expect {net_pair.input_count}")
    if normalized or args.normalize:
        box = normalize_box(net_pair.f, box)
    return box, epsilon


def _report_base(args, mode):
    return {
        "tool": "diffverify",
        "version": __version__,
        "mode": mode,
        "net1": args.net1,
        "net2": args.net2 or f"truncate({args.net1})",
    }


def _write_report(report: dict, path: str | None) -> None:
    text = json.dumps(report, indent=1)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_verify(args) -> int:
    net_pair = _load_pair(args)
    box, epsilon = _resolve_box(net_pair, args)
    if args.epsilon is not None:
        epsilon = args.epsilon
    if epsilon is None:
        raise CliError("no epsilon: set it in the property file or pass --epsilon")
    task = VerificationTask(
        net_pair, box, float(epsilon), mode=args.mode, max_depth=args.max_depth,
        timeout_s=args.timeout_s, thread_count=args.threads,
        split_strategy=args.split,
        symvar_opts=SymVarOptions(budget_limit=args.budget))
    outcome = verify(task)
    report = _report_base(args, args.mode)
    report.update({
        "status": outcome.status,
        "epsilon": float(epsilon),
        "output_delta_bounds": [[c.lo, c.hi] for c in outcome.output_bounds]
        if outcome.output_bounds else None,
        "subregions_explored": outcome.subregions_explored,
        "leaf_count": outcome.leaf_count,
        "max_depth_reached": outcome.max_depth_reached,
        "wall_time_s": outcome.wall_time_s,
        "symvars_introduced": outcome.symvars_introduced,
        "case_histogram": dict(sorted(outcome.case_histogram.items())),
        "threads": args.threads,
        "split": args.split,
        "timed_out": outcome.timed_out,
    })
    _write_report(report, args.out)
    print(f"{outcome.status} in {outcome.subregions_explored} subregion(s), "
          f"{outcome.wall_time_s:.3f}s", file=sys.stderr)
    return EXIT_VERIFIED if outcome.verified else EXIT_UNDETERMINED


def cmd_bounds(args) -> int:
    net_pair = _load_pair(args)
    box, _ = _resolve_box(net_pair, args)
    start = time.monotonic()
    res = forward_diff(net_pair, box, args.mode,
                       SymVarOptions(budget_limit=args.budget))
    elapsed = time.monotonic() - start
    bounds = res.concrete_outputs
    # Smallest epsilon a single pass would verify, padded by one ulp.
    min_eps = max(max(abs(c.lo), abs(c.hi)) for c in bounds)
    min_eps = float(np.nextafter(min_eps, np.inf))
    report = _report_base(args, args.mode)
    report.update({
        "output_delta_bounds": [[c.lo, c.hi] for c in bounds],
        "output_delta_equations": [
            {"lower": _expr_doc(si.lb), "upper": _expr_doc(si.ub)}
            for si, _ in res.outputs
        ],
        "min_verifiable_epsilon": min_eps,
        "symvars_introduced": res.stats.symvars_introduced,
        "unstable_pairs_per_layer": res.stats.unstable_pairs_per_layer,
        "case_histogram": dict(sorted(res.stats.case_histogram.items())),
        "wall_time_s": elapsed,
    })
    _write_report(report, args.out)
    for j, c in enumerate(bounds):
        print(f"output {j}: [{c.lo:.6g}, {c.hi:.6g}]", file=sys.stderr)
    print(f"single-pass verifiable epsilon: {min_eps:.6g}", file=sys.stderr)
    return EXIT_VERIFIED


def _expr_doc(e):
    return {"input_coeffs": e.input_coeffs.tolist(),
            "sym_coeffs": {str(k): v for k, v in sorted(e.sym_coeffs.items())},
            "constant": e.constant}


def cmd_truncate(args) -> int:
    try:
        net = load_network(args.net1, args.format)
    except (OSError, ParseError) as e:
        raise CliError(f"{args.net1}: {e}") from None
    out = truncate_weights(net)
    if args.out.endswith(".nnet"):
        text = write_nnet(out)
    else:
        text = serialize_json(out) + "\n"
    with open(args.out, "w") as fh:
        fh.write(text)
    print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_VERIFIED


def cmd_eval(args) -> int:
    net_pair = _load_pair(args)
    try:
        x = np.array([float(t) for t in args.input.split(",")], dtype=np.float64)
    except ValueError:
        raise CliError(f"cannot parse input point {args.input!r}") from None
    if x.shape[0] != net_pair.input_count:
        raise CliError(f"input point has {x.shape[0]} values, "
                       f"networks expect {net_pair.input_count}")
    y1 = evaluate(net_pair.f, x)
    y2 = evaluate(net_pair.fp, x)
    doc = {"input": x.tolist(), "net1": y1.tolist(), "net2": y2.tolist(),
           "difference": (y2 - y1).tolist()}
    print(json.dumps(doc, indent=1))
    return EXIT_VERIFIED


def cmd_fuzz(args) -> int:
    net_pair = _load_pair(args)
    box, _ = _resolve_box(net_pair, args)
    snapshot = forward_diff(net_pair, box, args.mode,
                            SymVarOptions(budget_limit=args.budget))
    report = sample_check(net_pair, box, snapshot, n=args.samples, seed=args.seed)
    doc = _report_base(args, args.mode)
    doc.update({
        "samples_tested": report.samples_tested,
        "violations": [
            {"point": v.point.tolist(), "where": v.where, "bound": v.bound,
             "amount": v.amount}
            for v in report.violations
        ],
        "max_observed_diff": report.max_observed_diff.tolist(),
    })
    _write_report(doc, args.out)
    print(f"{report.samples_tested} samples, {len(report.violations)} violations",
          file=sys.stderr)
    return EXIT_VERIFIED if report.ok else EXIT_UNDETERMINED


def _add_common_net_args(p, second_net=True):
    p.add_argument("--net1", required=True, help="first network file (.nnet or .json)")
    if second_net:
        p.add_argument("--net2", help="second network file")
        p.add_argument("--truncate", action="store_true",
                       help="derive the second network by 16-bit weight truncation")
    p.add_argument("--format", default="auto", choices=["auto", "nnet", "json"])


def _add_analysis_args(p):
    p.add_argument("--property", required=True,
                   help="JSON property file: input_lower, input_upper, epsilon")
    p.add_argument("--mode", type=_mode_arg, default="full",
                   help="naive | concretize | convex-only | symvars-only | full")
    p.add_argument("--budget", type=int, default=None,
                   help="cap on intermediate variables (default: computed)")
    p.add_argument("--normalize", action="store_true",
                   help="apply NNet normalization to the property box")
    p.add_argument("--out", help="write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="diffverify",
        description="Sound bounds on the output difference of paired ReLU networks")
    ap.add_argument("--version", action="version", version=f"diffverify {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="prove |f'(x) - f(x)| < epsilon over a box")
    _add_common_net_args(p)
    _add_analysis_args(p)
    p.add_argument("--epsilon", type=float, help="override the property epsilon")
    p.add_argument("--threads", type=int, default=12)
    p.add_argument("--timeout-s", type=float, default=1800.0)
    p.add_argument("--max-depth", type=int, default=25)
    p.add_argument("--split", default="smear", choices=list(SPLIT_STRATEGIES))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bounds", help="single forward pass, no refinement")
    _add_common_net_args(p)
    _add_analysis_args(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("truncate", help="write the 16-bit-rounded copy of a network")
    _add_common_net_args(p, second_net=False)
    p.add_argument("--out", required=True, help="output file (.nnet or .json)")
    p.set_defaults(func=cmd_truncate)

    p = sub.add_parser("eval", help="run both networks on one input point")
    _add_common_net_args(p)
    p.add_argument("--input", required=True, help="comma-separated input values")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuzz", help="sample-check one forward pass for soundness")
    _add_common_net_args(p)
    _add_analysis_args(p)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_fuzz)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 on --help
        return int(e.code or 0)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ParseError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
