"""``vnncomp`` command line.

Exit status: 0 success (or a valid witness), 1 an invalid witness, 2 any error.
Diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import baseline, cex, onnx_rt, report, runner, scoring, specfmt

EXIT_OK, EXIT_INVALID, EXIT_ERROR = 0, 1, 2


class CliError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"vnncomp: {msg}", file=sys.stderr)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("vnncomp") / "data" / name))


def cmd_spec_dump(args) -> int:
    spec = specfmt.load_vnnlib(args.file, cap=args.cap)
    if args.format == "vnnlib":
        sys.stdout.write(specfmt.serialize_specification(spec))
    else:
        json.dump(specfmt.to_json(spec), sys.stdout, indent=2)
        sys.stdout.write("\n")
    return EXIT_OK


def cmd_net_info(args) -> int:
    net = onnx_rt.load_network(args.file)
    json.dump(onnx_rt.describe(net), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_cex_check(args) -> int:
    net = onnx_rt.load_network(args.onnx)
    spec = specfmt.load_vnnlib(args.vnnlib)
    witness = cex.load_counterexample(args.witness)
    verdict = cex.validate(witness, spec, net, cex.Mode(args.mode), args.out_tol)
    print(verdict.describe())
    return EXIT_OK if verdict.valid else EXIT_INVALID


def _adapter(spec: str, seed: int | None) -> runner.ToolAdapter:
    if spec == "baseline":
        return runner.baseline_adapter(seed or 0)
    return runner.load_adapter(spec)


def cmd_run(args) -> int:
    adapter = _adapter(args.adapter, args.seed)
    manifest = runner.load_manifest(args.manifest, name=args.benchmark)
    out = Path(args.out)
    if out.suffix == ".csv":
        path, overhead = runner.run_benchmark(adapter, manifest, out.parent, results_csv=out, grace_s=args.grace)
    else:
        path, overhead = runner.run_benchmark(adapter, manifest, out, grace_s=args.grace)
    print(f"{adapter.name}: {len(manifest.instances)} instances, overhead {overhead:.3f} s -> {path}")
    return EXIT_OK


def cmd_score(args) -> int:
    mode = cex.Mode(args.mode)
    scored, counts = scoring.load_results_dir(args.results, mode, args.out_tol)
    board = scoring.build_scoreboard(scored, counts, alternative=args.alt)
    report.write_report(board, scored, args.out, convention=args.convention)
    md, _ = report.render_overall(board.overall, "Overall Score (alternative)" if args.alt else "Overall Score")
    sys.stdout.write(md)
    return EXIT_OK


def cmd_verify(args) -> int:
    net = onnx_rt.load_network(args.onnx)
    spec = specfmt.load_vnnlib(args.vnnlib)
    budget = baseline.Budget(max_nodes=args.max_nodes, time_limit_s=args.timeout,
                             samples=args.samples, seed=args.seed or 0)
    res = baseline.verify_specification(net, spec, budget)
    print(res.verdict.value)
    if res.witness is not None:
        text = cex.serialize_counterexample(res.witness)
        if args.cex_out:
            Path(args.cex_out).write_text(text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vnncomp", description="Verification competition harness.")
    ap.add_argument("--seed", type=int, default=None, help="seed for the baseline verifier")
    ap.add_argument("--config", help="INI file whose [defaults] section overrides option defaults")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    spec = sub.add_parser("spec", help="VNN-LIB properties").add_subparsers(dest="action", required=True)
    p = spec.add_parser("dump", help="print the normalized disjunctive form")
    p.add_argument("file")
    p.add_argument("--format", choices=("json", "vnnlib"), default="json")
    p.add_argument("--cap", type=int, default=specfmt.DEFAULT_CASE_CAP)
    p.set_defaults(func=cmd_spec_dump)

    net = sub.add_parser("net", help="ONNX networks").add_subparsers(dest="action", required=True)
    p = net.add_parser("info", help="operators, shapes and parameter count")
    p.add_argument("file")
    p.set_defaults(func=cmd_net_info)

    c = sub.add_parser("cex", help="counterexamples").add_subparsers(dest="action", required=True)
    p = c.add_parser("check", help="validate a witness file")
    p.add_argument("onnx")
    p.add_argument("vnnlib")
    p.add_argument("witness")
    p.add_argument("--mode", choices=[m.value for m in cex.Mode], default=cex.Mode.DISCARD_OUTPUTS.value)
    p.add_argument("--out-tol", type=float, default=cex.DEFAULT_OUT_TOL)
    p.set_defaults(func=cmd_cex_check)

    p = sub.add_parser("run", help="run a tool over a benchmark manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--adapter", required=True, help="adapter INI file, or 'baseline'")
    p.add_argument("--out", required=True, help="output directory, or a .csv path for the results")
    p.add_argument("--benchmark", help="benchmark name (default: manifest directory name)")
    p.add_argument("--grace", type=float, default=runner.GRACE_S)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="score results and write tables")
    p.add_argument("--results", required=True, help="directory of results or count CSV files")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--alt", action="store_true", help="penalize witnesses with missing or wrong outputs")
    p.add_argument("--mode", choices=[m.value for m in cex.Mode], default=None)
    p.add_argument("--out-tol", type=float, default=cex.DEFAULT_OUT_TOL)
    p.add_argument("--convention", choices=report.CONVENTIONS, default="individual")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("verify", help="run the baseline verifier on one instance")
    p.add_argument("onnx")
    p.add_argument("vnnlib")
    p.add_argument("--timeout", type=float, required=True)
    p.add_argument("--max-nodes", type=int, default=baseline.Budget.max_nodes)
    p.add_argument("--samples", type=int, default=baseline.Budget.samples)
    p.add_argument("--cex-out")
    p.set_defaults(func=cmd_verify)
    return ap


def _apply_config(parser: argparse.ArgumentParser, path: str) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    if not cp.read(path):
        raise CliError(f"config file not found: {path}")
    if not cp.has_section("defaults"):
        return
    values = {k.replace("-", "_"): v for k, v in cp["defaults"].items()}
    stack = [parser]
    while stack:
        p = stack.pop()
        for action in p._actions:
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())
            elif action.dest in values:
                raw = values[action.dest]
                if isinstance(action, argparse._StoreTrueAction):
                    p.set_defaults(**{action.dest: raw.strip().lower() in ("1", "true", "yes", "on")})
                else:
                    p.set_defaults(**{action.dest: action.type(raw) if action.type else raw})


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    try:
        if known.config:
            _apply_config(parser, known.config)
        args = parser.parse_args(argv)
    except CliError as e:
        _err(str(e))
        return EXIT_ERROR
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "mode", "unset") is None:
        args.mode = (cex.Mode.PENALIZE_OUTPUTS if args.alt else cex.Mode.DISCARD_OUTPUTS).value
    try:
        return args.func(args)
    except (specfmt.SpecError, onnx_rt.OnnxError, cex.CexFormatError, specfmt.DimensionMismatch,
            runner.RunnerError, scoring.ResultsFormatError, baseline.UnboundedInput,
            ValueError, OSError) as e:
        _err(f"{type(e).__name__}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
