"""``confsym`` command line.

Exit codes: 0 when every check passes, 1 when any fails (including bad
arguments and stage errors), 2 when a verdict is indeterminate.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import curvature as CV
from . import fixtures as FX
from . import kerb as K
from . import pipeline as P

TAU_TOLERANCE = 1e-6


class _Parser(argparse.ArgumentParser):
    # exit code 2 is reserved for indeterminate verdicts
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _pairs(items, what):
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise P.ConfigError(f"{what} expects name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise P.ConfigError(f"{what} {name}: not a number: {value!r}") from None
    return out


def _common(parser):
    parser.add_argument("--config", help="JSON run configuration; flags override its fields")
    parser.add_argument("--fixture", help="fixture name (see 'fixtures list')")
    parser.add_argument("--param", action="extend", nargs="+", metavar="NAME=VALUE",
                        help="fixture parameter, e.g. a=-2 for zpow")
    parser.add_argument("--n", type=int, help="metric dimension (4..8)")
    parser.add_argument("--epsilon", type=int, choices=(1, -1), help="sign +1 or -1")
    parser.add_argument("--gamma", help="signs of the form on V, length n - 4 (default all '+')")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--tol", action="extend", nargs="+", metavar="NAME=VALUE",
                        help="tolerance overrides")


def build_parser():
    parser = _Parser(prog="confsym", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fx = sub.add_parser("fixtures", help="fixture registry")
    fx.add_argument("action", choices=("list",))

    c = sub.add_parser("classify", help="classify the centroaffine connection and its quadric")
    _common(c)
    c.add_argument("--csv", help="write the immersion samples (y1, y2, F1, F2, F3)")

    t = sub.add_parser("solve-tau", help="solve for tau and report its residual")
    _common(t)

    b = sub.add_parser("build-metric", help="dump sampled metric components as JSON")
    _common(b)

    v = sub.add_parser("verify", help="build the metric and run the certification battery")
    _common(v)

    r = sub.add_parser("report", help="verify plus Ker B classification, as a full JSON report")
    _common(r)
    r.add_argument("--golden", help="compare residuals with a golden record")
    r.add_argument("--write-golden", help="store this run's residuals as a golden record")
    return parser


def config_from_args(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for key in ("fixture", "n", "epsilon", "gamma", "out"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if args.param:
        data["params"] = {**data.get("params", {}), **_pairs(args.param, "--param")}
    if args.tol:
        data["tolerances"] = {**data.get("tolerances", {}), **_pairs(args.tol, "--tol")}
    if args.n is not None and args.gamma is None and len(data.get("gamma") or "") != args.n - 4:
        data.pop("gamma", None)
    return P.RunConfig.from_dict(data)


def _emit(doc, path):
    if path:
        P.write_json(doc, path)
    else:
        sys.stdout.write(P.dumps(doc))


def _summary(checks, status):
    for c in checks:
        print(f"{c.status.upper():<13} {c.name:<22} residual={c.residual:.3e} tol={c.tolerance:.1e}",
              file=sys.stderr)
    print(f"overall: {status}", file=sys.stderr)


def cmd_fixtures(args):
    for name in FX.fixture_names():
        fx = FX.get_fixture(name)
        case = f"case {fx.case}" if fx.case else "-"
        print(f"{name:<26} {fx.expected:<16} {case:<7} {fx.description}")
    return 0


def cmd_classify(args):
    cfg = config_from_args(args)
    timings = {}
    record, samples, _ = P.classify(cfg, timings)
    if args.csv and samples is not None:
        K.write_F_csv(args.csv, *samples)
    ok = P.classification_ok(record)
    status = CV.OK if ok else CV.FAIL
    doc = P.report_document(cfg, "classify", status, [], {}, [], {"classify": record}, timings)
    _emit(doc, cfg.out)
    return P.exit_code(status)


def cmd_solve_tau(args):
    cfg = config_from_args(args)
    timings = {}
    sd, sol = P.solve(cfg, timings)
    with P.stage("tau_solver", timings):
        res = P.tau_residual(sd, sol)
    check = CV.Check("tau_equation", res, TAU_TOLERANCE, CV.OK if res < TAU_TOLERANCE else CV.FAIL)
    stages = {"tau": {"c": sol.c, "base_line": sol.base_line, "c_residual": sol.c_residual,
                      "f_source": sd.f_source}}
    doc = P.report_document(cfg, "solve-tau", check.status, [check], {}, [], stages, timings)
    _emit(doc, cfg.out)
    return P.exit_code(check.status)


def cmd_build_metric(args):
    cfg = config_from_args(args)
    sd, _, g = P.build_metric(cfg)
    with P.stage("metric_factory"):
        pts = P.sample_points(cfg, g, sd)
        ok, margin = g.certify_signature(pts)
        doc = {"schema_version": P.SCHEMA_VERSION, "kind": "metric", "config": cfg.to_dict(),
               "config_hash": cfg.hash, "signature_ok": ok, "eigenvalue_margin": margin, **g.to_json(pts)}
    _emit(P._clean(doc), cfg.out)
    return 0 if ok else 1


def cmd_verify(args):
    cfg = config_from_args(args)
    result = P.run_pipeline(cfg)
    _summary(result.report.checks, result.status)
    if not cfg.out:
        sys.stdout.write(P.dumps(result.document()))
    return result.exit_code


def cmd_report(args):
    cfg = config_from_args(args)
    cfg.kerb = True
    result = P.run_pipeline(cfg)
    doc = result.document()
    code = result.exit_code
    if not P.classification_ok(doc["stages"]["classify"]):
        print("classification disagrees with the fixture registry", file=sys.stderr)
        code = 1
    if args.write_golden:
        P.write_json(P.golden_record(doc), args.write_golden)
    if args.golden:
        with open(args.golden) as fh:
            problems = P.compare_golden(doc, json.load(fh))
        for p in problems:
            print(f"golden: {p}", file=sys.stderr)
        if problems:
            code = 1
    _summary(result.report.checks, result.status)
    if not cfg.out:
        sys.stdout.write(P.dumps(doc))
    return code


COMMANDS = {"fixtures": cmd_fixtures, "classify": cmd_classify, "solve-tau": cmd_solve_tau,
            "build-metric": cmd_build_metric, "verify": cmd_verify, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (P.ConfigError, P.StageError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"confsym: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
