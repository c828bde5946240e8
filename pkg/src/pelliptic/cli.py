"""Scenario-driven command line:

    verify run <scenario.toml> [--out DIR] [--parallel] [--no-figures]
    verify presets
    verify sweep <scenario.toml> --param path.to.key --values v1,v2,... [--out DIR]

Exit status 0 iff every asserted invariant matches the scenario's
expectation.  PELLIPTIC_THREADS bounds the suite fan-out under --parallel.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .presets import describe_presets
from .report import build_report, write_report
from .scenario import Scenario, override
from .suites import run_suites


def _max_workers() -> int | None:
    v = os.environ.get("PELLIPTIC_THREADS")
    return int(v) if v else None


def cmd_run(args) -> int:
    try:
        scenario = Scenario.load(args.scenario)
    except (ValueError, KeyError, OSError) as exc:
        print(f"scenario config error: {exc}", file=sys.stderr)
        return 2
    results = run_suites(scenario, parallel=args.parallel, max_workers=_max_workers())
    report = build_report(scenario, results)
    out = args.out or f"out_{scenario.name}"
    path = write_report(report, out, figures=not args.no_figures)
    for name, res in report["suites"].items():
        print(f"[{'PASS' if res['passed'] else 'FAIL'}] {name}")
    print(f"report: {path}")
    if not report["exit_ok"]:
        bad = [n for n, r in report["suites"].items() if not r["passed"]]
        print(f"expectation '{report['expect']}' not met (failing suites: {bad or 'none'})",
              file=sys.stderr)
        return 1
    return 0


def cmd_presets(_args) -> int:
    print(describe_presets())
    return 0


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sweep(args) -> int:
    import sys as _sys
    if _sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(args.scenario, "rb") as fh:
        base = tomllib.load(fh)
    values = [_parse_value(v) for v in args.values.split(",")]
    out = args.out or f"out_sweep_{base.get('name', 'scenario')}"
    combined = []
    status = 0
    for i, value in enumerate(values):
        cfg = json.loads(json.dumps(base))    # deep copy
        override(cfg, args.param, value)
        cfg["name"] = f"{cfg.get('name', 'scenario')}_{args.param.replace('.', '_')}_{i}"
        try:
            scenario = Scenario.from_dict(cfg)
        except (ValueError, KeyError) as exc:
            print(f"scenario config error at {args.param} = {value}: {exc}", file=sys.stderr)
            return 2
        results = run_suites(scenario, parallel=args.parallel, max_workers=_max_workers())
        report = build_report(scenario, results)
        write_report(report, os.path.join(out, scenario.name), figures=not args.no_figures)
        combined.append({"value": value, "name": scenario.name,
                         "passed": report["passed"], "exit_ok": report["exit_ok"]})
        print(f"[{'PASS' if report['exit_ok'] else 'FAIL'}] {args.param} = {value}")
        if not report["exit_ok"]:
            status = 1
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "sweep.json"), "w") as fh:
        json.dump({"param": args.param, "runs": combined}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="verify", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario's verification suites")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--parallel", action="store_true", help="fan suites out over threads")
    p_run.add_argument("--no-figures", action="store_true")
    p_run.set_defaults(fn=cmd_run)

    p_pre = sub.add_parser("presets", help="list matrix/potential/bc presets")
    p_pre.set_defaults(fn=cmd_presets)

    p_sw = sub.add_parser("sweep", help="rerun a scenario over a parameter sweep")
    p_sw.add_argument("scenario")
    p_sw.add_argument("--param", required=True, help="dotted config path, e.g. bellman.p")
    p_sw.add_argument("--values", required=True, help="comma-separated values")
    p_sw.add_argument("--out", default=None)
    p_sw.add_argument("--parallel", action="store_true")
    p_sw.add_argument("--no-figures", action="store_true")
    p_sw.set_defaults(fn=cmd_sweep)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
