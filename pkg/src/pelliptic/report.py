"""Report persistence: schema-validated report.json, delimited series under
series/, and matplotlib figures under figures/ rendered alongside."""

from __future__ import annotations

import csv
import json
import math
import os

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "seed", "expect", "suites", "passed", "exit_ok"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "expect": {"enum": ["pass", "fail"]},
        "passed": {"type": "boolean"},
        "exit_ok": {"type": "boolean"},
        "suites": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["passed"],
                "properties": {"passed": {"type": "boolean"}},
            },
        },
    },
}


def _sanitize(obj):
    """JSON-ready copy: tuples to lists, numpy scalars to python, non-finite
    floats to None."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def build_report(scenario, suite_results: dict) -> dict:
    passed = all(r["passed"] for r in suite_results.values())
    report = {
        "name": scenario.name,
        "seed": scenario.seed,
        "expect": scenario.expect,
        "passed": passed,
        "exit_ok": passed == (scenario.expect == "pass"),
        "suites": _sanitize(suite_results),
    }
    return report


def validate_report(report: dict):
    import jsonschema

    jsonschema.validate(report, REPORT_SCHEMA)


def write_report(report: dict, out_dir: str, figures: bool = True) -> str:
    validate_report(report)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_series(report, out_dir)
    if figures:
        render_figures(report, os.path.join(out_dir, "figures"))
    return path


def _write_series(report: dict, out_dir: str):
    sdir = os.path.join(out_dir, "series")
    for suite, data in report["suites"].items():
        series = data.get("series") or {}
        for name, rows in series.items():
            if not rows:
                continue
            os.makedirs(sdir, exist_ok=True)
            cols = list(rows[0])
            with open(os.path.join(sdir, f"{suite}_{name}.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for row in rows:
                    w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                                for c in cols])


def render_figures(report: dict, fig_dir: str):
    """One PNG per suite with plottable series."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    suites = report["suites"]
    made = False

    def savefig(fig, name):
        nonlocal made
        os.makedirs(fig_dir, exist_ok=True)
        fig.savefig(os.path.join(fig_dir, name), dpi=120, bbox_inches="tight")
        plt.close(fig)
        made = True

    ell = suites.get("ellipticity", {})
    curve = (ell.get("series") or {}).get("delta_p_curve")
    if curve:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ps = [r["p"] for r in curve]
        ds = [r["delta_p"] for r in curve]
        ax.semilogx(ps, ds, "o-", ms=3)
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_xlabel("p")
        ax.set_ylabel(r"$\Delta_p(A)$")
        ax.set_title("p-ellipticity curve")
        savefig(fig, "ellipticity_delta_p.png")

    sub = suites.get("subcritical", {})
    curve = (sub.get("series") or {}).get("alpha_curve")
    if curve:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        bs = [r["beta"] for r in curve if r["alpha"] is not None]
        als = [r["alpha"] for r in curve if r["alpha"] is not None]
        ax.plot(bs, als, "s-", ms=4)
        ax.set_xlabel(r"$\beta$")
        ax.set_ylabel(r"$\alpha(\beta)$")
        ax.set_title("subcritical constant curve")
        savefig(fig, "subcritical_alpha_curve.png")

    sem = suites.get("semigroup", {})
    traj = (sem.get("series") or {}).get("trajectory")
    if traj:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ts = [r["t"] for r in traj]
        for key in traj[0]:
            if key.startswith("norm_"):
                ax.loglog([t for t in ts if t > 0],
                          [r[key] for r, t in zip(traj, ts) if t > 0],
                          "o-", ms=3, label=key.replace("norm_", "r = "))
        ax.set_xlabel("t")
        ax.set_ylabel(r"$\|T_t f\|_r$")
        ax.legend(fontsize=8)
        ax.set_title("semigroup norms")
        savefig(fig, "semigroup_trajectory.png")

    bil = suites.get("bilinear", {})
    flow = (bil.get("series") or {}).get("flow")
    if flow:
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
        ts = [r["t"] for r in flow]
        axes[0].semilogx(ts, [r["E"] for r in flow], "o-", ms=3)
        axes[0].set_xlabel("t")
        axes[0].set_ylabel(r"$\mathcal{E}(t)$")
        axes[0].set_title("heat-flow functional")
        for key in ("I1", "I2", "I3"):
            axes[1].semilogx(ts, [r[key] for r in flow], "o-", ms=3, label=key)
        axes[1].semilogx(ts, [-r["dE_dt"] for r in flow], "k--", lw=1, label="-dE/dt")
        axes[1].set_xlabel("t")
        axes[1].legend(fontsize=8)
        axes[1].set_title("derivative decomposition")
        savefig(fig, "bilinear_flow.png")

    return made
