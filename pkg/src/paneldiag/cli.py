"""Command-line front end.

Every command prints a JSON envelope to stdout. Exit codes: 0 success,
2 usage, 3 data validation, 4 estimation, 5 inference.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, diagnostics
from . import montecarlo as mc
from .design import build_event_study, build_interacted, build_saturated, build_static, drop_collinear
from .dgp import catalog, scenario, simulate_panel
from .errors import DataError, InferenceError, PanelDiagError, UsageError
from .fe_solver import fit
from .inference import DOF_CONVENTIONS, attach_vcov
from .panel import PanelDataset, cohort_summary, load_csv, write_csv

BUILDERS = {
    "static": build_static,
    "event": build_event_study,
    "saturated": build_saturated,
    "interacted": build_interacted,
}
SEED_ENV = "PANELDIAG_SEED"
PLOT_HEADER = ["series", "x", "y", "ci_low", "ci_high"]
Z95 = 1.96


def _columns(args) -> dict:
    return {"unit": args.unit, "time": args.time, "outcome": args.outcome, "cohort": args.cohort}


def _fingerprint(d: PanelDataset) -> dict:
    return {
        "rows": d.n_obs,
        "units": d.n_units,
        "periods": d.n_periods,
        "cohorts": cohort_summary(d).to_dict(),
    }


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def _parse_cohort_label(text):
    if text is None:
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def _load(args) -> PanelDataset:
    try:
        return load_csv(args.csv, _columns(args))
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {args.csv}") from exc


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


# -- commands -----------------------------------------------------------------

def cmd_estimate(args) -> tuple[dict, dict | None, list]:
    d = _load(args)
    ref = _parse_cohort_label(args.reference_cohort)
    X = build_interacted(d, ref) if args.spec == "interacted" else BUILDERS[args.spec](d)
    X, dropped = drop_collinear(X)
    res = fit(d, X)
    warnings = []
    try:
        attach_vcov(res, X)
        se = res.bse.tolist()
    except InferenceError as exc:
        warnings.append(f"standard errors unavailable: {exc}")
        se = [None] * len(res.labels)
    payload = {
        "spec": args.spec,
        "coefficients": {
            lab: {"estimate": float(b), "se": s} for lab, b, s in zip(res.labels, res.coefficients, se)
        },
        "n_obs": res.n_obs,
        "k_params": res.k_params,
        "df_resid": res.df_resid,
        "n_clusters": res.n_clusters,
        "dropped": [c.label for c in dropped],
    }
    if args.spec == "interacted":
        payload["reference_cohort"] = X.reference_cohort
        payload["reconstructed"] = {
            f"sat::g={c}::s={s}": {"estimate": est, "se": sd}
            for (c, s), (est, sd) in diagnostics.reconstruct_cohort_effects(d, res).items()
        }
    return payload, _fingerprint(d), warnings


def cmd_diagnose(args) -> tuple[dict, dict | None, list]:
    d = _load(args)
    if args.which == "dynamics":
        rep = diagnostics.test_dynamics(d, mode=args.mode, dof=args.dof)
    else:
        rep = diagnostics.test_cohort_heterogeneity(
            d, reference_cohort=_parse_cohort_label(args.reference_cohort), scope=args.scope, dof=args.dof
        )
    payload = {"test": args.which, "alpha": args.alpha, **rep.to_dict()}
    payload["verdict"] = "reject" if rep.wald.reject(args.alpha) else "fail to reject"
    return payload, _fingerprint(d), []


def cmd_simulate(args) -> tuple[dict, dict | None, list]:
    spec = scenario(args.scenario, seed=_seed(args))
    d, truth = simulate_panel(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    truth_path = out.with_name(out.stem + "_truth.csv")
    write_csv(d, out)
    truth.to_csv(truth_path, index=False, lineterminator="\n")
    payload = {"scenario": spec.to_dict(), "panel_csv": str(out), "truth_csv": str(truth_path)}
    return payload, _fingerprint(d), []


def cmd_mc(args) -> tuple[dict, dict | None, list]:
    report = mc.run_study(
        args.scenario,
        test=args.which,
        reps=args.reps,
        alpha=args.alpha,
        seed=_seed(args),
        jobs=args.jobs,
        mode=args.mode,
        scope=args.scope,
        dof=args.dof,
    )
    payload = report.to_dict()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json() + "\n")
        (out / "pvalues.csv").write_text(report.pvalues_csv())
        payload["files"] = [str(out / "report.json"), str(out / "pvalues.csv")]
    return payload, None, []


def cmd_scenarios(args) -> tuple[dict, dict | None, list]:
    return {"scenarios": catalog()}, None, []


def plot_rows(doc: dict, bins: int = 20) -> list[list]:
    """Long-format plot rows (series, x, y, ci_low, ci_high) from an envelope or report."""
    res = doc.get("results", doc)
    rows = []

    def add(series, x, est, se):
        lo = hi = None
        if se is not None:
            lo, hi = est - Z95 * se, est + Z95 * se
        rows.append([series, x, est, lo, hi])

    if "p_values" in res:
        p = np.array([x for x in res["p_values"] if x is not None], dtype=float)
        counts, edges = np.histogram(p, bins=bins, range=(0.0, 1.0))
        for c, a, b in zip(counts, edges[:-1], edges[1:]):
            se = math.sqrt(c * (1 - c / max(len(p), 1)))
            add("p_value_hist", (a + b) / 2, float(c), se)
        return rows
    if "coefficients" not in res:
        raise UsageError("input is neither an estimate envelope nor a Monte Carlo report")

    for lab, v in res["coefficients"].items():
        kind = lab.split("::", 1)[0]
        if kind == "treat":
            add("static", None, v["estimate"], v["se"])
        elif kind == "es":
            add("common", int(lab.split("s=")[1]), v["estimate"], v["se"])
        elif kind == "sat":
            _, g, s = lab.split("::")
            add(f"cohort={g[2:]}", int(s[2:]), v["estimate"], v["se"])
    for lab, v in res.get("reconstructed", {}).items():
        _, g, s = lab.split("::")
        add(f"cohort={g[2:]}", int(s[2:]), v["estimate"], v["se"])
    return rows


def cmd_plotdata(args) -> tuple[dict, dict | None, list]:
    try:
        doc = json.loads(Path(args.input).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {args.input}: {exc}") from exc
    rows = plot_rows(doc, bins=args.bins)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_HEADER)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    return {"rows": len(rows), "out": args.out, "csv": None if args.out else buf.getvalue()}, None, []


COMMANDS = {
    "estimate": cmd_estimate,
    "diagnose": cmd_diagnose,
    "simulate": cmd_simulate,
    "mc": cmd_mc,
    "scenarios": cmd_scenarios,
    "plotdata": cmd_plotdata,
}


def _add_data_flags(p):
    p.add_argument("--csv", required=True, help="long-format panel CSV")
    p.add_argument("--unit", default="unit")
    p.add_argument("--time", default="time")
    p.add_argument("--outcome", default="outcome")
    p.add_argument("--cohort", default="cohort")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paneldiag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="fit a TWFE / event-study specification")
    _add_data_flags(p)
    p.add_argument("--spec", choices=sorted(BUILDERS), default="static")
    p.add_argument("--reference-cohort", default=None)

    p = sub.add_parser("diagnose", help="run the dynamics or cohort-heterogeneity test")
    _add_data_flags(p)
    p.add_argument("--which", choices=["dynamics", "cohorts"], required=True)
    p.add_argument("--mode", choices=diagnostics.DYNAMICS_MODES, default=diagnostics.Q_AGAINST_TAU)
    p.add_argument("--scope", choices=diagnostics.HETEROGENEITY_SCOPES, default=diagnostics.ALL_PERIODS)
    p.add_argument("--reference-cohort", default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--dof", choices=list(DOF_CONVENTIONS), default=diagnostics.DEFAULT_DOF)

    p = sub.add_parser("simulate", help="write one simulated panel and its truth table")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="panel CSV path; truth goes to <stem>_truth.csv")

    p = sub.add_parser("mc", help="Monte Carlo rejection rates")
    p.add_argument("--scenario", required=True)
    p.add_argument("--which", choices=list(mc.TESTS), default=mc.COHORTS)
    p.add_argument("--mode", choices=diagnostics.DYNAMICS_MODES, default=diagnostics.Q_AGAINST_TAU)
    p.add_argument("--scope", choices=diagnostics.HETEROGENEITY_SCOPES, default=diagnostics.ALL_PERIODS)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dof", choices=list(DOF_CONVENTIONS), default=diagnostics.DEFAULT_DOF)
    p.add_argument("--out", default=None, help="directory for report.json and pvalues.csv")

    sub.add_parser("scenarios", help="dump the scenario catalog")

    p = sub.add_parser("plotdata", help="long-format plot data from an envelope or report JSON")
    p.add_argument("input")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    echo = {k: v for k, v in vars(args).items() if k != "command"}
    envelope = {"command": {"name": args.command, "args": echo}, "version": __version__}
    if args.command in ("simulate", "mc"):
        envelope["seed"] = None
    code = 0
    try:
        if args.command in ("simulate", "mc"):
            envelope["seed"] = _seed(args)
        payload, fingerprint, warnings = COMMANDS[args.command](args)
        envelope["input"] = fingerprint
        envelope["results"] = payload
        if warnings:
            envelope["warnings"] = warnings
    except PanelDiagError as exc:
        code = exc.exit_code
        envelope["error"] = {"type": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stdout.write(json.dumps(envelope, indent=2, default=_json_default, allow_nan=False) + "\n")
    return code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
