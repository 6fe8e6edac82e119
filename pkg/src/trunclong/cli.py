"""Command-line front end.

Subcommands: ``simulate``, ``validate``, ``impute``, ``fit``, ``pah``,
``report``.  Long flags only; every run is deterministic given its flags
and input bytes (seeds are explicit).  Exit status: 0 success, 1 data or
validation error, 2 numerical failure (non-convergence, separation,
singularity).
"""

from __future__ import annotations

import argparse
import json
import sys

from .cohort import (
    Cohort,
    CohortFormatError,
    read_cohort_csv,
    validate,
    write_cohort_csv,
)
from .estimators import (
    REGRESSORS,
    EstimandReport,
    ModelSpec,
    _regressor_varies,
    joint_pah,
    naive_extrapolation_summary,
    pattern_mixture_fit,
    principal_strat_estimate,
    rca_fit,
    terminal_decline_fit,
    unconditional_fit,
)
from .imputation import impute_single
from .numerics import NumericsError
from .simulator import read_sim_config, simulate, write_counterfactuals_csv

EXIT_OK = 0
EXIT_DATA = 1
EXIT_NUMERIC = 2

DEFAULT_FIT_REGRESSORS = ("intercept", "group", "baseline_age", "time", "group:time")


def _floats(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part != ""]


def _load_cohort(args) -> Cohort:
    bounds = tuple(_floats(args.bounds)) if getattr(args, "bounds", None) else None
    if bounds is not None and len(bounds) != 2:
        raise CohortFormatError("--bounds expects lo,hi")
    return read_cohort_csv(args.subjects, args.obs, response_bounds=bounds)


def _auto_regressors(cohort: Cohort, requested: str | None) -> tuple[str, ...]:
    """Requested regressors, or the linear default trimmed to what varies."""
    if requested:
        names = tuple(r for r in requested.split(",") if r)
        unknown = [r for r in names if r not in REGRESSORS]
        if unknown:
            raise CohortFormatError(f"unknown regressors {unknown}; choose from {REGRESSORS}")
        return names
    return tuple(r for r in DEFAULT_FIT_REGRESSORS if _regressor_varies(cohort, r))


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _cmd_simulate(args) -> int:
    config = read_sim_config(args.config)
    cohort, frame = simulate(config)
    prefix = args.out_prefix
    write_cohort_csv(cohort, f"{prefix}_subjects.csv", f"{prefix}_observations.csv")
    written = [f"{prefix}_subjects.csv", f"{prefix}_observations.csv"]
    if frame is not None:
        write_counterfactuals_csv(frame, f"{prefix}_counterfactuals.csv")
        written.append(f"{prefix}_counterfactuals.csv")
    deaths = sum(s.death_observed for s in cohort.subjects)
    print(f"simulated {len(cohort.subjects)} subjects ({deaths} deaths) -> {', '.join(written)}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cohort = _load_cohort(args)
    violations = validate(cohort)
    print(f"{len(violations)} violations")
    for v in violations:
        print(f"  {v}")
    return EXIT_OK if not violations else EXIT_DATA


def _cmd_impute(args) -> int:
    cohort = _load_cohort(args)
    completed, report = impute_single(
        cohort, _floats(args.boundaries), noise=args.noise, seed=args.seed
    )
    prefix = args.out_prefix
    write_cohort_csv(completed, f"{prefix}_subjects.csv", f"{prefix}_observations.csv")
    if args.report:
        _write(args.report, report.to_json())
    skipped = sum(1 for c in report.cells if c.skipped)
    print(
        f"imputed {report.total_imputed} values ({report.total_clamped} clamped, "
        f"{skipped} cells skipped) -> {prefix}_subjects.csv, {prefix}_observations.csv"
    )
    return EXIT_OK


def _fit_one(kind: str, cohort: Cohort, args) -> EstimandReport:
    regressors = _auto_regressors(cohort, args.regressors)
    horizons = tuple(_floats(args.horizons)) if args.horizons else ()
    if kind == "naive_extrapolation":
        if args.horizon is None:
            raise CohortFormatError("--horizon is required for naive_extrapolation")
        return naive_extrapolation_summary(cohort, args.horizon, args.matching_window)
    if kind == "unconditional":
        spec = ModelSpec(fixed_regressors=regressors)
        return unconditional_fit(cohort, spec, horizons, args.ref_age)
    if kind == "pattern_mixture":
        if args.boundaries is None:
            raise CohortFormatError("--boundaries is required for pattern_mixture")
        spec = ModelSpec(fixed_regressors=regressors, random_effects=args.random_effects)
        return pattern_mixture_fit(
            cohort, _floats(args.boundaries), spec, args.horizon, args.ref_age, args.matching_window
        )
    if kind == "principal_strat":
        if args.horizon is None:
            raise CohortFormatError("--horizon is required for principal_strat")
        confounders = tuple(args.confounders.split(",")) if args.confounders else ("baseline_age",)
        return principal_strat_estimate(
            cohort, args.horizon, confounders, args.response_time, args.matching_window
        )
    if kind == "terminal_decline":
        spec = ModelSpec(
            fixed_regressors=regressors, random_effects=args.random_effects, time_scale="from_death"
        )
        eval_times = tuple(_floats(args.eval_times)) if args.eval_times else ()
        return terminal_decline_fit(cohort, spec, eval_times, args.ref_age)
    if kind == "rca":
        spec = ModelSpec(fixed_regressors=regressors, random_effects="none")
        return rca_fit(cohort, spec, horizons, args.ref_age)
    if kind == "joint_pah":
        if args.threshold is None or not args.times:
            raise CohortFormatError("--threshold and --times are required for joint_pah")
        return joint_pah(
            cohort, args.threshold, tuple(_floats(args.times)), not args.no_group, args.matching_window
        )
    raise CohortFormatError(f"unknown model kind {kind!r}")


def _cmd_fit(args) -> int:
    cohort = _load_cohort(args)
    kinds = [
        "naive_extrapolation",
        "unconditional",
        "pattern_mixture",
        "terminal_decline",
        "rca",
        "joint_pah",
        "principal_strat",
    ] if args.model == "all" else [args.model]

    reports = []
    for kind in kinds:
        try:
            reports.append(_fit_one(kind, cohort, args))
        except CohortFormatError as exc:
            if args.model == "all":
                print(f"skipped {kind}: {exc}", file=sys.stderr)
                continue
            raise
        except ValueError as exc:
            if args.model == "all":
                print(f"skipped {kind}: {exc}", file=sys.stderr)
                continue
            raise
    if not reports:
        raise CohortFormatError("no model could be fit with the provided options")

    if len(reports) == 1:
        _write(args.out, reports[0].to_json())
    else:
        _write(args.out, json.dumps([r.to_dict() for r in reports], indent=2))
    if args.trajectories:
        lines = ["group,stratum,time,value"]
        for rep in reports:
            lines += rep.trajectories_csv().splitlines()[1:]
        _write(args.trajectories, "\n".join(lines) + "\n")
    fitted = ", ".join(r.model_kind for r in reports)
    print(f"fit {fitted} on {len(cohort.subjects)} subjects -> {args.out}")
    def _notes(rep) -> list[str]:
        collected = list(rep.notes)
        for sub in rep.strata.values():
            collected += _notes(sub)
        return collected

    unconverged = [
        rep.model_kind for rep in reports if any("did not converge" in n for n in _notes(rep))
    ]
    if unconverged:
        print(f"warning: non-converged fit in {', '.join(unconverged)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_pah(args) -> int:
    cohort = _load_cohort(args)
    report = joint_pah(
        cohort, args.threshold, tuple(_floats(args.times)), not args.no_group, args.matching_window
    )
    _write(args.out, report.to_json())
    overall = [e for e in report.estimates if e.name.startswith("pah_at_") and "group" not in e.name]
    span = f"{overall[0].value:.3f} -> {overall[-1].value:.3f}" if overall else "n/a"
    print(f"alive-and-healthy proportion {span} -> {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    reports: list[EstimandReport] = []
    for path in args.inputs:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if isinstance(payload, list):
            reports += [EstimandReport.from_dict(item) for item in payload]
        else:
            reports.append(EstimandReport.from_dict(payload))

    fingerprints = {r.fingerprint for r in reports if r.fingerprint}
    if len(fingerprints) > 1:
        print("warning: reports come from different cohorts (fingerprints differ)", file=sys.stderr)

    rows = []
    for rep in reports:
        stack = [("", rep)]
        while stack:
            stratum, node = stack.pop(0)
            for est in node.estimates:
                rows.append(
                    {
                        "model_kind": rep.model_kind,
                        "stratum": stratum,
                        "name": est.name,
                        "value": est.value,
                        "units": est.units,
                        "conditioning": est.conditioning,
                        "se": node.standard_errors.get(est.name),
                    }
                )
            stack += [(label, sub) for label, sub in node.strata.items()]

    _write(f"{args.out}.json", json.dumps({"estimates": rows}, indent=2))
    lines = ["model_kind,stratum,name,value,units,se,conditioning"]
    for r in rows:
        se = "" if r["se"] is None else repr(r["se"])
        cond = '"' + r["conditioning"].replace('"', '""') + '"'
        lines.append(
            f"{r['model_kind']},{r['stratum']},{r['name']},{r['value']!r},{r['units']},{se},{cond}"
        )
    _write(f"{args.out}.csv", "\n".join(lines) + "\n")
    print(f"combined {len(reports)} report(s), {len(rows)} estimates -> {args.out}.json, {args.out}.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trunclong",
        description="Analyze longitudinal outcomes truncated by death.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_simulate)

    def cohort_args(p):
        p.add_argument("--subjects", required=True)
        p.add_argument("--obs", required=True)
        p.add_argument("--bounds", help="response bounds lo,hi")

    p = sub.add_parser("validate", help="check cohort invariants")
    cohort_args(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("impute", help="single imputation of nonresponse")
    cohort_args(p)
    p.add_argument("--boundaries", required=True, help="death-stratum boundaries, comma separated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", action="store_true", help="add a conditional-normal draw")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--report", help="write the per-cell completion report JSON here")
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("fit", help="fit one estimand engine (or all feasible ones)")
    cohort_args(p)
    p.add_argument("--model", required=True,
                   choices=["naive_extrapolation", "unconditional", "pattern_mixture",
                            "principal_strat", "terminal_decline", "rca", "joint_pah", "all"])
    p.add_argument("--out", required=True)
    p.add_argument("--trajectories", help="also write fitted trajectories CSV here")
    p.add_argument("--regressors", help="comma separated; default: linear terms that vary")
    p.add_argument("--random-effects", dest="random_effects",
                   choices=["intercept_slope", "none"], default="intercept_slope")
    p.add_argument("--boundaries", help="death-stratum boundaries for pattern_mixture")
    p.add_argument("--horizon", type=float, help="target time for naive/pattern/principal summaries")
    p.add_argument("--horizons", help="comma separated fitted-mean times for unconditional/rca")
    p.add_argument("--eval-times", dest="eval_times", help="years-from-death times for terminal_decline")
    p.add_argument("--response-time", dest="response_time", type=float)
    p.add_argument("--matching-window", dest="matching_window", type=float, default=0.0)
    p.add_argument("--confounders", help="comma separated covariates for principal_strat")
    p.add_argument("--ref-age", dest="ref_age", type=float, default=70.0)
    p.add_argument("--threshold", type=float, help="healthy threshold for joint_pah")
    p.add_argument("--times", help="comma separated times for joint_pah")
    p.add_argument("--no-group", dest="no_group", action="store_true")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("pah", help="alive-and-healthy curve")
    cohort_args(p)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--times", required=True, help="comma separated")
    p.add_argument("--matching-window", dest="matching_window", type=float, default=0.0)
    p.add_argument("--no-group", dest="no_group", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pah)

    p = sub.add_parser("report", help="side-by-side comparison of report files")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output prefix (.csv and .json are written)")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CohortFormatError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
