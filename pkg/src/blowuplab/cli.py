"""Command-line entry point: ``blowuplab <command> [--config FILE] [flags]``.

Exit codes: 0 success, 2 invalid input or violated contract, 3 numerical
failure (an unstable run).
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunManifest, fmt, parse_config, render
from .exponents import (NoStraussExponent, Variant, fujita, gamma, lifespan_catalog,
                        lifespan_exponent, strauss)
from .functionals import (TRACE_COLUMNS, FunctionalTrace, chain_constants, check_identity_11,
                          check_lower_bounds)
from .harness import (FIT_COLUMNS, SWEEP_COLUMNS, SweepAborted, SweepResult, SweepRow,
                      compare_to_theory, fit_powerlaw, predict, run_sweep)
from .iteration import IterationSpec, bound_constants, iterate
from .multiplier import lemma1_exponent, lemma1_scan
from .solver import BlowupStatus, run

logger = logging.getLogger("blowuplab")

EXIT_OK, EXIT_CONTRACT, EXIT_NUMERICAL = 0, 2, 3

UNITS = {
    "t": "time", "F0": "int u dx", "F0_rate": "int u_t dx", "F1": "int u psi_1 dx",
    "Ip": "int |u|^p dx", "m": "dimensionless", "umax": "max |u|",
    "eps": "dimensionless amplitude", "T_est": "time", "T_lo": "time", "T_hi": "time",
    "status": "label", "j": "index", "a_j": "exponent", "b_j": "exponent", "logD_j": "log",
    "envelope_logD": "log", "ratio": "dimensionless", "slope_window": "dimensionless",
    "lhs": "functional value", "rhs": "functional value", "slack": "lhs - rhs",
    "slope": "dimensionless", "intercept": "log time", "r_squared": "dimensionless",
    "theory_exponent": "dimensionless", "relative_deviation": "dimensionless",
}


class NumericalFailure(RuntimeError):
    pass


def emit_plotdata(columns, rows, path, manifest: RunManifest | None = None,
                  theory: str | None = None) -> Path:
    """Write ``rows`` as CSV with 12 significant digits plus a ``.meta`` sidecar."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([fmt(float(v)) if isinstance(v, (float, np.floating)) else fmt(v)
                                 for v in row])
        meta = ["# columns"]
        meta += [f"{c}: {UNITS.get(c, 'unspecified')}" for c in columns]
        meta.append("# theory")
        meta.append(theory or "none")
        meta.append("# manifest")
        meta.append(render(manifest) if manifest is not None else "none")
        path.with_name(path.name + ".meta").write_text("\n".join(meta) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None
    return path


def _out(manifest: RunManifest, name: str) -> Path:
    return Path(manifest.output_dir) / name


# ------------------------------------------------------------------ commands

def cmd_exponents(manifest: RunManifest) -> int:
    n, p = manifest.get("problem", "n"), manifest.get("problem", "p")
    print(f"gamma(p={fmt(p)}, n={n}) = {fmt(gamma(p, n))}")
    print(f"p_F({n}) = {fmt(fujita(n))}")
    try:
        print(f"p_S({n}) = {fmt(strauss(n))}")
    except NoStraussExponent as exc:
        print(f"p_S({n}): {exc}")
    for variant in Variant:
        try:
            print(f"lifespan exponent [{variant.value}] = {fmt(lifespan_exponent(n, p, variant))}")
        except ValueError as exc:
            print(f"lifespan exponent [{variant.value}]: not applicable ({exc})")
    return EXIT_OK


def cmd_catalog(manifest: RunManifest, nonzero: bool) -> int:
    v = manifest.values["problem"]
    pred = lifespan_catalog(v["n"], v["p"], v["beta"], v["mu"], nonzero_integral=nonzero)
    print(f"formula      {pred.formula_id}")
    print(f"form         {pred.form.value}")
    print(f"exponent     {fmt(pred.exponent)}")
    print(f"needs int!=0 {pred.requires_nonzero_integral}")
    if pred.delta_slack:
        print("note         exponent holds up to an arbitrary delta > 0")
    return EXIT_OK


def cmd_simulate(manifest: RunManifest) -> int:
    config, grid = manifest.problem, manifest.grid
    trace, report = run(config, grid, stride=manifest.get("grid", "stride"),
                        kappa=manifest.get("grid", "kappa"))
    emit_plotdata(TRACE_COLUMNS, trace.rows(), _out(manifest, "trace.csv"), manifest)
    print(f"status {report.status.value}")
    if report.status is BlowupStatus.BLEW_UP:
        print(f"T_est {fmt(report.T_est)}  bracket [{fmt(report.T_lo)}, {fmt(report.T_hi)}]"
              + ("  (fallback estimate)" if report.fallback else ""))
    if report.status is BlowupStatus.UNSTABLE:
        raise NumericalFailure(f"run went unstable; refine the grid (dr={grid.dr}, cfl={grid.cfl})")
    return EXIT_OK


def cmd_verify_lemma(manifest: RunManifest) -> int:
    n, p = manifest.get("problem", "n"), manifest.get("problem", "p")
    R = manifest.get("problem", "R")
    lem = manifest.values["lemma"]
    rows = lemma1_scan(n, p, R, lem["t_min"], lem["t_max"], lem["points"])
    expo = lemma1_exponent(n, p)
    ts = np.array([r[0] for r in rows])
    ratio = np.array([r[1] for r in rows])
    slope = float(np.polyfit(np.log(ts), np.log(ratio), 1)[0]) if ts.size > 1 and ts[0] > 0 else math.nan
    theory = f"ratio bounded: growth slope of the raw integral <= {fmt(expo)}"
    emit_plotdata(("t", "ratio", "slope_window"), rows, _out(manifest, "lemma1.csv"), manifest, theory)
    ok = slope <= 0.05
    print(f"predicted exponent {fmt(expo)}; measured slope of ratio {fmt(slope)}; "
          f"{'PASS' if ok else 'FAIL'} (tolerance 0.05)")
    return EXIT_OK


def cmd_verify_bounds(manifest: RunManifest) -> int:
    config, grid = manifest.problem, manifest.grid
    trace, report = run(config, grid, stride=manifest.get("grid", "stride"),
                        kappa=manifest.get("grid", "kappa"))
    if report.status is BlowupStatus.UNSTABLE:
        raise NumericalFailure("run went unstable; refine the grid")
    window = _smooth_window(trace)
    emit_plotdata(TRACE_COLUMNS, window.rows(), _out(manifest, "trace.csv"), manifest)
    t_id, res, worst = check_identity_11(window)
    emit_plotdata(("t", "residual"), zip(t_id, res), _out(manifest, "identity.csv"), manifest)
    print(f"identity residual max {fmt(worst)}")
    for rep in check_lower_bounds(window, config):
        emit_plotdata(("t", "lhs", "rhs", "slack"), rep.rows(),
                      _out(manifest, f"bound_{rep.inequality_id}.csv"), manifest)
        verdict = {True: "PASS", False: "FAIL", None: "n/a"}[rep.passed]
        print(f"{rep.inequality_id:5s} {verdict}  min margin {fmt(rep.min_margin)}")
        for name, (value, how) in rep.constants_used.items():
            logger.info("  %s = %s  (%s)", name, fmt(value), how)
        if rep.warning:
            print(f"      warning: {rep.warning}")
    return EXIT_OK


def _smooth_window(trace: FunctionalTrace, cap: float = 1e2) -> FunctionalTrace:
    """Trace rows before max|u| first reaches ``cap``."""
    keep = np.nonzero(trace.umax >= cap)[0]
    stop = keep[0] if keep.size else len(trace)
    rows = trace.rows()[:stop]
    return FunctionalTrace.from_rows(rows, config=trace.config, grid=trace.grid)


def cmd_iterate(manifest: RunManifest) -> int:
    v, it = manifest.values["problem"], manifest.values["iteration"]
    n, p = v["n"], v["p"]
    variant = Variant(it["variant"]) if it["variant"] else Variant.GENERAL
    consts = {k: it[k] for k in ("C3", "C4", "C11")}
    if any(val is None for val in consts.values()):
        derived = chain_constants(manifest.problem)
        for k in consts:
            if consts[k] is None:
                consts[k] = derived[k][0]
                logger.info("%s = %s from %s", k, fmt(consts[k]), derived[k][1])
    bounds = bound_constants(n, p, consts["C3"], consts["C4"], consts["C11"], variant)
    spec = IterationSpec(variant, n, p, v["eps"], consts["C3"], consts["C4"], consts["C11"])
    seq = iterate(spec, it["j_max"])
    rows = zip(seq.j, seq.a, seq.b, seq.logD, seq.envelope_logD)
    theory = (f"T <= {fmt(bounds.lifespan_constant)} * eps^(-{fmt(bounds.lifespan_exponent)})"
              + (" (constant assembled by analogy)" if bounds.by_analogy else ""))
    emit_plotdata(("j", "a_j", "b_j", "logD_j", "envelope_logD"), rows,
                  _out(manifest, "iterate.csv"), manifest, theory)
    line = f"S_p(inf) = {fmt(bounds.Sp_inf)}, C6 = {fmt(bounds.C6)}, C7 = {fmt(bounds.C7)}"
    if variant is not Variant.GENERAL:
        line += (f", C12 = {fmt(bounds.C12)}, C13 = {fmt(bounds.C13)}, "
                 f"lifespan constant = {fmt(bounds.lifespan_constant)}")
        if bounds.by_analogy:
            line += " (by analogy)"
    print(line)
    return EXIT_OK


def cmd_sweep(manifest: RunManifest) -> int:
    plan = manifest.sweep_plan
    try:
        result = run_sweep(plan)
    except SweepAborted as exc:
        raise NumericalFailure(str(exc)) from None
    k = plan.grid_policy.exponent
    theory = f"log T = const - {fmt(k)} log eps"
    emit_plotdata(SWEEP_COLUMNS, [r.as_tuple() for r in result.rows], _out(manifest, "sweep.csv"),
                  manifest, theory)
    for r in result.rows:
        print(f"eps {fmt(r.eps):>8s}  T_est {fmt(r.T_est)}  [{fmt(r.T_lo)}, {fmt(r.T_hi)}]  "
              f"{r.status.value}")
    return _fit_and_report(result, plan.prediction, manifest, k)


def _fit_and_report(result: SweepResult, prediction, manifest: RunManifest, k: float) -> int:
    if len(result.blown()) < 4:
        print(f"only {len(result.blown())} runs blew up; no fit")
        emit_plotdata(FIT_COLUMNS, [], _out(manifest, "fit.csv"), manifest)
        return EXIT_OK
    fit = fit_powerlaw(result, k)
    emit_plotdata(FIT_COLUMNS, [fit.as_tuple()], _out(manifest, "fit.csv"), manifest,
                  f"slope {fmt(-k)}")
    if prediction is not None and prediction.exponent == k:
        v = manifest.values["problem"]
        cmp = compare_to_theory(fit, prediction, v["n"], v["p"])
        print(cmp.text)
        _out(manifest, "comparison.txt").write_text(cmp.text + "\n")
    else:
        print(f"slope {fmt(fit.slope)} vs theory {fmt(-k)}; deviation {fmt(fit.relative_deviation)}")
    return EXIT_OK


def read_sweep_csv(path) -> SweepResult:
    result = SweepResult()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SWEEP_COLUMNS:
            raise ConfigError(f"{path}: expected header {','.join(SWEEP_COLUMNS)}")
        for row in reader:
            eps, T, lo, hi, status = row
            result.rows.append(SweepRow(float(eps), float(T), float(lo), float(hi),
                                        BlowupStatus(status)))
    return result


def cmd_fit(manifest: RunManifest, input_path: str, exponent: float | None) -> int:
    result = read_sweep_csv(input_path)
    prediction = None
    if exponent is None:
        theorem = manifest.get("sweep", "theorem")
        if theorem is not None:
            exponent = manifest.grid_policy.exponent
        elif manifest.values["problem"]["mu"] is not None and manifest.values["problem"]["beta"] is not None:
            prediction = predict(manifest.problem)
            exponent = prediction.exponent
        if exponent is None or not exponent > 0:
            raise ConfigError("fit needs a theory exponent: pass --exponent, --theorem or mu/beta")
    return _fit_and_report(result, prediction, manifest, exponent)


# --------------------------------------------------------------------- parser

_PROBLEM_FLAGS = (("n", int), ("p", float), ("mu", float), ("beta", float), ("eps", float),
                  ("R", float), ("f_amplitude", float), ("f_support", float), ("g_amplitude", float),
                  ("g_support", float))
_GRID_FLAGS = (("dr", float), ("cfl", float), ("t_max", float), ("stride", int))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blowuplab",
                                     description="Blow-up experiments for damped semilinear waves.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and constants")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid=False):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--output-dir", dest="output_dir", help="directory for emitted files")
        for name, typ in _PROBLEM_FLAGS:
            p.add_argument(f"--{name.replace('_', '-')}", dest=f"problem.{name}", type=typ)
        if grid:
            for name, typ in _GRID_FLAGS:
                p.add_argument(f"--{name.replace('_', '-')}", dest=f"grid.{name}", type=typ)
        return p

    common(sub.add_parser("exponents", help="critical exponents and lifespan exponents"))
    cat = common(sub.add_parser("catalog", help="look up the known lifespan estimate"))
    cat.add_argument("--nonzero-integral", action="store_true",
                     help="the relevant data integral is nonzero")
    common(sub.add_parser("simulate", help="run the solver and write the functional trace"), grid=True)
    lem = common(sub.add_parser("verify-lemma", help="scan the test-function integral bound"))
    lem.add_argument("--t-min", dest="lemma.t_min", type=float)
    lem.add_argument("--t-end", dest="lemma.t_max", type=float)
    lem.add_argument("--points", dest="lemma.points", type=int)
    common(sub.add_parser("verify-bounds", help="check the lower-bound inequalities on a run"),
           grid=True)
    it = common(sub.add_parser("iterate", help="iteration sequences and explicit constants"))
    it.add_argument("--variant", dest="iteration.variant", choices=[v.value for v in Variant])
    it.add_argument("--j-max", dest="iteration.j_max", type=int)
    for c in ("C3", "C4", "C11"):
        it.add_argument(f"--{c}", dest=f"iteration.{c}", type=float)
    sw = common(sub.add_parser("sweep", help="eps sweep with power-law fit"), grid=False)
    sw.add_argument("--cfl", dest="grid.cfl", type=float)
    sw.add_argument("--theorem", dest="sweep.theorem", type=int, choices=(1, 2, 3))
    sw.add_argument("--eps-values", dest="sweep.eps_values",
                    type=lambda s: [float(x) for x in s.split(",") if x.strip()])
    sw.add_argument("--C-pred", dest="sweep.C_pred", type=float)
    fit = common(sub.add_parser("fit", help="fit a sweep CSV"))
    fit.add_argument("input", help="sweep CSV file")
    fit.add_argument("--theorem", dest="sweep.theorem", type=int, choices=(1, 2, 3))
    fit.add_argument("--exponent", type=float, help="positive theory lifespan exponent")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    ns = vars(args)
    overrides = {k: v for k, v in ns.items() if "." in k and v is not None}
    if args.output_dir is not None:
        overrides["output_dir"] = args.output_dir
    try:
        text = Path(args.config).read_text() if args.config else ""
        manifest = parse_config(text, command=args.command, overrides=overrides,
                                config_path=args.config)
        return dispatch(args.command, manifest, args)
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


def dispatch(command: str, manifest: RunManifest, args: argparse.Namespace | None = None) -> int:
    if command == "exponents":
        return cmd_exponents(manifest)
    if command == "catalog":
        return cmd_catalog(manifest, bool(getattr(args, "nonzero_integral", False)))
    if command == "simulate":
        return cmd_simulate(manifest)
    if command == "verify-lemma":
        return cmd_verify_lemma(manifest)
    if command == "verify-bounds":
        return cmd_verify_bounds(manifest)
    if command == "iterate":
        return cmd_iterate(manifest)
    if command == "sweep":
        return cmd_sweep(manifest)
    if command == "fit":
        return cmd_fit(manifest, args.input, getattr(args, "exponent", None))
    raise ConfigError(f"unknown command {command!r}; choose from {', '.join(cfgmod.COMMANDS)}")


if __name__ == "__main__":
    sys.exit(main())
