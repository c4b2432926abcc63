"""Scenario-driven command line: verify, simulate, audit, sweep, compare.

Exit codes: 0 success / all checks pass, 2 hypotheses unverified, 3 blow-up
detected, 4 audit failure, 1 anything else.  All numeric output uses 17
significant digits so files round-trip to the exact binary values.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .diagnostics import (audit_contraction, audit_cp_inequality,
                          audit_global_bound, audit_mass, audit_positivity,
                          convexity_gap_constant, growth_envelope_report,
                          growth_precheck, mass_ledger_report,
                          positivity_report, truncation_sweep, AuditReport)
from .errors import AssumptionError, CoagFragError, ConfigError
from .kinetics import classify_assumptions
from .reference import integrate
from .scenario import Scenario, load_scenario
from .solver import solve
from .state import Trajectory
from .weights import TildeWeight, first_moment, number_moment, weighted_norm

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_UNVERIFIED = 2
EXIT_BLOWUP = 3
EXIT_AUDIT_FAIL = 4

CSV_BASE = ("t", "M0", "M1", "norm_w", "norm_wtilde", "leakage",
            "min_component", "picard_iters")

_TRAJ_AUDITS = ("mass-ledger", "positivity-floor", "growth-envelope")


def _g17(x) -> str:
    return "%.17g" % float(x)


def _norm_vectors(sc: Scenario):
    wv = sc.weight.values(sc.N)
    wtv = TildeWeight(sc.weight, sc.alpha, sc.model.rates).values(sc.N)
    return wv, wtv


def _classify(sc: Scenario):
    J = min(2 * sc.N, 4096)
    return classify_assumptions(sc.model, sc.kernel, sc.weight, sc.alpha,
                                J=J, horizon=sc.T)


def _run_engine(sc: Scenario, engine: str, report, grid):
    if engine == "picard":
        return solve(sc.model, sc.kernel, sc.weight, sc.alpha,
                     sc.initial_state(), sc.solver_cfg, report=report,
                     mandatory_times=grid)
    return integrate(sc.model, sc.kernel, sc.initial_state(), sc.T, sc.mode,
                     sc.oracle_cfg, output_times=grid)


def _table_rows(traj: Trajectory, wv, wtv, stride: int, times=None):
    """Rows at t = 0 and the requested times (whole trajectory if None)."""
    header = list(CSV_BASE)
    comp = list(range(0, traj.N, stride)) if stride > 0 else []
    header += [f"u_{i + 1}" for i in comp]
    if times is None:
        picks = list(range(len(traj.times)))
    else:
        picks = []
        for t in [0.0] + [float(s) for s in times]:
            best = min(range(len(traj.times)),
                       key=lambda i: abs(traj.times[i] - t))
            if abs(traj.times[best] - t) <= 1e-9 * max(1.0, abs(t)) \
                    and best not in picks:
                picks.append(best)
    rows = [header]
    for i in picks:
        t, u = traj.times[i], traj.states[i]
        iters = traj.picard_iters[i]
        row = [_g17(t), _g17(number_moment(u)), _g17(first_moment(u)),
               _g17(weighted_norm(wv, u)), _g17(weighted_norm(wtv, u)),
               _g17(traj.leakage[i]), _g17(u.min()),
               "" if iters is None else str(int(iters))]
        row += [_g17(u[i]) for i in comp]
        rows.append(row)
    return rows


def _summary(traj: Trajectory, extra: dict | None = None) -> dict:
    info = {
        "engine": traj.meta.get("engine"),
        "final_time": traj.times[-1],
        "rows": len(traj.times),
        "windows": traj.n_windows,
        "accepted_steps": traj.accepted_steps,
        "rejected_steps": traj.rejected_steps,
        "blowup": None if traj.blowup is None else {
            "time": traj.blowup.time, "reason": traj.blowup.reason,
            "norm": traj.blowup.norm},
        "meta": dict(traj.meta),
    }
    if extra:
        info.update(extra)
    return info


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _write_output(rows, summary: dict, path: str | None, fmt: str) -> None:
    """One trajectory table plus its trailing summary document."""
    if fmt == "json":
        doc = {"columns": rows[0], "rows": rows[1:], "summary": summary}
        text = _dump_json(doc) + "\n"
        if path is None:
            sys.stdout.write(text)
        else:
            with open(path, "w") as fh:
                fh.write(text)
        return
    if path is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerows(rows)
        sys.stdout.write(_dump_json(summary) + "\n")
        return
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    with open(path + ".summary.json", "w") as fh:
        fh.write(_dump_json(summary) + "\n")


def _engine_path(path: str, engine: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}.{engine}{ext or '.csv'}"


def _sup_discrepancy(t_a: Trajectory, t_b: Trajectory, wv, times) -> float:
    worst = 0.0
    for t in times:
        ua = t_a.state_at(t)
        ub = t_b.state_at(t)
        worst = max(worst, weighted_norm(wv, ua - ub))
    return worst


def _read_table(path: str) -> dict:
    """Load a trajectory table back into float columns."""
    if path.endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
        header, data = doc["columns"], doc["rows"]
    else:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ConfigError(f"{path}: empty trajectory file")
        header, data = rows[0], rows[1:]
    for col in CSV_BASE:
        if col not in header:
            raise ConfigError(f"{path}: missing column {col!r}")
    table = {"path": path}
    for col in CSV_BASE:
        i = header.index(col)
        if col == "picard_iters":
            table[col] = [row[i] for row in data]
        else:
            table[col] = np.array([float(row[i]) for row in data])
    return table


# --------------------------------------------------------------------------
# subcommands


def cmd_verify(args) -> int:
    sc = load_scenario(args.config)
    report = _classify(sc)
    doc = report.to_dict()
    doc["weight"] = sc.weight.label()
    print(_dump_json(doc))
    return EXIT_OK if report.verified else EXIT_UNVERIFIED


def _prepare_run(args, sc: Scenario):
    """Shared verification gate for commands that integrate."""
    report = _classify(sc)
    if not report.verified and not args.force:
        sys.stderr.write("hypotheses unverified: "
                         + "; ".join(report.reasons) + "\n")
        sys.stderr.write("use --force to run anyway\n")
        return report, EXIT_UNVERIFIED
    if args.force:
        sc.solver_cfg.allow_unverified = True
    return report, None


def cmd_simulate(args) -> int:
    sc = load_scenario(args.config)
    if args.seed is not None:
        sc.seed = args.seed
    engine = args.engine or sc.engine
    out_path = args.out or sc.output_path
    report, bad = _prepare_run(args, sc)
    if bad is not None:
        return bad
    grid = sc.output_times()
    wv, wtv = _norm_vectors(sc)

    if engine == "both":
        if out_path is None:
            raise ConfigError("engine=both needs an output path (--out)")
        traj_p = _run_engine(sc, "picard", report, grid)
        traj_o = _run_engine(sc, "oracle", report, grid)
        times = [0.0] + [t for t in grid if t <= traj_p.times[-1]
                         and t <= traj_o.times[-1]]
        disc = _sup_discrepancy(traj_p, traj_o, wv, times)
        path_p = _engine_path(out_path, "picard")
        path_o = _engine_path(out_path, "oracle")
        _write_output(_table_rows(traj_p, wv, wtv, sc.stride, grid),
                      _summary(traj_p), path_p, sc.output_format)
        _write_output(_table_rows(traj_o, wv, wtv, sc.stride, grid),
                      _summary(traj_o), path_o, sc.output_format)
        diff = {"discrepancy_norm_w": disc, "times_compared": len(times),
                "picard": path_p, "oracle": path_o,
                "blowup": {"picard": traj_p.blowup is not None,
                           "oracle": traj_o.blowup is not None}}
        print(_dump_json(diff))
        if traj_p.blowup is not None or traj_o.blowup is not None:
            return EXIT_BLOWUP
        return EXIT_OK

    traj = _run_engine(sc, engine, report, grid)
    _write_output(_table_rows(traj, wv, wtv, sc.stride, grid), _summary(traj),
                  out_path, sc.output_format)
    if out_path is not None:
        logger.info("trajectory written to %s", out_path)
    return EXIT_BLOWUP if traj.blowup is not None else EXIT_OK


def _audit_from_table(entry: dict, sc: Scenario, table: dict) -> AuditReport:
    kind = entry["kind"]
    if kind == "mass-ledger":
        conserving = sc.model.is_mass_conserving(min(sc.N, 512))
        return mass_ledger_report(table["t"], table["M1"], table["leakage"],
                                  conserving, float(entry.get("tol", 1e-8)))
    if kind == "positivity-floor":
        return positivity_report(table["min_component"],
                                 float(table["norm_w"].max()),
                                 float(entry.get("tol_factor", 1e-10)))
    if kind == "growth-envelope":
        mu = float(entry.get("mu", 1.0))
        reason = growth_precheck(sc.model, sc.kernel, sc.weight, sc.N, mu)
        if reason is not None:
            return AuditReport("growth envelope", "growth-envelope", 0.0, 0.0,
                               "inapplicable", {"reason": reason})
        cp = convexity_gap_constant(sc.weight.p)
        gsup = sc.kernel.profile.sup(float(table["t"].max()))
        return growth_envelope_report(
            table["t"], table["norm_w"], float(table["M1"][0]), cp, mu, gsup,
            float(entry.get("tol", 1e-8)))
    raise ConfigError(f"audit {kind!r} cannot run from a trajectory file")


def _audit_from_traj(entry: dict, sc: Scenario, traj: Trajectory) -> AuditReport:
    kind = entry["kind"]
    if kind == "mass-ledger":
        return audit_mass(traj, sc.model, float(entry.get("tol", 1e-8)))
    if kind == "positivity-floor":
        return audit_positivity(traj, sc.weight,
                                float(entry.get("tol_factor", 1e-10)))
    if kind == "growth-envelope":
        return audit_global_bound(traj, sc.model, sc.kernel, sc.weight,
                                  float(entry.get("mu", 1.0)),
                                  float(entry.get("tol", 1e-8)))
    raise ConfigError(f"audit {kind!r} is not trajectory-based")


def _audit_machinery(entry: dict, sc: Scenario, report) -> AuditReport:
    kind = entry["kind"]
    if kind == "convexity-gap":
        return audit_cp_inequality(
            n_samples=int(entry.get("samples", 100_000)),
            p_low=float(entry.get("p_low", 1.0)),
            p_high=float(entry.get("p_high", 6.0)),
            seed=sc.seed, tol=float(entry.get("tol", 1e-12)))
    if kind == "window-contraction":
        wv, wtv = _norm_vectors(sc)
        nv = wtv if sc.alpha > 0.0 else wv
        C = weighted_norm(nv, sc.initial_state().u)
        return audit_contraction(
            sc.model, sc.kernel, sc.weight, sc.alpha, report, C,
            cfg=sc.solver_cfg, n_pairs=int(entry.get("pairs", 100)),
            seed=sc.seed, slack=float(entry.get("slack", 1e-9)))
    if kind == "truncation-sweep":
        sizes = [int(n) for n in entry.get("sizes", sc.sweep_sizes)]
        if not sizes:
            raise ConfigError("truncation-sweep needs sizes "
                              "(audit entry or [sweep] table)")
        records = truncation_sweep(sc.model, sc.kernel, sc.weight, sc.alpha,
                                   sc.initial_state, sizes, sc.solver_cfg)
        last = records[-1].get("distance_to_previous", 0.0)
        tol = float(entry.get("tol", 1e-6))
        detail = [{k: v for k, v in rec.items() if k != "final"}
                  for rec in records]
        status = "pass" if last <= tol and not any(
            rec["blowup"] for rec in records) else "fail"
        return AuditReport("truncation sweep", "truncation-sweep",
                           last, tol, status, {"records": detail})
    raise ConfigError(f"unknown audit kind {kind!r}")


def cmd_audit(args) -> int:
    sc = load_scenario(args.config)
    if args.seed is not None:
        sc.seed = args.seed
    entries = sc.audits or [{"kind": "mass-ledger"},
                            {"kind": "positivity-floor"},
                            {"kind": "convexity-gap"},
                            {"kind": "window-contraction"}]
    needs_traj = any(e["kind"] in _TRAJ_AUDITS for e in entries)
    needs_machinery = any(e["kind"] not in _TRAJ_AUDITS
                          and e["kind"] != "convexity-gap" for e in entries)

    report = None
    if needs_machinery or (needs_traj and args.trajectory is None):
        report, bad = _prepare_run(args, sc)
        if bad is not None:
            return bad

    table = None
    traj = None
    if needs_traj:
        if args.trajectory is not None:
            table = _read_table(args.trajectory)
        else:
            engine = "oracle" if sc.engine == "oracle" else "picard"
            traj = _run_engine(sc, engine, report, sc.output_times())

    reports = []
    for entry in entries:
        if entry["kind"] in _TRAJ_AUDITS:
            if table is not None:
                reports.append(_audit_from_table(entry, sc, table))
            else:
                reports.append(_audit_from_traj(entry, sc, traj))
        else:
            reports.append(_audit_machinery(entry, sc, report))

    all_pass = all(r.status != "fail" for r in reports)
    print(_dump_json({"seed": sc.seed, "all_pass": all_pass,
                      "audits": [r.to_dict() for r in reports]}))
    return EXIT_OK if all_pass else EXIT_AUDIT_FAIL


def cmd_sweep(args) -> int:
    sc = load_scenario(args.config)
    sizes = ([int(s) for s in args.sizes.split(",")] if args.sizes
             else sc.sweep_sizes)
    if not sizes:
        raise ConfigError("sweep needs sizes (--sizes or [sweep] table)")
    report, bad = _prepare_run(args, sc)
    if bad is not None:
        return bad
    engine = args.engine or ("oracle" if sc.engine == "oracle" else "picard")
    records = truncation_sweep(sc.model, sc.kernel, sc.weight, sc.alpha,
                               sc.initial_state, sizes, sc.solver_cfg,
                               engine=engine)
    out = [{k: v for k, v in rec.items() if k != "final"} for rec in records]
    print(_dump_json({"engine": engine, "records": out}))
    if any(rec["blowup"] for rec in records):
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = load_scenario(args.config)
    report, bad = _prepare_run(args, sc)
    if bad is not None:
        return bad
    grid = sc.output_times()
    wv, _ = _norm_vectors(sc)
    traj_p = _run_engine(sc, "picard", report, grid)
    traj_o = _run_engine(sc, "oracle", report, grid)
    if traj_p.blowup is not None or traj_o.blowup is not None:
        print(_dump_json({"blowup": True}))
        return EXIT_BLOWUP
    times = [0.0] + list(grid)
    disc = _sup_discrepancy(traj_p, traj_o, wv, times)
    tol = args.tol
    doc = {"discrepancy_norm_w": disc, "tol": tol, "pass": disc <= tol,
           "times_compared": len(times),
           "picard_windows": traj_p.n_windows,
           "oracle_steps": traj_o.accepted_steps}
    print(_dump_json(doc))
    return EXIT_OK if disc <= tol else EXIT_AUDIT_FAIL


# --------------------------------------------------------------------------
# argument plumbing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coagfrag",
        description="Simulate and audit truncated coagulation-fragmentation "
                    "kinetics from a TOML scenario.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="increase log detail (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, force=True, seed=True):
        sp.add_argument("--config", required=True, help="scenario TOML path")
        if force:
            sp.add_argument("--force", action="store_true",
                            help="run even if hypotheses are unverified")
        if seed:
            sp.add_argument("--seed", type=int, default=None,
                            help="override the scenario seed")

    sp = sub.add_parser("verify", help="classify the scenario hypotheses")
    common(sp, force=False, seed=False)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("simulate", help="integrate and export a trajectory")
    common(sp)
    sp.add_argument("--engine", choices=("picard", "oracle", "both"),
                    default=None, help="override the scenario engine")
    sp.add_argument("--out", default=None, help="output path (default stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("audit", help="run configured audits")
    common(sp)
    sp.add_argument("--trajectory", default=None,
                    help="audit a previously exported trajectory file")
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("sweep", help="repeat the run at increasing sizes")
    common(sp)
    sp.add_argument("--sizes", default=None,
                    help="comma-separated truncation sizes")
    sp.add_argument("--engine", choices=("picard", "oracle"), default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("compare", help="cross-validate the two engines")
    common(sp)
    sp.add_argument("--tol", type=float, default=1e-6,
                    help="acceptance threshold on the sup discrepancy")
    sp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AssumptionError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_UNVERIFIED
    except (ConfigError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_OTHER
    except CoagFragError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_OTHER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
