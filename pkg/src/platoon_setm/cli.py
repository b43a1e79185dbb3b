"""Command-line front end: ``platoon-setm validate | run | sweep``.

Exit codes
    0   success
    2   the scenario file could not be parsed
    3   the scenario failed validation
    4   the simulation faulted (non-finite state)
    5   output could not be written
    64  bad command-line usage
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from platoon_setm import metrics
from platoon_setm.engine import InfeasibleScenario, SimulationFault, run
from platoon_setm.report import ReportIOError, _clean, lyapunov_floor, write_files, write_report
from platoon_setm.scenario import (SWEEPABLE, ScenarioError, check_document, load_document, validate_document,
                                   with_parameter)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_FAULT = 4
EXIT_IO = 5
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(path):
    try:
        return load_document(path)
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc


def _report_scenario_error(exc: Exception, path) -> int:
    if isinstance(exc, ReportIOError):
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    for d in exc.diagnostics:
        print(f"{path}: {d}", file=sys.stderr)
    return EXIT_PARSE if exc.parse else EXIT_INVALID


def cmd_validate(args) -> int:
    try:
        sc = validate_document(_load(args.file))
    except (ScenarioError, ReportIOError) as exc:
        return _report_scenario_error(exc, args.file)
    print(f"{args.file}: ok ({sc.name}, {sc.n} vehicles, {sc.ticks} steps)")
    return EXIT_OK


def _execute(sc, out_dir, stride):
    t0 = time.perf_counter()
    log = run(sc)
    elapsed = time.perf_counter() - t0
    summary = write_report(log, sc, out_dir, stride=stride, runtime_s=round(elapsed, 3))
    return log, summary


def cmd_run(args) -> int:
    try:
        sc = validate_document(_load(args.file))
    except (ScenarioError, ReportIOError) as exc:
        return _report_scenario_error(exc, args.file)
    try:
        _, summary = _execute(sc, args.out, args.stride)
    except SimulationFault as exc:
        print(f"simulation fault at tick {exc.tick}: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except InfeasibleScenario as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ReportIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{sc.name}: {summary['ticks']} steps in {summary['runtime_s']} s, "
          f"{summary['audit']['violations']} audit violations")
    print(f"{'vehicle':>7} {'role':<20} {'lon':>6} {'lat':>6} {'lon red. %':>10}")
    for row in summary["trigger_table"]:
        print(f"{row['vehicle']:>7} {row['role']:<20} {row['lon_triggers']:>6} {row['lat_triggers']:>6} "
              f"{row['lon_reduction']:>10.2f}")
    print(f"artifacts written to {args.out}")
    return EXIT_OK


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def sweep_row(name, value, log, sc) -> dict:
    settling = metrics.formation_settling(log, sc)
    counts = log.trigger_counts()[log.controlled]
    return {
        "parameter": name, "value": value, "status": "ok", "rules": [],
        "triggers_total": int(counts.sum()), "triggers_longitudinal": int(counts[:, 0].sum()),
        "settling_s": settling.initial, "recovery_s": settling.recovery,
        "final_formation_error": float(log.formation_error_norm()[-1]),
        "lyapunov_floor": lyapunov_floor(log),
    }


def cmd_sweep(args) -> int:
    try:
        doc = _load(args.file)
    except (ScenarioError, ReportIOError) as exc:
        return _report_scenario_error(exc, args.file)
    out = Path(args.out)
    rows = []
    code = EXIT_OK
    for value in args.values:
        variant = with_parameter(doc, args.param, value)
        sc, diags = check_document(variant)
        if diags:
            rules = sorted({d.rule for d in diags})
            print(f"{args.param}={value:g}: skipped ({', '.join(rules)})", file=sys.stderr)
            rows.append({"parameter": args.param, "value": value, "status": "skipped", "rules": rules,
                         "reason": "; ".join(d.message for d in diags)})
            continue
        try:
            log, _ = _execute(sc, out / f"{args.param}={value:g}", args.stride)
        except SimulationFault as exc:
            print(f"{args.param}={value:g}: simulation fault at tick {exc.tick}", file=sys.stderr)
            rows.append({"parameter": args.param, "value": value, "status": "fault", "rules": [],
                         "reason": str(exc)})
            code = EXIT_FAULT
            continue
        except ReportIOError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        rows.append(sweep_row(args.param, value, log, sc))

    cols = ["value", "status", "triggers_total", "triggers_longitudinal", "settling_s", "recovery_s",
            "final_formation_error", "lyapunov_floor"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join("" if r.get(c) is None else (f"{r[c]:.12g}" if isinstance(r[c], float) else str(r[c]))
                              for c in cols))
    try:
        write_files(out, {"sweep.csv": "\n".join(lines) + "\n",
                          "sweep.json": json.dumps(_clean(rows), indent=2) + "\n"})
    except ReportIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{'value':>10} {'triggers':>9} {'lon':>7} {'settling s':>11} {'final err':>10} {'V floor':>10}")
    for r in rows:
        if r["status"] != "ok":
            print(f"{r['value']:>10g} {r['status']}: {', '.join(r['rules']) or r.get('reason', '')}")
            continue
        st = "n/a" if r["settling_s"] is None else f"{r['settling_s']:.3f}"
        print(f"{r['value']:>10g} {r['triggers_total']:>9} {r['triggers_longitudinal']:>7} {st:>11} "
              f"{r['final_formation_error']:>10.4f} {r['lyapunov_floor']:>10.4g}")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="platoon-setm", description="Constrained formation control with event-triggered updates.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a scenario and write its report")
    p.add_argument("file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stride", type=int, default=10, help="time-series decimation (default: every 10th step)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="re-run a scenario over values of one parameter")
    p.add_argument("file")
    p.add_argument("--param", required=True, choices=SWEEPABLE)
    p.add_argument("--values", required=True, type=_parse_values, help='e.g. "0.1,0.3,0.6"')
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=10)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "stride", 1) < 1:
        print("error: --stride must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
