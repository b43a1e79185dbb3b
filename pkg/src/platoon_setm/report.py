"""Run artifacts: per-group CSVs, plot-data CSVs, event log and a JSON summary.

All files of one report are written to a staging directory first and moved
into place only when every file has been written, so a failed report never
leaves a partial set behind.  CSV output depends only on the run, never on
wall-clock time, so re-running a scenario reproduces it byte for byte.
"""

from __future__ import annotations

import io
import json
import math
import os
import shutil
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from platoon_setm import metrics
from platoon_setm.engine import AXES, RunLog, Scenario

CSV_SCHEMA_VERSION = 1
SUMMARY_SCHEMA_VERSION = 1
FLOAT_FMT = "%.12g"


class ReportIOError(OSError):
    pass


def _table(header: list[str], columns: list[np.ndarray], fmt=FLOAT_FMT) -> str:
    buf = io.StringIO()
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns else np.empty((0, 0))
    buf.write(f"# schema_version={CSV_SCHEMA_VERSION}\n")
    np.savetxt(buf, data, fmt=fmt, delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


def _long(log: RunLog, stride: int, groups: dict[str, np.ndarray]) -> str:
    """Long format: one row per (sample, vehicle); vehicles numbered from 1."""
    idx = np.arange(0, log.ticks, stride)
    n = log.p.shape[1]
    t = np.repeat(log.t[idx], n)
    veh = np.tile(np.arange(1, n + 1), idx.size)
    header, cols = ["t", "vehicle"], [t, veh]
    for name, arr in groups.items():
        a = arr[idx]
        if a.ndim == 3:
            for ax in range(2):
                header.append(f"{name}_{AXES[ax]}")
                cols.append(a[:, :, ax].reshape(-1))
        else:
            header.append(name)
            cols.append(a.reshape(-1))
    return _table(header, cols)


def event_rows(log: RunLog, setm) -> tuple[list[str], list[np.ndarray]]:
    vehicles, axes, times, gaps, mags, branch = [], [], [], [], [], []
    for i in range(log.p.shape[1]):
        for a in range(2):
            k = np.flatnonzero(log.triggered[:, i, a])
            if k.size == 0:
                continue
            t = log.t[k]
            z = np.abs(log.z2[k, i, a])
            vehicles.append(np.full(k.size, i + 1))
            axes.append(np.full(k.size, a))
            times.append(t)
            gaps.append(np.concatenate([[np.nan], np.diff(t)]))
            mags.append(z)
            branch.append(np.where(z >= setm.epsilon, 1, 2))
    cols = [np.concatenate(c) if c else np.empty(0) for c in (vehicles, axes, times, gaps, mags, branch)]
    order = np.lexsort((cols[1], cols[0], cols[2])) if cols[0].size else np.empty(0, dtype=int)
    return ["vehicle", "axis", "t", "interval", "abs_z2", "sigma_branch"], [c[order] for c in cols]


def render_csvs(log: RunLog, sc: Scenario, stride: int = 10) -> dict[str, str]:
    """Every CSV artifact of a run as {filename: text}."""
    if stride < 1:
        raise ValueError("stride must be at least 1")
    files = {
        "states.csv": _long(log, stride, {"p": log.p, "v": log.v}),
        "errors.csv": _long(log, stride, {"z1": log.z1, "z2": log.z2, "alpha": log.alpha,
                                          "s_v": log.s_v, "gamma_v": log.gamma_v}),
        "control.csv": _long(log, stride, {"u_applied": log.u_applied, "u_candidate": log.u_candidate,
                                           "held_z2": log.held_z2, "f_hat": log.f_hat, "f_true": log.f_true,
                                           "disturbance": log.disturbance}),
        "spacing.csv": _long(log, stride, {"spacing": log.spacing, "s_d": log.s_d, "gamma_d": log.gamma_d}),
        "weights.csv": _long(log, stride, {"w_norm": log.w_norm}),
    }
    idx = np.arange(0, log.ticks, stride)
    files["lyapunov.csv"] = _table(["t", "V", "formation_error_norm"],
                                   [log.t[idx], log.lyapunov()[idx], log.formation_error_norm()[idx]])
    header, cols = event_rows(log, sc.setm)
    files["events.csv"] = _table(header, cols)

    n = log.p.shape[1]
    # one plot-data file per figure family
    header, cols = ["t"], [log.t[idx]]
    for i in range(n):
        for a in range(2):
            header.append(f"p{i + 1}_{AXES[a]}")
            cols.append(log.p[idx, i, a])
        header.append(f"p{i + 1}_{AXES[0]}_desired")
        cols.append(log.p[idx, sc.leader, 0] + sc.graph.desired_offsets[i, 0] - sc.graph.desired_offsets[sc.leader, 0])
    files["plot_tracking.csv"] = _table(header, cols)

    header, cols = ["t", "d_min", "d_max"], [log.t[idx], np.full(idx.size, sc.spacing_box.lower),
                                             np.full(idx.size, sc.spacing_box.upper)]
    for i in range(n):
        if sc.predecessors[i] is not None:
            header.append(f"d{sc.predecessors[i] + 1}_{i + 1}")
            cols.append(log.spacing[idx, i])
    files["plot_distances.csv"] = _table(header, cols)

    header, cols = ["t"], [log.t[idx]]
    for a, box in enumerate(sc.velocity_boxes):
        header += [f"v_{AXES[a]}_min", f"v_{AXES[a]}_max"]
        cols += [np.full(idx.size, box.lower), np.full(idx.size, box.upper)]
        for i in range(n):
            header.append(f"v{i + 1}_{AXES[a]}")
            cols.append(log.v[idx, i, a])
    files["plot_velocity_audit.csv"] = _table(header, cols)

    header, cols = event_rows(log, sc.setm)
    lon = cols[1] == 0
    files["plot_intervals.csv"] = _table(["vehicle", "t", "interval"], [cols[0][lon], cols[2][lon], cols[3][lon]])
    return files


def _clean(obj):
    """JSON-safe copy: tuples to lists, non-finite floats to None, numpy scalars to Python."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def lyapunov_floor(log: RunLog, window: float = 10.0) -> float:
    return metrics.lyapunov_trace(log).floor(log.t, min(window, log.duration))


def build_summary(log: RunLog, sc: Scenario, runtime_s: float | None = None) -> dict:
    ly = metrics.lyapunov_trace(log)
    floor = lyapunov_floor(log)
    rows = metrics.trigger_table(log, sc.leader)
    counts = log.trigger_counts()
    err = log.formation_error_norm()
    return _clean({
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "scenario": sc.name,
        "duration_s": sc.duration,
        "step_s": sc.step,
        "ticks": log.ticks,
        "baseline_samples": sc.ticks,
        "runtime_s": runtime_s,
        "trigger_table": [asdict(r) for r in rows],
        "triggers_total": int(counts[log.controlled].sum()),
        "triggers_longitudinal": int(counts[log.controlled, 0].sum()),
        "audit": metrics.constraint_audit(log, sc.spacing_box, sc.velocity_boxes).to_dict(),
        "lyapunov": {"initial": ly.initial, "floor_final_10s": floor,
                     "floor_ratio": floor / ly.initial if ly.initial > 0 else None,
                     "ultimate_bound": ly.ultimate_bound, "increasing_fraction": ly.increasing_fraction,
                     "note": ly.note},
        "zeno": metrics.zeno_audit(log, sc.setm).to_dict(),
        "settling": metrics.formation_settling(log, sc).to_dict(),
        "final_formation_error": float(err[-1]),
        "interevent_violations": metrics.interevent_violations(log, sc.setm),
        "weights": metrics.weight_growth(log, min(20.0, sc.duration)),
        "notes": [
            "the trigger rule is evaluated once per step, so every inter-event interval is at least one step",
            "only actual vehicle states are logged; no velocity observer is simulated",
            "an exogenous leader follows its speed profile and never triggers",
        ],
    })


def write_files(out_dir, files: dict[str, str]) -> list[Path]:
    """Write ``files`` into ``out_dir`` all-or-nothing.  Returns the final paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    except OSError as exc:
        raise ReportIOError(f"cannot write to {out}: {exc}") from exc
    try:
        for name, text in files.items():
            (stage / name).write_text(text, encoding="utf-8", newline="\n")
        paths = []
        for name in files:
            os.replace(stage / name, out / name)
            paths.append(out / name)
        return paths
    except OSError as exc:
        raise ReportIOError(f"cannot write to {out}: {exc}") from exc
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def write_report(log: RunLog, sc: Scenario, out_dir, stride: int = 10, runtime_s: float | None = None) -> dict:
    files = render_csvs(log, sc, stride)
    summary = build_summary(log, sc, runtime_s)
    files["summary.json"] = json.dumps(summary, indent=2) + "\n"
    write_files(out_dir, files)
    return summary
