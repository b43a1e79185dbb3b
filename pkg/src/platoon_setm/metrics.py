"""Post-run analysis: Lyapunov monitor, constraint audit, settling, trigger statistics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from platoon_setm.constraint_map import ConstraintBox
from platoon_setm.engine import AXES, RunLog, Scenario
from platoon_setm.setm import SetmConfig, interevent_stats, trigger_function, zeno_lower_bound

AUDIT_SLACK = 1e-9


@dataclass(frozen=True)
class LyapunovTrace:
    V: np.ndarray
    dV: np.ndarray
    increasing_fraction: float
    ultimate_bound: float       # max V over the final 20% of the run
    initial: float
    note: str = "observable part only: 1/2 sum(|z1|^2 + |z2|^2); weight-error term excluded"

    def floor(self, t: np.ndarray, window: float) -> float:
        """max V over the final ``window`` seconds."""
        return float(self.V[t >= t[-1] - window + 0.5 * (t[1] - t[0])].max())


def lyapunov_trace(log: RunLog) -> LyapunovTrace:
    V = log.lyapunov()
    dV = np.diff(V)
    tail = V[int(0.8 * V.size):]
    return LyapunovTrace(V=V, dV=dV, increasing_fraction=float(np.mean(dV > 0)) if dV.size else 0.0,
                         ultimate_bound=float(tail.max()), initial=float(V[0]))


@dataclass(frozen=True)
class ChannelAudit:
    channel: str
    lower: float
    upper: float
    minimum: float
    maximum: float
    margin_lower: float
    margin_upper: float
    violations: int


def _audit_channel(name: str, values: np.ndarray, box: ConstraintBox, slack: float) -> ChannelAudit:
    vals = values[np.isfinite(values)]
    if vals.size == 0:
        return ChannelAudit(name, box.lower, box.upper, float("nan"), float("nan"),
                            float("nan"), float("nan"), 0)
    bad = np.count_nonzero(~((vals > box.lower - slack) & (vals < box.upper + slack)))
    bad += np.count_nonzero(np.isinf(values))
    lo, hi = float(vals.min()), float(vals.max())
    return ChannelAudit(name, box.lower, box.upper, lo, hi, lo - box.lower, box.upper - hi, int(bad))


@dataclass(frozen=True)
class AuditReport:
    channels: tuple[ChannelAudit, ...]
    min_pair_distance: float
    pair_violations: int

    @property
    def violations(self) -> int:
        return sum(c.violations for c in self.channels) + self.pair_violations

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"violations": self.violations, "min_pair_distance": self.min_pair_distance,
                "pair_violations": self.pair_violations,
                "channels": [asdict(c) for c in self.channels]}


def constraint_audit(log: RunLog, spacing_box: ConstraintBox, velocity_boxes, slack: float = AUDIT_SLACK) -> AuditReport:
    """Every spacing and velocity sample against its open box (strict, with numerical slack).

    Also checks the distance between every pair of vehicles against the
    spacing lower bound, so non-adjacent vehicles cannot collide unnoticed.
    """
    channels = []
    n = log.p.shape[1]
    for i in range(n):
        if np.any(np.isfinite(log.spacing[:, i])):
            channels.append(_audit_channel(f"spacing[{i + 1}]", log.spacing[:, i], spacing_box, slack))
    for a, box in enumerate(velocity_boxes):
        for i in range(n):
            channels.append(_audit_channel(f"v_{AXES[a]}[{i + 1}]", log.v[:, i, a], box, slack))
    pair_min = np.inf
    pair_bad = 0
    for i in range(n):
        for j in range(i + 1, n):
            d = np.hypot(*(log.p[:, i] - log.p[:, j]).T)
            pair_min = min(pair_min, float(d.min()))
            pair_bad += int(np.count_nonzero(d <= spacing_box.lower - slack))
    return AuditReport(tuple(channels), pair_min, pair_bad)


def settling_time(t: np.ndarray, err: np.ndarray, reference: float, band: float = 0.05,
                  start: float | None = None, end: float | None = None) -> float | None:
    """First time in [start, end) after which |err - reference| <= band * |reference| until ``end``.

    Returned relative to ``start``; None if the signal is outside the band at
    the end of the window.
    """
    start = t[0] if start is None else start
    end = t[-1] + (t[1] - t[0]) if end is None else end
    sel = (t >= start) & (t < end)
    tt, ee = t[sel], err[sel]
    outside = np.abs(ee - reference) > band * abs(reference)
    if outside[-1]:
        return None
    if not outside.any():
        return 0.0
    last_out = np.flatnonzero(outside)[-1]
    return float(tt[last_out + 1] - start)


@dataclass(frozen=True)
class SettlingReport:
    reference: float
    initial: float | None        # settling time from t = 0 until the leader starts to maneuver
    recovery: float | None       # time after the maneuver ends until the error is back in band
    maneuver: tuple[float, float] | None
    band: float

    def to_dict(self) -> dict:
        return asdict(self)


def formation_settling(log: RunLog, scenario: Scenario, band: float = 0.05) -> SettlingReport:
    """Settling of the stacked formation-error norm around its final-second mean."""
    err = log.formation_error_norm()
    t = log.t
    reference = float(err[t >= t[-1] + log.step - 1.0].mean())
    prof = scenario.leader_profile
    speeds = np.asarray(prof.speeds)
    moving = np.flatnonzero(np.diff(speeds) != 0)
    if moving.size:
        m0, m1 = prof.times[moving[0]], prof.times[moving[-1] + 1]
        maneuver = (m0, m1) if m0 < log.duration else None
    else:
        maneuver = None
    if maneuver is None:
        return SettlingReport(reference, settling_time(t, err, reference, band), None, None, band)
    initial = settling_time(t, err, reference, band, start=t[0], end=maneuver[0])
    recovery = settling_time(t, err, reference, band, start=maneuver[1]) if maneuver[1] < t[-1] else None
    return SettlingReport(reference, initial, recovery, maneuver, band)


@dataclass(frozen=True)
class TriggerRow:
    vehicle: int
    role: str
    lon_triggers: int
    lat_triggers: int
    lon_reduction: float
    lat_reduction: float
    lon_min_interval: float | None
    lat_min_interval: float | None


def trigger_table(log: RunLog, leader: int) -> list[TriggerRow]:
    rows = []
    for i in range(log.p.shape[1]):
        st = [interevent_stats(log.trigger_times(i, a), log.duration, log.step) for a in range(2)]
        role = "leader" if i == leader else "follower"
        if not log.controlled[i]:
            role += " (exogenous)"
        rows.append(TriggerRow(i + 1, role, st[0].count, st[1].count, st[0].reduction_percent,
                               st[1].reduction_percent, st[0].min_interval, st[1].min_interval))
    return rows


@dataclass(frozen=True)
class ZenoReport:
    min_interval: float | None
    step: float
    rate_bound: float            # max observed |dz2/dt| over controlled channels
    t_min_bound: float           # min(sqrt(d1), sqrt(d2)) * eps / rate_bound
    all_at_least_one_step: bool
    empirical_over_bound: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def zeno_audit(log: RunLog, setm: SetmConfig) -> ZenoReport:
    h = log.step
    gaps = []
    for i in np.flatnonzero(log.controlled):
        for a in range(2):
            times = log.trigger_times(i, a)
            if times.size > 1:
                gaps.append(np.diff(times))
    gaps = np.concatenate(gaps) if gaps else np.empty(0)
    min_gap = float(gaps.min()) if gaps.size else None
    z2 = log.z2[:, log.controlled, :]
    rate = float(np.abs(np.diff(z2, axis=0)).max() / h) if z2.shape[0] > 1 else 0.0
    bound = zeno_lower_bound(setm, rate)
    return ZenoReport(
        min_interval=min_gap,
        step=h,
        rate_bound=rate,
        t_min_bound=bound,
        all_at_least_one_step=bool(gaps.size == 0 or gaps.min() >= h * (1 - 1e-9)),
        empirical_over_bound=(min_gap / bound) if (min_gap is not None and np.isfinite(bound)) else None,
    )


def interevent_violations(log: RunLog, setm: SetmConfig) -> int:
    """Samples strictly between triggers where Psi >= 0 with a nonzero measurement error."""
    held = log.held_z2[:, log.controlled, :]
    z2 = log.z2[:, log.controlled, :]
    fired = log.triggered[:, log.controlled, :]
    psi = trigger_function(setm, held, z2)
    nonzero_e = held != z2
    return int(np.count_nonzero((psi >= 0) & nonzero_e & ~fired))


def weight_growth(log: RunLog, window: float = 20.0) -> dict:
    """Compare weight norms in the two halves of the final ``window`` seconds."""
    t = log.t
    sel = t >= t[-1] - window
    w = log.w_norm[sel][:, log.controlled, :]
    half = w.shape[0] // 2
    first, second = w[:half].max(axis=0), w[half:].max(axis=0)
    return {
        "max_norm": float(w.max()) if w.size else 0.0,
        "first_half_max": first.tolist(),
        "second_half_max": second.tolist(),
        "monotone_growth": bool(np.any(np.all(np.diff(w, axis=0) > 0, axis=0))) if w.size else False,
    }
