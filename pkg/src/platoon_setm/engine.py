"""Fixed-step closed-loop simulation of the constrained formation.

Per tick, against a snapshot of all vehicle states:

1. project velocities into their margin-shrunk boxes and map them,
2. compose the backstepping frame of every vehicle,
3. evaluate the trigger rule per vehicle and axis; on a trigger the fresh
   control replaces the held one,
4. advance the RBF weights with the current z2,
5. integrate every plant one RK4 step under the held control.

All vehicles are processed as one array, so the result does not depend on
any iteration order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from platoon_setm.constraint_map import ConstraintBox, log_map
from platoon_setm.controller import ControllerGains, velocity_bounds
from platoon_setm.graph import FormationGraph
from platoon_setm.plant import PlantModel, VehicleState, rk4_fleet
from platoon_setm.rbfnn import grid_centers
from platoon_setm.setm import SetmConfig, trigger_mask

log = logging.getLogger(__name__)

AXES = ("lon", "lat")


class SimulationFault(RuntimeError):
    def __init__(self, tick: int, message: str):
        super().__init__(f"tick {tick}: {message}")
        self.tick = tick


class InfeasibleScenario(ValueError):
    """Initial conditions outside the admissible set, or an inconsistent scenario."""


@dataclass(frozen=True)
class LeaderProfile:
    """Piecewise-linear longitudinal speed schedule, constant beyond the last breakpoint."""

    times: tuple[float, ...] = (0.0, 25.0, 35.0)
    speeds: tuple[float, ...] = (12.0, 12.0, 6.0)

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "speeds", tuple(float(v) for v in self.speeds))
        if len(self.times) != len(self.speeds) or not self.times:
            raise ValueError("leader profile needs matching, nonempty times and speeds")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("leader profile times must be strictly increasing")

    def speed(self, t):
        return np.interp(t, self.times, self.speeds)

    def acceleration(self, t):
        """Slope of the active segment (right derivative at breakpoints)."""
        t = np.asarray(t, dtype=float)
        knots = np.asarray(self.times)
        v = np.asarray(self.speeds)
        slopes = np.concatenate([[0.0], np.diff(v) / np.diff(knots), [0.0]])
        return slopes[np.searchsorted(knots, t, side="right")]


def leader_speed(profile: LeaderProfile, t: float) -> float:
    if t < 0:
        raise ValueError("time must be nonnegative")
    return float(profile.speed(t))


@dataclass(frozen=True)
class RbfConfig:
    count: int = 5
    width: float | None = None
    adapt_gain: float = 1.0
    leakage: float = 0.1

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("need at least two centers per axis")
        if self.width is not None and not self.width > 0:
            raise ValueError("width must be positive")
        if not self.adapt_gain > 0:
            raise ValueError("adaptation gain must be positive")
        if not self.leakage > 0:
            raise ValueError("leakage must be positive")


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything a run needs.  Vehicle lists are indexed like the graph nodes.

    ``predecessors[i]`` is the vehicle whose distance to ``i`` is the
    constrained spacing, or None.  The leader either follows ``leader_profile``
    kinematically (``leader_mode="exogenous"``) or runs the same controller
    with its virtual law replaced by the mapped reference speed
    (``leader_mode="tracking"``).
    """

    duration: float
    step: float
    graph: FormationGraph
    plants: Sequence[PlantModel]
    spacing_box: ConstraintBox
    velocity_boxes: Sequence[ConstraintBox]
    gains: Sequence[ControllerGains]
    setm: SetmConfig
    rbf: RbfConfig
    initial_states: Sequence[VehicleState]
    predecessors: Sequence[int | None]
    leader: int = 0
    leader_profile: LeaderProfile = field(default_factory=LeaderProfile)
    leader_mode: str = "exogenous"
    spacing_weighted: bool = False
    name: str = "scenario"

    def __post_init__(self):
        for attr in ("plants", "velocity_boxes", "gains", "initial_states", "predecessors"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        n = self.graph.n
        if not self.step > 0:
            raise InfeasibleScenario("step must be positive")
        if not self.duration >= self.step:
            raise InfeasibleScenario("duration must be at least one step")
        for attr in ("plants", "gains", "initial_states", "predecessors"):
            if len(getattr(self, attr)) != n:
                raise InfeasibleScenario(f"{attr} needs {n} entries, got {len(getattr(self, attr))}")
        if len(self.velocity_boxes) != 2:
            raise InfeasibleScenario("need one velocity box per axis")
        if not 0 <= self.leader < n:
            raise InfeasibleScenario("leader index out of range")
        if self.leader_mode not in ("exogenous", "tracking"):
            raise InfeasibleScenario(f"unknown leader mode {self.leader_mode!r}")
        for i, j in enumerate(self.predecessors):
            if j is not None and not (0 <= j < n and j != i):
                raise InfeasibleScenario(f"vehicle {i} has invalid predecessor {j}")
        for g in self.gains:
            if g.sigma < self.setm.sigma_max:
                raise InfeasibleScenario(
                    f"gains were checked against sigma = {g.sigma} < max(delta1, delta2) = {self.setm.sigma_max}"
                )

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def ticks(self) -> int:
        return int(round(self.duration / self.step))

    def feasibility_violations(self) -> list[str]:
        """Initial conditions outside the margin-shrunk admissible set."""
        out = []
        lon = self.velocity_boxes[0]
        for t in (0.0, *self.leader_profile.times, self.duration):
            v = float(self.leader_profile.speed(t))
            if not lon.lower + lon.margin <= v <= lon.upper - lon.margin:
                out.append(f"leader profile speed {v} at t={t} outside the longitudinal box")
        for i, s in enumerate(self.initial_states):
            for a, box in enumerate(self.velocity_boxes):
                if not box.lower + box.margin < s.v[a] < box.upper - box.margin:
                    out.append(f"vehicle {i} initial {AXES[a]} velocity {s.v[a]} outside admissible box")
            j = self.predecessors[i]
            if j is not None:
                d = float(np.hypot(*(self.initial_states[j].p - s.p)))
                box = self.spacing_box
                if not box.lower + box.margin < d < box.upper - box.margin:
                    out.append(f"vehicle {i} initial spacing {d:.6g} to vehicle {j} outside admissible box")
        return out


@dataclass(eq=False)
class RunLog:
    """Per-tick record of a run; arrays are (ticks, n, 2) unless noted."""

    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    alpha: np.ndarray
    s_v: np.ndarray
    gamma_v: np.ndarray
    u_applied: np.ndarray
    u_candidate: np.ndarray
    w_norm: np.ndarray
    spacing: np.ndarray      # (ticks, n), NaN where no predecessor
    s_d: np.ndarray          # (ticks, n)
    gamma_d: np.ndarray      # (ticks, n)
    triggered: np.ndarray    # bool
    held_z2: np.ndarray
    disturbance: np.ndarray
    f_true: np.ndarray
    f_hat: np.ndarray
    final_p: np.ndarray
    final_v: np.ndarray
    final_weights: np.ndarray
    controlled: np.ndarray   # (n,) bool
    step: float
    duration: float

    @property
    def ticks(self) -> int:
        return self.t.size

    def trigger_times(self, i: int, axis: int) -> np.ndarray:
        return self.t[self.triggered[:, i, axis]]

    def trigger_counts(self) -> np.ndarray:
        return self.triggered.sum(axis=0)

    def formation_error_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.z1 ** 2, axis=(1, 2)))

    def lyapunov(self) -> np.ndarray:
        """Observable part of the global Lyapunov function, 1/2 sum(||z1||^2 + ||z2||^2).

        The leader's z2 only enters when it is actually controlled; the
        weight-error term is unobservable and left out.
        """
        z2 = self.z2 * self.controlled[None, :, None]
        return 0.5 * (np.sum(self.z1 ** 2, axis=(1, 2)) + np.sum(z2 ** 2, axis=(1, 2)))


def _spacing(p, v, idx, pred, lower, upper):
    """Distance, range rate, mapped value and gain for the vehicles ``idx`` behind ``pred``."""
    rel_p = p[pred] - p[idx]
    rel_v = v[pred] - v[idx]
    d = np.sqrt(rel_p[:, 0] * rel_p[:, 0] + rel_p[:, 1] * rel_p[:, 1])
    rate = (rel_p[:, 0] * rel_v[:, 0] + rel_p[:, 1] * rel_v[:, 1]) / d
    below = d - lower
    above = upper - d
    if below.min() > 0 and above.min() > 0:
        return d, rate, np.log(below / above), 1.0 / below + 1.0 / above
    inside = (below > 0) & (above > 0)
    s_d = np.full(d.shape, np.nan)
    gamma_d = np.full(d.shape, np.nan)
    s_d[inside] = np.log(below[inside] / above[inside])
    gamma_d[inside] = 1.0 / below[inside] + 1.0 / above[inside]
    return d, rate, s_d, gamma_d


_SERIES = ("p", "v", "z1", "z2", "alpha", "s_v", "gamma_v", "u_applied", "u_candidate", "w_norm",
           "held_z2", "disturbance", "f_true", "f_hat")


def run(sc: Scenario, setm_enabled: bool = True) -> RunLog:
    """Simulate ``sc``.

    With ``setm_enabled=False`` every controlled channel updates at every tick
    (periodic baseline).  Raises InfeasibleScenario before the first tick and
    SimulationFault on a non-finite state.
    """
    problems = sc.feasibility_violations()
    if problems:
        raise InfeasibleScenario("; ".join(problems))

    n, h, ticks = sc.n, sc.step, sc.ticks
    graph = sc.graph
    degree = graph.laplacian().degree[:, None]
    adjacency = graph.adjacency
    offsets = graph.desired_offsets
    lead = sc.leader
    exogenous = sc.leader_mode == "exogenous"
    controlled = np.ones(n, dtype=bool)
    if exogenous:
        controlled[lead] = False
    ctrl_ch = np.repeat(controlled[:, None], 2, axis=1)
    ctrl_f = ctrl_ch.astype(float)

    mass = np.array([pl.mass for pl in sc.plants])[:, None]
    drag = np.array([pl.drag_coeff for pl in sc.plants])[:, None]
    roll = np.array([pl.roll_coeff for pl in sc.plants])[:, None]
    drag_m, roll_m = drag / mass, roll / mass
    dist_amp = np.array([pl.disturbance.amplitude for pl in sc.plants])
    dist_freq = np.array([pl.disturbance.frequency for pl in sc.plants])[:, None]
    dist_phase = np.array([pl.disturbance.phase for pl in sc.plants])
    k1 = np.array([g.k1 for g in sc.gains])[:, None]
    k2 = np.array([g.k2 for g in sc.gains])[:, None]
    lower, upper, margin = velocity_bounds(sc.velocity_boxes)
    v_lo, v_hi = lower + margin, upper - margin

    pred_idx = np.array([i if j is None else j for i, j in enumerate(sc.predecessors)])
    has_pred = np.array([j is not None for j in sc.predecessors])
    sbox = sc.spacing_box
    sp_idx = np.flatnonzero(has_pred)
    sp_pred = pred_idx[sp_idx]
    if sc.spacing_weighted:
        d_nominal = np.sqrt(np.sum((offsets[pred_idx] - offsets) ** 2, axis=1))
        d_nominal = np.where(has_pred, d_nominal, sbox.midpoint)
        _, gamma_nominal = log_map(np.clip(d_nominal, sbox.lower + sbox.margin, sbox.upper - sbox.margin),
                                   sbox.lower, sbox.upper)

    # one 1-D network per vehicle and axis, centers spread over that axis' velocity box
    rb = sc.rbf
    centers = np.stack([grid_centers(lower[a], upper[a], rb.count)[:, 0] for a in range(2)])  # (2, K)
    widths = np.array([rb.width if rb.width is not None else (upper[a] - lower[a]) / (rb.count - 1)
                       for a in range(2)])
    inv_two_w2 = (1.0 / (2.0 * widths * widths))[:, None]
    weights = np.zeros((n, 2, rb.count))
    decay = 1.0 - h * rb.leakage
    rate_gain = h * rb.adapt_gain
    w_mask = ctrl_f[:, :, None]

    p = np.array([s.p for s in sc.initial_states])
    v = np.array([s.v for s in sc.initial_states])
    if exogenous:
        v[lead] = (leader_speed(sc.leader_profile, 0.0), 0.0)

    held_z2 = np.zeros((n, 2))
    held_u = np.zeros((n, 2))
    delta1, delta2, eps2 = sc.setm.delta1, sc.setm.delta2, sc.setm.epsilon ** 2

    L = {key: np.empty((ticks, n, 2)) for key in _SERIES}
    for key in ("spacing", "s_d", "gamma_d"):
        L[key] = np.full((ticks, n), np.nan)
    triggered = np.zeros((ticks, n, 2), dtype=bool)
    times = np.arange(ticks) * h

    for k in range(ticks):
        t = times[k]
        q = p - offsets
        z1 = degree * q - adjacency @ q
        alpha = -k1 * z1
        alpha_dot = -k1 * (degree * v - adjacency @ v)
        v_proj = np.minimum(np.maximum(v, v_lo), v_hi)
        below, above = v_proj - lower, upper - v_proj
        s_v = np.log(below / above)
        gamma_v = 1.0 / below + 1.0 / above
        dist, d_rate, s_d, gamma_d = _spacing(p, v, sp_idx, sp_pred, sbox.lower, sbox.upper)
        if sc.spacing_weighted:
            # alpha_i = -k1 (gamma_d / gamma_d_nominal) z1_i, with the product rule for its rate
            if not np.all(np.isfinite(gamma_d)):
                raise SimulationFault(k, "spacing left its box while spacing weighting is active")
            w = np.ones(n)
            w[sp_idx] = gamma_d / gamma_nominal[sp_idx]
            dgamma = -1.0 / (dist - sbox.lower) ** 2 + 1.0 / (sbox.upper - dist) ** 2
            w_rate = np.zeros(n)
            w_rate[sp_idx] = dgamma * d_rate / gamma_nominal[sp_idx]
            alpha_dot = w[:, None] * alpha_dot + w_rate[:, None] * alpha
            alpha = w[:, None] * alpha
        if not exogenous:
            # tracking leader: virtual law is the mapped reference velocity
            v_ref = np.array([leader_speed(sc.leader_profile, t), 0.0])
            s_ref, g_ref = log_map(v_ref, lower, upper)
            alpha[lead] = s_ref
            alpha_dot[lead] = g_ref * np.array([float(sc.leader_profile.acceleration(t)), 0.0])
        z2 = s_v - alpha

        diff = v[:, :, None] - centers
        phi = np.exp(-(diff * diff) * inv_two_w2)  # (n, 2, K)
        f_hat = np.einsum("nak,nak->na", weights, phi)
        u_new = mass * (-k2 * z2 - f_hat + alpha_dot)

        if k == 0 or not setm_enabled:
            fire = ctrl_ch
        else:
            fire = trigger_mask(delta1, delta2, eps2 ** 0.5, held_z2, z2) & ctrl_ch
        held_z2 = np.where(fire, z2, held_z2)
        held_u = np.where(fire, u_new, held_u)
        triggered[k] = fire

        weights = decay * weights + rate_gain * phi * z2[:, :, None]
        weights *= w_mask

        d_force = dist_amp * np.sin(dist_freq * t + dist_phase)
        L["p"][k] = p
        L["v"][k] = v
        L["z1"][k] = z1
        L["z2"][k] = z2
        L["alpha"][k] = alpha
        L["s_v"][k] = s_v
        L["gamma_v"][k] = gamma_v
        L["u_applied"][k] = held_u * ctrl_f
        L["u_candidate"][k] = u_new * ctrl_f
        L["held_z2"][k] = held_z2
        L["disturbance"][k] = d_force
        L["f_hat"][k] = f_hat
        L["spacing"][k, sp_idx] = dist
        L["s_d"][k, sp_idx] = s_d
        L["gamma_d"][k, sp_idx] = gamma_d
        L["w_norm"][k] = np.sqrt(np.einsum("nak,nak->na", weights, weights))

        p_next, v_next = rk4_fleet(p, v, (held_u * ctrl_f + d_force) / mass, drag_m, roll_m, h)
        if exogenous:
            # Simpson's rule is exact for a piecewise-linear speed whose breakpoints fall on ticks
            v_a, v_m, v_b = sc.leader_profile.speed((t, t + 0.5 * h, t + h))
            p_next[lead] = p[lead] + (h * (v_a + 4.0 * v_m + v_b) / 6.0, 0.0)
            v_next[lead] = (v_b, 0.0)
        if not (np.isfinite(p_next).all() and np.isfinite(v_next).all()):
            raise SimulationFault(k, "non-finite vehicle state")
        p, v = p_next, v_next

    # hidden resistance along the logged trajectory, evaluated once at the end
    vv = L["v"]
    speed = np.sqrt(np.sum(vv * vv, axis=2, keepdims=True))
    L["f_true"] = -(drag_m[None] * speed + roll_m[None]) * vv
    return RunLog(t=times, triggered=triggered, final_p=p, final_v=v, final_weights=weights,
                  controlled=controlled, step=h, duration=sc.duration, **L)
