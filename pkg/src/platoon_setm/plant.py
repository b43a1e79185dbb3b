"""Ground-truth vehicle dynamics used by the simulator.

Each vehicle obeys, per axis,

    p' = v
    v' = f(v) + u / m + d(t) / m

with f(v) = -(drag * ||v|| * v + roll * v) / m.  The controller only ever sees
(p, v); f and d are hidden from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class VehicleState:
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(2)
        v = np.asarray(self.v, dtype=float).reshape(2)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("vehicle state must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    def __eq__(self, other):
        if not isinstance(other, VehicleState):
            return NotImplemented
        return np.array_equal(self.p, other.p) and np.array_equal(self.v, other.v)


@dataclass(frozen=True)
class Disturbance:
    """Per-axis sinusoid amplitude * sin(frequency * t + phase), in newtons."""

    amplitude: tuple[float, float] = (0.0, 0.0)
    frequency: float = 1.0
    phase: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "amplitude", tuple(float(a) for a in self.amplitude))
        object.__setattr__(self, "phase", tuple(float(a) for a in self.phase))
        if len(self.amplitude) != 2 or len(self.phase) != 2:
            raise ValueError("amplitude and phase need one entry per axis")
        if any(a < 0 for a in self.amplitude):
            raise ValueError("disturbance amplitudes must be nonnegative")

    @property
    def bound(self) -> float:
        """Upper bound on the Euclidean norm of the disturbance vector."""
        return float(np.hypot(*self.amplitude))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        amp = np.asarray(self.amplitude)
        ph = np.asarray(self.phase)
        return amp * np.sin(self.frequency * t[..., None] + ph)


@dataclass(frozen=True)
class PlantModel:
    mass: float
    drag_coeff: float = 0.0
    roll_coeff: float = 0.0
    disturbance: Disturbance = field(default_factory=Disturbance)

    def __post_init__(self):
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ValueError("mass must be positive")
        if self.drag_coeff < 0 or self.roll_coeff < 0:
            raise ValueError("resistance coefficients must be nonnegative")

    @property
    def input_gain(self) -> float:
        return 1.0 / self.mass

    def resistance(self, v) -> np.ndarray:
        return resistance_accel(v, self.mass, self.drag_coeff, self.roll_coeff)


def resistance_accel(v, mass, drag, roll) -> np.ndarray:
    """Hidden nonlinearity f(v) for one vehicle (v shape (2,)) or a fleet (v shape (n, 2))."""
    v = np.asarray(v, dtype=float)
    speed = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    drag = np.asarray(drag, dtype=float)[..., None]
    roll = np.asarray(roll, dtype=float)[..., None]
    mass = np.asarray(mass, dtype=float)[..., None]
    return -(drag * speed * v + roll * v) / mass


def fleet_accel(v, force, mass, drag, roll) -> np.ndarray:
    """f(v) + (u + d) / m with the external force (u + d) already summed."""
    return resistance_accel(v, mass, drag, roll) + np.asarray(force) / np.asarray(mass, dtype=float)[..., None]


def _accel(v, a_ext, drag_m, roll_m):
    # v is (n, 2); coefficients are per-mass columns of shape (n, 1)
    speed = np.sqrt(v[:, 0:1] * v[:, 0:1] + v[:, 1:2] * v[:, 1:2])
    return a_ext - (drag_m * speed + roll_m) * v


def rk4_fleet(p, v, a_ext, drag_m, roll_m, h: float):
    """RK4 step for (n, 2) fleet arrays.

    ``a_ext`` is the external acceleration (u + d) / m held over the step;
    ``drag_m`` and ``roll_m`` are drag/m and roll/m with shape (n, 1).
    """
    a1 = _accel(v, a_ext, drag_m, roll_m)
    v2 = v + (0.5 * h) * a1
    a2 = _accel(v2, a_ext, drag_m, roll_m)
    v3 = v + (0.5 * h) * a2
    a3 = _accel(v3, a_ext, drag_m, roll_m)
    v4 = v + h * a3
    a4 = _accel(v4, a_ext, drag_m, roll_m)
    p_next = p + (h / 6.0) * (v + 2.0 * (v2 + v3) + v4)
    v_next = v + (h / 6.0) * (a1 + 2.0 * (a2 + a3) + a4)
    return p_next, v_next


def rk4_step(p, v, force, mass, drag, roll, h: float):
    """Classical Runge-Kutta step of (p, v) with the external force held over the step."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    v2d = np.atleast_2d(np.asarray(v, dtype=float))
    mass = np.atleast_1d(np.asarray(mass, dtype=float))[:, None]
    drag = np.atleast_1d(np.asarray(drag, dtype=float))[:, None]
    roll = np.atleast_1d(np.asarray(roll, dtype=float))[:, None]
    a_ext = np.atleast_2d(np.asarray(force, dtype=float)) / mass
    p_next, v_next = rk4_fleet(p, v2d, a_ext, drag / mass, roll / mass, h)
    if np.ndim(v) == 1:
        return p_next[0], v_next[0]
    return p_next, v_next


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite value in plant computation")


def plant_accel(m: PlantModel, s: VehicleState, u, t: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    _check_finite(u)
    force = u + m.disturbance(t)
    return fleet_accel(s.v, force, m.mass, m.drag_coeff, m.roll_coeff)


def disturbance_sample(m: PlantModel, t) -> np.ndarray:
    return m.disturbance(t)


def step_vehicle(m: PlantModel, s: VehicleState, u, t: float, h: float) -> VehicleState:
    if not h > 0:
        raise ValueError("step must be positive")
    u = np.asarray(u, dtype=float)
    _check_finite(u)
    force = u + m.disturbance(t)
    p, v = rk4_step(s.p, s.v, force, m.mass, m.drag_coeff, m.roll_coeff, h)
    _check_finite(p, v)
    return VehicleState(p, v)
