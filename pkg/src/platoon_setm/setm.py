"""Switched event-triggered sample-and-hold of the control input.

The trigger function is Psi = ||e||^2 - sigma(t) ||z2||^2 with
e = z2(t_k) - z2(t), and sigma switches to the smaller delta1 while
||z2|| >= epsilon (frequent updates during transients) and to delta2 below
it.  Psi is evaluated once per sampling step, so intervals are multiples of
the step.  A trigger with e = 0 is suppressed: the held value is already
exact, so re-sending it carries no information.  :func:`should_trigger`
is the bare rule; the suppression lives in :func:`trigger_mask`, which is what
the simulator dispatches on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class TriggerOrderError(ValueError):
    pass


@dataclass(frozen=True)
class SetmConfig:
    delta1: float
    delta2: float
    epsilon: float

    def __post_init__(self):
        if not 0 < self.delta1 < self.delta2 < 1:
            raise ValueError(f"need 0 < delta1 < delta2 < 1, got {self.delta1}, {self.delta2}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def sigma_max(self) -> float:
        return max(self.delta1, self.delta2)


def switched_sigma(c: SetmConfig, z2_now) -> float:
    """delta1 while ||z2|| >= epsilon, delta2 below it."""
    mag = float(np.linalg.norm(np.atleast_1d(np.asarray(z2_now, dtype=float))))
    return c.delta1 if mag >= c.epsilon else c.delta2


def trigger_function(c: SetmConfig, held_z2, z2_now):
    """Psi for arrays of independent scalar channels."""
    e = np.asarray(held_z2, dtype=float) - np.asarray(z2_now, dtype=float)
    sigma = np.where(np.abs(z2_now) >= c.epsilon, c.delta1, c.delta2)
    return e * e - sigma * np.asarray(z2_now, dtype=float) ** 2


def trigger_mask(delta1, delta2, epsilon, held_z2, z2_now) -> np.ndarray:
    """Elementwise firing decision for arrays of scalar channels.

    The thresholds may be arrays broadcasting against the channels.
    """
    e = held_z2 - z2_now
    e2 = e * e
    z_sq = z2_now * z2_now
    sigma = np.where(z_sq >= epsilon * epsilon, delta1, delta2)
    return (e2 >= sigma * z_sq) & (e != 0.0)


@dataclass
class SetmState:
    """Hold state of one channel.  ``event_log`` holds the trigger timestamps."""

    last_trigger_time: float = -math.inf
    held_z2: float = 0.0
    held_u: float = 0.0
    event_log: list[float] = field(default_factory=list)

    @property
    def trigger_count(self) -> int:
        return len(self.event_log)


def measurement_error(s: SetmState, z2_now):
    return s.held_z2 - np.asarray(z2_now, dtype=float)


def should_trigger(c: SetmConfig, s: SetmState, z2_now) -> bool:
    e = np.atleast_1d(measurement_error(s, z2_now))
    z = np.atleast_1d(np.asarray(z2_now, dtype=float))
    e2 = float(e @ e)
    psi = e2 - switched_sigma(c, z) * float(z @ z)
    return psi >= 0.0


def on_trigger(s: SetmState, t: float, z2_now, u_new) -> SetmState:
    if not t > s.last_trigger_time:
        raise TriggerOrderError(f"trigger time {t} not after previous trigger {s.last_trigger_time}")
    s.last_trigger_time = t
    s.held_z2 = z2_now
    s.held_u = u_new
    s.event_log.append(t)
    return s


@dataclass(frozen=True)
class InterEventStats:
    count: int
    min_interval: float | None
    mean_interval: float | None
    max_interval: float | None
    reduction_percent: float


def reduction_percent(count: int, horizon: float, base_period: float) -> float:
    samples = round(horizon / base_period)
    return 100.0 * (1.0 - count / samples)


def interevent_stats(events, horizon: float, base_period: float) -> InterEventStats:
    """Trigger statistics of one channel.  ``events`` is a SetmState or a sequence of times."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    times = np.asarray(events.event_log if isinstance(events, SetmState) else events, dtype=float)
    count = int(times.size)
    if count >= 2:
        gaps = np.diff(times)
        lo, mean, hi = float(gaps.min()), float(gaps.mean()), float(gaps.max())
    else:
        lo = mean = hi = None
    return InterEventStats(count, lo, mean, hi, reduction_percent(count, horizon, base_period))


def zeno_lower_bound(c: SetmConfig, rate_bound: float) -> float:
    """T_min = min(sqrt(delta1), sqrt(delta2)) * epsilon / L for ||z2'|| <= L."""
    if rate_bound <= 0:
        return math.inf
    return min(math.sqrt(c.delta1), math.sqrt(c.delta2)) * c.epsilon / rate_bound
