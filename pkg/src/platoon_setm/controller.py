"""Adaptive backstepping in the mapped velocity coordinates.

Position layer: alpha_i = -k1 * z1_i, with the analytic derivative
alpha_dot_i = -k1 * sum_j a_ij (v_i - v_j).
Velocity layer: z2_i = s_v(v_i) - alpha_i and
u_i = m_i * (-k2 * z2_i - f_hat_i + alpha_dot_i).

Longitudinal and lateral axes are independent channels; every array below
has shape (n, 2) unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from platoon_setm.constraint_map import ConstraintBox, log_map
from platoon_setm.graph import FormationGraph, formation_error, relative_rate


class GainConditionError(ValueError):
    pass


def k2_floor(sigma: float) -> float:
    """Smallest admissible k2 (exclusive) for a trigger threshold sigma = max(delta1, delta2)."""
    return 0.5 + 0.5 * sigma


@dataclass(frozen=True)
class ControllerGains:
    """Backstepping gains for one vehicle.

    ``sigma`` is max(delta1, delta2) of the trigger configuration the gains
    will run with.  The default of 1 is the supremum allowed for the trigger
    thresholds, so k2 > 1 is always safe.
    """

    k1: float
    k2: float
    sigma: float = 1.0

    def __post_init__(self):
        if not self.k1 > 0:
            raise GainConditionError(f"k1 must be positive, got {self.k1}")
        if not self.k2 > k2_floor(self.sigma):
            raise GainConditionError(
                f"k2 = {self.k2} must exceed 1/2 + sigma/2 = {k2_floor(self.sigma)} (sigma = {self.sigma})"
            )


@dataclass(frozen=True)
class ControlFrame:
    z1: np.ndarray
    alpha: np.ndarray
    s_v: np.ndarray
    gamma_v: np.ndarray
    z2: np.ndarray
    alpha_dot: np.ndarray
    f_hat: np.ndarray
    u: np.ndarray


class FleetFrame(NamedTuple):
    z1: np.ndarray
    alpha: np.ndarray
    alpha_dot: np.ndarray
    v_proj: np.ndarray
    s_v: np.ndarray
    gamma_v: np.ndarray
    z2: np.ndarray


def virtual_law(g: ControllerGains, z1) -> np.ndarray:
    return -g.k1 * np.asarray(z1, dtype=float)


def alpha_rate(g: ControllerGains, graph: FormationGraph, i: int, velocities) -> np.ndarray:
    if not 0 <= i < graph.n:
        raise IndexError(f"vehicle index {i} out of range for {graph.n} vehicles")
    v = np.asarray(velocities, dtype=float)
    if v.shape != (graph.n, 2):
        raise ValueError(f"expected velocities of shape ({graph.n}, 2), got {v.shape}")
    return -g.k1 * relative_rate(graph, v)[i]


def control_law(g: ControllerGains, z2, f_hat, alpha_dot, g_inv):
    if not (np.all(np.isfinite(g_inv)) and np.all(np.asarray(g_inv) > 0)):
        raise ValueError(f"inverse input gain must be finite and positive, got {g_inv}")
    return g_inv * (-g.k2 * np.asarray(z2) - np.asarray(f_hat) + np.asarray(alpha_dot))


def fleet_frame(k1, graph: FormationGraph, positions, velocities, lower, upper, margin) -> FleetFrame:
    """Both backstepping layers for every vehicle at once, up to but excluding u.

    ``k1`` has shape (n,); ``lower``, ``upper`` and ``margin`` are per-axis
    velocity bounds of shape (2,).
    """
    k1 = np.asarray(k1, dtype=float)[:, None]
    z1 = formation_error(graph, positions)
    alpha = -k1 * z1
    alpha_dot = -k1 * relative_rate(graph, velocities)
    v_proj = np.clip(velocities, lower + margin, upper - margin)
    s_v, gamma_v = log_map(v_proj, lower, upper)
    return FleetFrame(z1, alpha, alpha_dot, v_proj, s_v, gamma_v, s_v - alpha)


def fleet_control(k2, z2, f_hat, alpha_dot, mass) -> np.ndarray:
    return np.asarray(mass, dtype=float)[:, None] * (
        -np.asarray(k2, dtype=float)[:, None] * z2 - f_hat + alpha_dot
    )


def velocity_bounds(boxes: Sequence[ConstraintBox]):
    """Stack per-axis boxes into (lower, upper, margin) arrays."""
    lower = np.array([b.lower for b in boxes], dtype=float)
    upper = np.array([b.upper for b in boxes], dtype=float)
    margin = np.array([b.margin for b in boxes], dtype=float)
    return lower, upper, margin


def compose_frame(gains: ControllerGains, graph: FormationGraph, i: int, positions, velocities,
                  boxes: Sequence[ConstraintBox], nets=None, g_inv: float = 1.0) -> ControlFrame:
    """Frame of vehicle ``i``: the control that would be applied if it triggered now.

    ``boxes`` are the (longitudinal, lateral) velocity boxes and ``nets`` the
    matching per-axis RBF networks (None means f_hat = 0).  Each network takes
    the vehicle's own velocity on its axis as input.
    """
    if not 0 <= i < graph.n:
        raise IndexError(f"vehicle index {i} out of range for {graph.n} vehicles")
    lower, upper, margin = velocity_bounds(boxes)
    k1 = np.full(graph.n, gains.k1)
    fr = fleet_frame(k1, graph, positions, velocities, lower, upper, margin)
    v_i = np.asarray(velocities, dtype=float)[i]
    if nets is None:
        f_hat = np.zeros(2)
    else:
        f_hat = np.array([float(net.approximate(v_i[a:a + 1])[0]) for a, net in enumerate(nets)])
    u = control_law(gains, fr.z2[i], f_hat, fr.alpha_dot[i], g_inv)
    return ControlFrame(z1=fr.z1[i], alpha=fr.alpha[i], s_v=fr.s_v[i], gamma_v=fr.gamma_v[i],
                        z2=fr.z2[i], alpha_dot=fr.alpha_dot[i], f_hat=f_hat, u=u)
