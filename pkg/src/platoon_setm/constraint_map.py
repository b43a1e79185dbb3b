"""Logarithmic diffeomorphism between a bounded interval and the real line.

``forward`` sends a constrained quantity x in (lower, upper) to
s = ln((x - lower) / (upper - x)) together with the transformation gain
gamma = ds/dx = 1/(x - lower) + 1/(upper - x).  ``inverse`` is the scaled
logistic function, so any finite s lands strictly inside the interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConstraintDomainError(ValueError):
    """A value was mapped while on or outside its constraint boundary."""


@dataclass(frozen=True)
class ConstraintBox:
    lower: float
    upper: float
    margin: float = 0.0

    def __post_init__(self):
        for name in ("lower", "upper", "margin"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if not self.lower + 2 * self.margin < self.upper:
            raise ValueError(
                f"empty projected interior: lower + 2*margin = {self.lower + 2 * self.margin} "
                f">= upper = {self.upper}"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, slack: float = 0.0):
        """Strict interior test, optionally relaxed by ``slack`` on both sides."""
        x = np.asarray(x)
        return (x > self.lower - slack) & (x < self.upper + slack)


@dataclass(frozen=True)
class MappedValue:
    s: float | np.ndarray
    gamma: float | np.ndarray


def project(box: ConstraintBox, x):
    """Clamp into [lower + margin, upper - margin]."""
    out = np.clip(x, box.lower + box.margin, box.upper - box.margin)
    return float(out) if np.ndim(out) == 0 else out


def log_map(x, lower, upper):
    """Array form of the forward map; bounds broadcast against ``x``.

    Returns ``(s, gamma)``.  Raises ConstraintDomainError if any element is
    outside the open interval.
    """
    x = np.asarray(x, dtype=float)
    below = x - lower
    above = upper - x
    if not (np.all(below > 0) and np.all(above > 0)):
        bad = np.asarray(x)[~((below > 0) & (above > 0))]
        raise ConstraintDomainError(
            f"value(s) {bad.ravel()[:4]} on or outside the open interval ({lower}, {upper})"
        )
    return np.log(below / above), 1.0 / below + 1.0 / above


def forward(box: ConstraintBox, x) -> MappedValue:
    s, gamma = log_map(x, box.lower, box.upper)
    if s.ndim == 0:
        return MappedValue(float(s), float(gamma))
    return MappedValue(s, gamma)


def logistic(s):
    """Overflow-free 1 / (1 + exp(-s))."""
    s = np.asarray(s, dtype=float)
    # exp of a non-positive argument never overflows
    e = np.exp(-np.abs(s))
    return np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def inverse(box: ConstraintBox, s):
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("inverse mapping requires finite s")
    x = box.lower + box.width * logistic(s)
    # for |s| beyond ~37 the logistic rounds onto a bound; keep the result strictly inside
    x = np.clip(x, np.nextafter(box.lower, box.upper), np.nextafter(box.upper, box.lower))
    return float(x) if x.ndim == 0 else x


def spacing(p_pred, p_self) -> float:
    return float(np.hypot(*(np.asarray(p_pred, float) - np.asarray(p_self, float))))


def spacing_rate(box: ConstraintBox, p_pred, p_self, v_pred, v_self) -> float:
    """Rate of the mapped predecessor distance, gamma_d * (unit relative position) . (relative velocity)."""
    rel_p = np.asarray(p_pred, dtype=float) - np.asarray(p_self, dtype=float)
    dist = float(np.hypot(*rel_p))
    if dist == 0.0:
        raise ConstraintDomainError("coincident positions: spacing direction undefined")
    mapped = forward(box, dist)
    rel_v = np.asarray(v_pred, dtype=float) - np.asarray(v_self, dtype=float)
    return float(mapped.gamma * (rel_p @ rel_v) / dist)
