"""Safety constraints and their smooth-minimum composition.

A team-level safety function is built from primitive quadratic distance
constraints and blended with a log-sum-exp smooth minimum,

    h = -(1/kappa) * ln(sum_k exp(-kappa * b_k)),

which under-approximates min_k b_k by at most ln(K)/kappa, so h >= 0 implies
every primitive constraint holds with margin. The composition is evaluated
over the stacked 2-vector positions of all agents; headings never enter, so
the gradient lives in R^(2*M).

The exponentials are always computed with the max-shift: exp(-kappa*b)
overflows for even moderately negative b (kappa=20 overflows past b < -35),
and a single overflowing term poisons value and gradient alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

CIRCLE_AVOID = "circle_avoid"
PAIR_SEPARATION = "pair_separation"
PAIR_CONNECTIVITY = "pair_connectivity"
_KINDS = (CIRCLE_AVOID, PAIR_SEPARATION, PAIR_CONNECTIVITY)


@dataclass(frozen=True)
class PrimitiveConstraint:
    """One quadratic distance constraint.

    kind:
        circle_avoid      b = |p_i - center|^2 - (safe_radius + radius)^2
        pair_separation   b = |p_i - p_j|^2 - (2 * safe_radius)^2
        pair_connectivity b = distance^2 - |p_i - p_j|^2

    subjects are 0-based agent indices: one for circle_avoid, two distinct
    ones for the pair kinds.
    """

    kind: str
    subjects: tuple[int, ...]
    center: Optional[NDArray[np.float64]] = None
    radius: Optional[float] = None
    safe_radius: Optional[float] = None
    distance: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        subjects = tuple(int(s) for s in self.subjects)
        object.__setattr__(self, "subjects", subjects)
        if any(s < 0 for s in subjects):
            raise ValueError("agent indices must be nonnegative")
        if self.kind == CIRCLE_AVOID:
            if len(subjects) != 1:
                raise ValueError("circle_avoid takes exactly one subject")
            center = np.asarray(self.center, dtype=float)
            if center.shape != (2,):
                raise ValueError("obstacle center must be a 2-vector")
            object.__setattr__(self, "center", center)
            if self.radius is None or self.radius <= 0.0:
                raise ValueError("obstacle radius must be positive")
            if self.safe_radius is None or self.safe_radius <= 0.0:
                raise ValueError("safe_radius must be positive")
        else:
            if len(subjects) != 2 or subjects[0] == subjects[1]:
                raise ValueError("pair constraints take two distinct subjects")
            if self.kind == PAIR_SEPARATION:
                if self.safe_radius is None or self.safe_radius <= 0.0:
                    raise ValueError("safe_radius must be positive")
            else:
                if self.distance is None or self.distance <= 0.0:
                    raise ValueError("connectivity distance must be positive")

    @property
    def threshold_sq(self) -> float:
        """The squared-distance constant the primitive compares against."""
        if self.kind == CIRCLE_AVOID:
            return (self.safe_radius + self.radius) ** 2
        if self.kind == PAIR_SEPARATION:
            return (2.0 * self.safe_radius) ** 2
        return self.distance**2


@dataclass(frozen=True)
class BarrierSpec:
    """An ordered bundle of primitives blended with sharpness kappa."""

    primitives: tuple[PrimitiveConstraint, ...]
    sharpness: float = 20.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if not self.primitives:
            raise ValueError("a barrier needs at least one primitive")
        if not (np.isfinite(self.sharpness) and self.sharpness > 0.0):
            raise ValueError("sharpness must be positive and finite")


def eval_primitive(
    c: PrimitiveConstraint, stacked_positions: NDArray[np.float64]
) -> tuple[float, NDArray[np.float64]]:
    """Value and gradient of one primitive over stacked (2M,) positions."""
    pos = np.asarray(stacked_positions, dtype=float)
    n_agents = pos.size // 2
    if pos.shape != (2 * n_agents,) or max(c.subjects) >= n_agents:
        raise ValueError("subject index out of range of stacked positions")
    grad = np.zeros_like(pos)
    i = c.subjects[0]
    pi = pos[2 * i : 2 * i + 2]
    if c.kind == CIRCLE_AVOID:
        d = pi - c.center
        value = float(d @ d) - c.threshold_sq
        grad[2 * i : 2 * i + 2] = 2.0 * d
        return value, grad
    j = c.subjects[1]
    d = pi - pos[2 * j : 2 * j + 2]
    if c.kind == PAIR_SEPARATION:
        value = float(d @ d) - c.threshold_sq
        grad[2 * i : 2 * i + 2] = 2.0 * d
        grad[2 * j : 2 * j + 2] = -2.0 * d
    else:
        value = c.threshold_sq - float(d @ d)
        grad[2 * i : 2 * i + 2] = -2.0 * d
        grad[2 * j : 2 * j + 2] = 2.0 * d
    return value, grad


def softmin_compose(values: Sequence[float], kappa: float) -> float:
    """Smooth minimum -(1/kappa) ln(sum exp(-kappa b_k)), max-shifted."""
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    b = np.asarray(values, dtype=float)
    if b.size == 0:
        raise ValueError("values must be nonempty")
    m = float(b.min())
    return m - float(np.log(np.exp(-kappa * (b - m)).sum())) / kappa


def softmin_weights(values: Sequence[float], kappa: float) -> NDArray[np.float64]:
    """Blend weights w_k = exp(-kappa b_k) / sum_j exp(-kappa b_j)."""
    b = np.asarray(values, dtype=float)
    e = np.exp(-kappa * (b - b.min()))
    return e / e.sum()


def softmin_gradient(
    gradients: Sequence[NDArray[np.float64]],
    values: Sequence[float],
    kappa: float,
) -> NDArray[np.float64]:
    """Chain rule through the smooth minimum: sum_k w_k grad(b_k)."""
    if len(gradients) != len(values):
        raise ValueError("gradients and values must align")
    w = softmin_weights(values, kappa)
    out = np.zeros_like(np.asarray(gradients[0], dtype=float))
    for wk, gk in zip(w, gradients):
        out += wk * np.asarray(gk, dtype=float)
    return out


def barrier_eval(
    spec: BarrierSpec, stacked_positions: NDArray[np.float64]
) -> tuple[float, NDArray[np.float64]]:
    """Composed barrier value and analytic gradient at stacked positions."""
    values = []
    grads = []
    for prim in spec.primitives:
        v, g = eval_primitive(prim, stacked_positions)
        values.append(v)
        grads.append(g)
    h = softmin_compose(values, spec.sharpness)
    return h, softmin_gradient(grads, values, spec.sharpness)


def finite_diff_gradient(
    h: Callable[[NDArray[np.float64]], float],
    point: NDArray[np.float64],
    step: float,
) -> NDArray[np.float64]:
    """Central-difference gradient, one coordinate at a time (test oracle)."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    x = np.asarray(point, dtype=float)
    grad = np.empty_like(x)
    for k in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[k] += step
        lo[k] -= step
        grad[k] = (h(hi) - h(lo)) / (2.0 * step)
    return grad
