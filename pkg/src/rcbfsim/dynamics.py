"""Control-affine agent models and a fixed-step integrator.

The differential-drive robot used by the simulator controls a reference point
offset from the wheel axle, which makes the velocity map square and invertible
and lets a plain proportional goto law be pushed through the model inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

TWO_PI = 2.0 * math.pi


class NonFiniteValueError(ValueError):
    """A state or rate stopped being finite during integration.

    Attributes:
        where: "state" or "rate".
        index: first offending component.
    """

    def __init__(self, where: str, index: int, value: float):
        self.where = where
        self.index = index
        self.value = value
        super().__init__(f"non-finite {where} at component {index}: {value!r}")


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - angle) % TWO_PI


@dataclass(frozen=True)
class UnicycleState:
    """Planar pose; heading is stored wrapped to (-pi, pi]."""

    position: NDArray[np.float64]
    heading: float

    def __post_init__(self) -> None:
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (2,):
            raise ValueError(f"position must be a 2-vector, got shape {pos.shape}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))


@dataclass(frozen=True)
class InputBounds:
    """Symmetric speed limits |v| <= v_max, |w| <= w_max."""

    v_max: float
    w_max: float

    def __post_init__(self) -> None:
        if not (self.v_max > 0.0 and self.w_max > 0.0):
            raise ValueError("input bounds must be strictly positive")

    def clamp(self, u: NDArray[np.float64]) -> NDArray[np.float64]:
        lim = np.array([self.v_max, self.w_max])
        return np.clip(u, -lim, lim)


@dataclass(frozen=True)
class ControlAffineModel:
    """System xdot = drift(x) + actuation(x) @ u."""

    state_dim: int
    input_dim: int
    drift: Callable[[NDArray[np.float64]], NDArray[np.float64]]
    actuation: Callable[[NDArray[np.float64]], NDArray[np.float64]]

    def rate(self, state: NDArray[np.float64], u: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.drift(state) + self.actuation(state) @ u


def velocity_map(heading: float, offset: float) -> NDArray[np.float64]:
    """Map from (v, w) to the offset point's planar velocity.

    [[cos th, -offset*sin th],
     [sin th,  offset*cos th]]

    Its determinant is offset for every heading, so it is always invertible.
    """
    c, s = math.cos(heading), math.sin(heading)
    return np.array([[c, -offset * s], [s, offset * c]])


def velocity_map_inverse(heading: float, offset: float) -> NDArray[np.float64]:
    c, s = math.cos(heading), math.sin(heading)
    return np.array([[c, s], [-s / offset, c / offset]])


def unicycle_model(offset: float) -> ControlAffineModel:
    """Differential-drive model with state (x, y, heading), input (v, w).

    Args:
        offset: distance between the controlled point and the wheel axle,
            strictly positive (zero would make the velocity map singular).
    """
    if offset <= 0.0:
        raise ValueError("offset must be positive")

    def drift(state: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.zeros(3)

    def actuation(state: NDArray[np.float64]) -> NDArray[np.float64]:
        g = np.zeros((3, 2))
        g[:2, :] = velocity_map(float(state[2]), offset)
        g[2, 1] = 1.0
        return g

    return ControlAffineModel(3, 2, drift, actuation)


def _require_finite(values: NDArray[np.float64], where: str) -> NDArray[np.float64]:
    if not np.all(np.isfinite(values)):
        index = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonFiniteValueError(where, index, float(values.flat[index]))
    return values


def rk4_step(
    field: Callable[[float, NDArray[np.float64]], NDArray[np.float64]],
    state: NDArray[np.float64],
    t: float,
    dt: float,
) -> NDArray[np.float64]:
    """One classical fourth-order Runge-Kutta step.

    Deterministic: identical inputs give bit-identical outputs. Raises
    NonFiniteValueError (with the offending component index) if the state or
    any stage rate is not finite.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    z = _require_finite(np.asarray(state, dtype=float), "state")

    def rate(tt: float, zz: NDArray[np.float64]) -> NDArray[np.float64]:
        return _require_finite(np.asarray(field(tt, zz), dtype=float), "rate")

    k1 = rate(t, z)
    k2 = rate(t + 0.5 * dt, z + 0.5 * dt * k1)
    k3 = rate(t + 0.5 * dt, z + 0.5 * dt * k2)
    k4 = rate(t + dt, z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def nominal_goto(
    state: UnicycleState,
    goal: NDArray[np.float64],
    gain: float,
    bounds: InputBounds,
    offset: float,
) -> NDArray[np.float64]:
    """Proportional goto law pushed through the inverse velocity map.

    u = clamp(G(heading)^-1 * gain * (goal - position)), component-wise to
    bounds. Returns exactly zero at the goal.
    """
    if gain <= 0.0:
        raise ValueError("gain must be positive")
    delta = np.asarray(goal, dtype=float) - state.position
    if not np.any(delta):
        return np.zeros(2)
    u = velocity_map_inverse(state.heading, offset) @ (gain * delta)
    return bounds.clamp(u)
