"""Barrier reconstruction from estimated team state.

An agent cannot evaluate the true coupled barrier h(x) for its neighbors, so
it maintains a conservative stand-in

    h_hat = h(estimate stack) - theta

and drives the gap e = h(x) - h_hat to stay inside a shrinking corridor
rho(t) (the funnel). The corridor is enforced through the logistic-type
transform

    epsilon = 0.5 ln(e / (rho - e))

which blows up at the corridor edges; the adaptive laws below regulate
epsilon instead of e. A second adaptive gain r_hat absorbs unknown bounds on
the estimation-error feedthrough; its effect enters theta's rate through a
smoothed absolute value so the law stays Lipschitz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Relative clamp width keeping the transform finite at the corridor edges.
GUARD = 1e-6


@dataclass(frozen=True)
class FunnelParams:
    """Exponentially shrinking error corridor rho(t) = (rho0-rho_inf)e^(-decay t) + rho_inf."""

    rho0: float
    rho_inf: float
    decay: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rho_inf < self.rho0:
            raise ValueError("funnel widths must satisfy 0 < rho_inf < rho0")
        if self.decay <= 0.0:
            raise ValueError("funnel decay rate must be positive")


@dataclass
class RcbfState:
    """Per-agent reconstruction variables and their adaptation gains.

    Attributes:
        theta: offset subtracted from the barrier evaluated at estimates.
        r_hat: adaptive robustification gain, kept nonnegative.
        error_gain: proportional gain pulling the transformed error to zero.
        leak: decay rate of r_hat.
        adapt_gain: growth rate of r_hat under sustained transformed error.
        smoothing: softening constant for the absolute value in theta's rate.
        funnel: corridor parameters.
    """

    theta: float
    r_hat: float
    error_gain: float
    leak: float
    adapt_gain: float
    smoothing: float
    funnel: FunnelParams

    def __post_init__(self) -> None:
        if self.r_hat < 0.0:
            raise ValueError("r_hat must be nonnegative")
        for name in ("error_gain", "leak", "adapt_gain", "smoothing"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def funnel(params: FunnelParams, t: float) -> tuple[float, float]:
    """Corridor width and its time derivative at time t >= 0."""
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    span = params.rho0 - params.rho_inf
    decayed = span * math.exp(-params.decay * t)
    return decayed + params.rho_inf, -params.decay * decayed


def reconstruction_error(h_true: float, h_hat: float) -> float:
    return h_true - h_hat


def rcbf_value(h_at_estimate: float, theta: float) -> float:
    return h_at_estimate - theta


def _clamp_to_corridor(e: float, rho: float, guard: float) -> tuple[float, bool]:
    lo = guard * rho
    hi = (1.0 - guard) * rho
    if e < lo:
        return lo, True
    if e > hi:
        return hi, True
    return e, False


def transform(e: float, rho: float, guard: float = GUARD) -> tuple[float, bool]:
    """Map the corridor interior (0, rho) onto the reals.

    Returns (epsilon, clamped). Values of e at or beyond the corridor edges
    are clamped to a relative margin `guard` before the map is applied;
    `clamped` reports whether that happened so callers can log the violation.
    """
    if rho <= 0.0:
        raise ValueError("corridor width must be positive")
    if not 0.0 < guard < 0.5:
        raise ValueError("guard must lie in (0, 0.5)")
    e_safe, clamped = _clamp_to_corridor(e, rho, guard)
    return 0.5 * math.log(e_safe / (rho - e_safe)), clamped


def inverse_transform(epsilon: float, rho: float) -> float:
    """Closed-form inverse e = rho / (1 + exp(-2 epsilon)), overflow safe."""
    if rho <= 0.0:
        raise ValueError("corridor width must be positive")
    if epsilon >= 0.0:
        return rho / (1.0 + math.exp(-2.0 * epsilon))
    scale = math.exp(2.0 * epsilon)
    return rho * scale / (1.0 + scale)


def rcbf_rates(
    s: RcbfState,
    t: float,
    e: float,
    grad_norm: float,
    est_rate_norm: float,
    guard: float = GUARD,
) -> tuple[float, float, float]:
    """Adaptation rates (theta_rate, r_hat_rate, chi) at one instant.

    theta's rate has four parts: regulation of the transformed error, a
    feedforward tracking the shrinking corridor, a curvature term from the
    transform, and the smoothed robustification driven by r_hat. e outside
    the corridor is clamped the same way transform() does.
    """
    for name, value in (
        ("t", t),
        ("e", e),
        ("grad_norm", grad_norm),
        ("est_rate_norm", est_rate_norm),
    ):
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value}")
    rho, rho_rate = funnel(s.funnel, t)
    e_safe, _ = _clamp_to_corridor(e, rho, guard)
    epsilon = 0.5 * math.log(e_safe / (rho - e_safe))
    width = e_safe * (rho - e_safe)
    signal = grad_norm + est_rate_norm
    chi = epsilon * rho / (2.0 * width) * signal
    robust = (
        -s.r_hat**2 * signal * chi / math.sqrt(chi**2 * s.r_hat**2 + s.smoothing**2)
    )
    theta_rate = (
        -s.error_gain * (width / rho) * epsilon
        + (e_safe / rho) * rho_rate
        - rho * epsilon / (4.0 * width)
        + robust
    )
    r_hat_rate = s.adapt_gain * abs(epsilon) * rho / (2.0 * width) * signal - s.leak * s.r_hat
    if not (math.isfinite(theta_rate) and math.isfinite(r_hat_rate)):
        raise ValueError("adaptation rates overflowed; gains are too aggressive")
    return theta_rate, r_hat_rate, chi
