"""Small dense quadratic programs and safety-constraint assembly.

The control filters solved here are tiny (two decision variables, a handful
of constraints), so the solver enumerates candidate active sets exhaustively
and solves each KKT equality system directly. That trades asymptotic speed,
which is irrelevant at this size, for exactness and bit-level determinism.

Constraint convention throughout: a'v >= b.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

MAX_VARIABLES = 8
MAX_CONSTRAINTS = 16
DEFAULT_SLACK_PENALTY = 1e6

# Acceptance slop on constraint rows; KKT certificate must be tighter.
PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-10
KKT_TOL = 1e-8


class Infeasible(Exception):
    """No point satisfies all general and box constraints."""


@dataclass(frozen=True)
class QpProblem:
    """Minimize 0.5 (v - nominal)' weight (v - nominal) subject to rows a'v >= b
    and box lower <= v <= upper (entries may be infinite)."""

    weight: NDArray[np.float64]
    nominal: NDArray[np.float64]
    general_constraints: tuple[tuple[NDArray[np.float64], float], ...]
    lower: NDArray[np.float64]
    upper: NDArray[np.float64]

    def __post_init__(self) -> None:
        weight = np.asarray(self.weight, dtype=float)
        nominal = np.asarray(self.nominal, dtype=float)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        m = nominal.shape[0]
        if weight.shape != (m, m):
            raise ValueError("weight matrix shape must match the nominal input")
        if lower.shape != (m,) or upper.shape != (m,):
            raise ValueError("box bound shapes must match the nominal input")
        if not np.allclose(weight, weight.T, atol=1e-12):
            raise ValueError("weight matrix must be symmetric")
        try:
            np.linalg.cholesky(weight)
        except np.linalg.LinAlgError as exc:
            raise ValueError("weight matrix must be positive definite") from exc
        if np.any(lower > upper):
            raise ValueError("box lower bounds must not exceed upper bounds")
        rows = []
        for a, b in self.general_constraints:
            a = np.asarray(a, dtype=float)
            if a.shape != (m,):
                raise ValueError("constraint row length must match the nominal input")
            rows.append((a, float(b)))
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "nominal", nominal)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "general_constraints", tuple(rows))

    @property
    def n_variables(self) -> int:
        return self.nominal.shape[0]


@dataclass(frozen=True)
class QpSolution:
    argmin: NDArray[np.float64]
    active_set: tuple[int, ...]
    slack_used: float
    kkt_residual: float


def _constraint_rows(
    nominal: NDArray, general: Sequence, lower: NDArray, upper: NDArray
) -> tuple[NDArray, NDArray, list[int]]:
    """All rows a'v >= b: general first, then finite lower, then finite
    (negated) upper bounds.

    Also returns each emitted row's index in the public numbering (general
    0..G-1, lower bounds G..G+m-1, upper bounds G+m..G+2m-1); infinite
    bounds emit no row, so they can never appear in an active set.
    """
    m = nominal.shape[0]
    n_general = len(general)
    rows_a = [np.asarray(a, dtype=float) for a, _ in general]
    rows_b = [float(b) for _, b in general]
    labels = list(range(n_general))
    eye = np.eye(m)
    for i in range(m):
        if math.isfinite(lower[i]):
            rows_a.append(eye[i])
            rows_b.append(float(lower[i]))
            labels.append(n_general + i)
    for i in range(m):
        if math.isfinite(upper[i]):
            rows_a.append(-eye[i])
            rows_b.append(-float(upper[i]))
            labels.append(n_general + m + i)
    if rows_a:
        return np.array(rows_a), np.array(rows_b), labels
    return np.zeros((0, m)), np.zeros(0), labels


def _kkt_residual(
    weight: NDArray,
    nominal: NDArray,
    rows_a: NDArray,
    rows_b: NDArray,
    v: NDArray,
    multipliers: NDArray,
) -> float:
    stationarity = weight @ (v - nominal)
    if rows_a.size:
        stationarity = stationarity - rows_a.T @ multipliers
    residual = float(np.max(np.abs(stationarity))) if stationarity.size else 0.0
    if rows_a.size:
        margins = rows_a @ v - rows_b
        residual = max(residual, float(np.max(np.maximum(-margins, 0.0))))
        residual = max(residual, float(np.max(np.maximum(-multipliers, 0.0))))
        residual = max(residual, float(np.max(np.abs(multipliers * margins))))
    return residual


def _solve_rows(
    weight: NDArray, nominal: NDArray, rows_a: NDArray, rows_b: NDArray
) -> tuple[NDArray, NDArray, float]:
    """Exact minimizer over rows a'v >= b by active-set enumeration.

    Candidate sets are visited smallest first, then lexicographically; the
    first candidate passing primal feasibility and dual nonnegativity is the
    unique optimum (the objective is strictly convex). Returns (argmin,
    multipliers over all rows, kkt_residual).
    """
    m = nominal.shape[0]
    n_rows = rows_a.shape[0]
    w_nom = weight @ nominal
    for size in range(0, min(m, n_rows) + 1):
        for subset in itertools.combinations(range(n_rows), size):
            if size == 0:
                v = nominal.copy()
                lam_s = np.zeros(0)
            else:
                # Bordered KKT system: enforcing the candidate rows as
                # equalities directly keeps v accurate even when the
                # multipliers are huge (slack penalties push them to the
                # penalty scale, and reconstructing v from W^-1 A' lambda
                # would cancel catastrophically).
                a_s = rows_a[list(subset)]
                kkt = np.zeros((m + size, m + size))
                kkt[:m, :m] = weight
                kkt[:m, m:] = -a_s.T
                kkt[m:, :m] = a_s
                rhs = np.concatenate([w_nom, rows_b[list(subset)]])
                try:
                    solution = np.linalg.solve(kkt, rhs)
                except np.linalg.LinAlgError:
                    continue  # linearly dependent candidate rows
                v = solution[:m]
                lam_s = solution[m:]
                dual_scale = max(1.0, float(np.max(np.abs(lam_s))))
                if np.any(lam_s < -DUAL_TOL * dual_scale):
                    continue
            if n_rows:
                margins = rows_a @ v - rows_b
                primal_scale = np.maximum(
                    1.0, np.maximum(np.abs(rows_b), np.abs(margins + rows_b))
                )
                if np.any(margins < -PRIMAL_TOL * primal_scale):
                    continue
            multipliers = np.zeros(n_rows)
            if size:
                multipliers[list(subset)] = np.maximum(lam_s, 0.0)
            residual = _kkt_residual(weight, nominal, rows_a, rows_b, v, multipliers)
            return v, multipliers, residual
    raise Infeasible("no input satisfies the constraint rows and box bounds")


def solve_qp(p: QpProblem) -> QpSolution:
    """Exact solution of the filter QP. Raises Infeasible when the general
    rows conflict with the box; the caller decides whether to relax."""
    if p.n_variables > MAX_VARIABLES:
        raise ValueError(f"at most {MAX_VARIABLES} decision variables supported")
    rows_a, rows_b, labels = _constraint_rows(
        p.nominal, p.general_constraints, p.lower, p.upper
    )
    if rows_a.shape[0] > MAX_CONSTRAINTS:
        raise ValueError(f"at most {MAX_CONSTRAINTS} constraint rows supported")
    v, multipliers, residual = _solve_rows(p.weight, p.nominal, rows_a, rows_b)
    active = tuple(
        labels[i]
        for i in range(rows_a.shape[0])
        if multipliers[i] > 0.0 or abs(rows_a[i] @ v - rows_b[i]) <= PRIMAL_TOL
    )
    return QpSolution(argmin=v, active_set=active, slack_used=0.0, kkt_residual=residual)


def solve_qp_with_slack(p: QpProblem, penalty: float = DEFAULT_SLACK_PENALTY) -> QpSolution:
    """Relaxed solve: one shared slack s >= 0 is added to every general row
    (a'v + s >= b) with penalty*s^2 added to the objective. Box bounds are
    never relaxed.

    A feasible problem short-circuits to the strict solution with zero slack;
    the quadratic penalty would otherwise shave lambda/(2 penalty) off every
    active row for no benefit.
    """
    if penalty <= 0.0:
        raise ValueError("slack penalty must be positive")
    if p.n_variables > MAX_VARIABLES:
        raise ValueError(f"at most {MAX_VARIABLES} decision variables supported")
    try:
        return solve_qp(p)
    except Infeasible:
        pass
    m = p.n_variables
    n_general = len(p.general_constraints)
    weight = np.zeros((m + 1, m + 1))
    weight[:m, :m] = p.weight
    weight[m, m] = 2.0 * penalty
    nominal = np.concatenate([p.nominal, [0.0]])
    general = tuple(
        (np.concatenate([a, [1.0]]), b) for a, b in p.general_constraints
    )
    lower = np.concatenate([p.lower, [0.0]])
    upper = np.concatenate([p.upper, [np.inf]])
    rows_a, rows_b, labels = _constraint_rows(nominal, general, lower, upper)
    if rows_a.shape[0] > MAX_CONSTRAINTS + 1:
        raise ValueError(f"at most {MAX_CONSTRAINTS} constraint rows supported")
    try:
        v, multipliers, residual = _solve_rows(weight, nominal, rows_a, rows_b)
    except Infeasible as exc:
        # With the slack the general rows are always satisfiable, so only an
        # empty box can land here, and construction already rejects that.
        raise ValueError("input box bounds admit no point") from exc

    def _original_index(label: int) -> Optional[int]:
        # Augmented numbering has one extra variable; the slack's own bound
        # rows are internal and everything past them shifts down by one.
        slack_lower = n_general + m
        if label < slack_lower:
            return label
        if label == slack_lower:
            return None
        return label - 1

    active = []
    for i in range(rows_a.shape[0]):
        if multipliers[i] > 0.0 or abs(rows_a[i] @ v - rows_b[i]) <= PRIMAL_TOL:
            orig = _original_index(labels[i])
            if orig is not None:
                active.append(orig)
    return QpSolution(
        argmin=v[:m],
        active_set=tuple(active),
        slack_used=float(v[m]),
        kkt_residual=residual,
    )


@dataclass(frozen=True)
class ClassKappa:
    """Strictly increasing odd function through the origin.

    kind "linear": gain * v. kind "odd_power": gain * v**power with odd
    integer power, which extends to negative arguments with the right sign.
    """

    kind: str
    gain: float = 1.0
    power: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "odd_power"):
            raise ValueError("kind must be 'linear' or 'odd_power'")
        if self.gain <= 0.0:
            raise ValueError("gain must be positive")
        if self.kind == "odd_power" and (self.power < 1 or self.power % 2 == 0):
            raise ValueError("power must be a positive odd integer")


def eval_class_kappa(alpha: ClassKappa, v: float) -> float:
    if alpha.kind == "linear":
        return alpha.gain * v
    return alpha.gain * v**alpha.power


def assemble_distributed_constraint(
    grad_own: NDArray[np.float64],
    grads_others: Mapping[int, NDArray[np.float64]],
    est_rates: Mapping[int, NDArray[np.float64]],
    theta_rate: float,
    h_hat: float,
    alpha: ClassKappa,
    drift_value: NDArray[np.float64],
    actuation_value: NDArray[np.float64],
) -> tuple[NDArray[np.float64], float]:
    """One row a'u >= b keeping the reconstructed barrier nonincreasing no
    faster than the class-kappa margin allows.

    grad_own is the barrier gradient in the agent's own state slots;
    grads_others and est_rates are keyed by estimated agent and paired
    entry-wise. The estimate motion and the offset adaptation enter the
    right-hand side because the agent cannot influence them.
    """
    grad_own = np.asarray(grad_own, dtype=float)
    drift_value = np.asarray(drift_value, dtype=float)
    actuation_value = np.asarray(actuation_value, dtype=float)
    n = grad_own.shape[0]
    if drift_value.shape != (n,):
        raise ValueError("drift value length must match the own-state gradient")
    if actuation_value.ndim != 2 or actuation_value.shape[0] != n:
        raise ValueError("actuation matrix rows must match the own-state gradient")
    if set(grads_others) != set(est_rates):
        raise ValueError("estimate gradients and estimate rates must cover the same agents")
    a = actuation_value.T @ grad_own
    b = -eval_class_kappa(alpha, h_hat) - float(grad_own @ drift_value) + theta_rate
    for l, grad in grads_others.items():
        grad = np.asarray(grad, dtype=float)
        rate = np.asarray(est_rates[l], dtype=float)
        if grad.shape != rate.shape:
            raise ValueError(
                f"gradient and rate for estimated agent {l} must have equal length"
            )
        b -= float(grad @ rate)
    return a, float(b)


def assemble_centralized_constraint(
    grads: Sequence[NDArray[np.float64]],
    drift_values: Sequence[NDArray[np.float64]],
    actuation_values: Sequence[Optional[NDArray[np.float64]]],
    alpha: ClassKappa,
    h_value: float,
) -> tuple[NDArray[np.float64], float]:
    """Joint row over the stacked team input for the all-knowing baseline.

    Every agent must expose an input channel; an agent with actuation None
    has no input to include, which makes the joint filter inapplicable.
    """
    if not len(grads) == len(drift_values) == len(actuation_values):
        raise ValueError("per-agent sequences must have equal length")
    blocks = []
    b = -eval_class_kappa(alpha, h_value)
    for i, (grad, f_val, g_val) in enumerate(zip(grads, drift_values, actuation_values)):
        if g_val is None:
            raise ValueError(
                f"agent {i} accepts no control input; the joint filter needs every "
                "agent to be controllable"
            )
        grad = np.asarray(grad, dtype=float)
        f_val = np.asarray(f_val, dtype=float)
        g_val = np.asarray(g_val, dtype=float)
        if f_val.shape != grad.shape or g_val.shape[0] != grad.shape[0]:
            raise ValueError(f"agent {i} gradient, drift, and actuation shapes disagree")
        blocks.append(g_val.T @ grad)
        b -= float(grad @ f_val)
    return np.concatenate(blocks), float(b)
