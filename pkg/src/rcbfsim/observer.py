"""Per-agent adaptive estimator banks.

Each controllable agent runs one estimator per team member (itself included,
which keeps the data layout uniform). The estimator blends disagreement with
neighboring agents' estimates and, where the topology grants access, the
measured state:

    xi    = sum_j a_ij (xhat_i - xhat_j) + b_il (xhat_i - x_l)
    xhat' = drift(xhat) - gain * xi
    gain' = 2 xi^T P xi - leak * gain

The gain adapts upward whenever estimates disagree and leaks back down, so no
global Lipschitz bound needs to be known in advance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np
from numpy.typing import NDArray


class ObserverError(ValueError):
    pass


@dataclass
class ObserverBank:
    """All estimates owned by one controllable agent.

    Attributes:
        owner: 0-based id of the owning agent.
        estimates: (M, n) array, row l is the owner's estimate of agent l.
        gains: (M,) nonnegative adaptive gains, one per target.
        weights: (M, n, n) symmetric positive definite weighting matrices.
        leaks: (M,) positive leak rates.
        neighbor_ids: controllable agents adjacent to the owner.
        access: (M,) 0/1 direct-measurement weights b, where access[owner]
            is 1 and access[l] is 1 exactly when the owner can read agent
            l's true state.
    """

    owner: int
    estimates: NDArray[np.float64]
    gains: NDArray[np.float64]
    weights: NDArray[np.float64]
    leaks: NDArray[np.float64]
    neighbor_ids: tuple[int, ...]
    access: NDArray[np.float64]

    def __post_init__(self) -> None:
        self.estimates = np.asarray(self.estimates, dtype=float)
        self.gains = np.asarray(self.gains, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.leaks = np.asarray(self.leaks, dtype=float)
        self.access = np.asarray(self.access, dtype=float)
        m, n = self.estimates.shape
        if self.gains.shape != (m,) or self.leaks.shape != (m,) or self.access.shape != (m,):
            raise ObserverError("per-target arrays must have one entry per agent")
        if self.weights.shape != (m, n, n):
            raise ObserverError(f"weights must be ({m}, {n}, {n})")
        if np.any(self.gains < 0.0):
            raise ObserverError("gains must be nonnegative")
        if np.any(self.leaks <= 0.0):
            raise ObserverError("leak rates must be positive")
        for w in self.weights:
            if not np.allclose(w, w.T, atol=1e-12):
                raise ObserverError("weight matrices must be symmetric")
            try:
                np.linalg.cholesky(w)
            except np.linalg.LinAlgError as exc:
                raise ObserverError("weight matrices must be positive definite") from exc

    @property
    def n_targets(self) -> int:
        return self.estimates.shape[0]


def innovation(
    bank: ObserverBank,
    target: int,
    neighbor_estimates: Mapping[int, NDArray[np.float64]],
    measurement: Optional[NDArray[np.float64]] = None,
) -> NDArray[np.float64]:
    """Disagreement signal xi for one (owner, target) estimator.

    Args:
        bank: the owner's estimator bank.
        target: 0-based target agent l.
        neighbor_estimates: estimate of agent l held by each adjacency
            neighbor j of the owner; keys must be exactly the owner's
            neighbor set.
        measurement: the true state of agent l; must be supplied iff the
            owner has direct access (access[l] == 1).
    """
    i = bank.owner
    own = bank.estimates[target]
    xi = np.zeros_like(own)
    for j in bank.neighbor_ids:
        if j not in neighbor_estimates:
            raise ObserverError(
                f"agent {i} is missing the estimate of agent {target} held by neighbor {j}"
            )
        xi += own - np.asarray(neighbor_estimates[j], dtype=float)
    extra = set(neighbor_estimates) - set(bank.neighbor_ids)
    if extra:
        raise ObserverError(
            f"agent {i} received estimates of agent {target} from non-neighbors {sorted(extra)}"
        )
    has_access = bank.access[target] == 1.0
    if has_access and measurement is None:
        raise ObserverError(
            f"agent {i} has direct access to agent {target} but no measurement was supplied"
        )
    if not has_access and measurement is not None:
        raise ObserverError(
            f"agent {i} has no direct access to agent {target}; unexpected measurement"
        )
    if has_access:
        xi += own - np.asarray(measurement, dtype=float)
    return xi


def observer_rates(
    bank: ObserverBank,
    target: int,
    xi: NDArray[np.float64],
    drift: Callable[[NDArray[np.float64]], NDArray[np.float64]],
) -> tuple[NDArray[np.float64], float]:
    """Estimate and gain rates for one (owner, target) estimator."""
    est = bank.estimates[target]
    est_rate = np.asarray(drift(est), dtype=float) - bank.gains[target] * xi
    gain_rate = 2.0 * float(xi @ bank.weights[target] @ xi) - bank.leaks[target] * bank.gains[target]
    return est_rate, float(gain_rate)


def assemble_estimate_vector(
    bank: ObserverBank, own_state: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Stacked team state as seen by the owner.

    Slot `owner` carries the owner's true state; every other slot carries the
    corresponding estimate.
    """
    stacked = bank.estimates.copy()
    stacked[bank.owner] = np.asarray(own_state, dtype=float)
    return stacked.reshape(-1)


def ultimate_bound_diagnostic(
    lambda_min: float, p_min: float, sigma: float, xi_sum_bound: float
) -> float:
    """Asymptotic estimation-error radius sqrt(Xi / (lambda_min p_min sigma)).

    Purely a reporting aid: xi_sum_bound folds in quantities (input-effect
    and gain bounds) that are not computable online and must be supplied.
    """
    for name, value in (
        ("lambda_min", lambda_min),
        ("p_min", p_min),
        ("sigma", sigma),
        ("xi_sum_bound", xi_sum_bound),
    ):
        if value <= 0.0:
            raise ValueError(f"{name} must be positive")
    return float(np.sqrt(xi_sum_bound / (lambda_min * p_min * sigma)))
