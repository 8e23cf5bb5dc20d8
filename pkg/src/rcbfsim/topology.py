"""Communication topology for mixed controllable/uncontrollable agent teams.

The controllable agents form an undirected graph; uncontrollable agents are
attached through one-way observation links (a controllable agent can sense an
uncontrollable one, never the other way around). This module builds the
Laplacian and the per-target coupling matrices the estimator design relies on,
and provides a small dense eigenvalue routine so spectral conditions can be
checked without pulling in a full linear-algebra stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray


class TopologyError(ValueError):
    """Raised when a topology violates a structural requirement."""


@dataclass(frozen=True)
class Topology:
    """Undirected controllable-agent graph plus observation links.

    Attributes:
        n_controllable: number of controllable agents (N).
        n_uncontrollable: number of uncontrollable agents (V).
        adjacency: (N, N) symmetric 0/1 matrix, zero diagonal.
        observation_links: (N, V) 0/1 matrix; entry (i, l) is 1 when
            controllable agent i can measure uncontrollable agent l's state.
    """

    n_controllable: int
    n_uncontrollable: int
    adjacency: NDArray[np.float64]
    observation_links: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        n, v = self.n_controllable, self.n_uncontrollable
        if n < 0 or v < 0:
            raise TopologyError("agent counts must be nonnegative")
        adj = np.asarray(self.adjacency, dtype=float)
        if adj.shape != (n, n):
            raise TopologyError(f"adjacency must be {(n, n)}, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise TopologyError("adjacency must be symmetric")
        if n and np.any(np.diag(adj) != 0.0):
            raise TopologyError("self edges are not allowed")
        if not np.all((adj == 0.0) | (adj == 1.0)):
            raise TopologyError("adjacency entries must be 0 or 1")
        links = self.observation_links
        links = np.zeros((n, v)) if links is None else np.asarray(links, dtype=float)
        if links.shape != (n, v):
            raise TopologyError(f"observation_links must be {(n, v)}, got {links.shape}")
        if not np.all((links == 0.0) | (links == 1.0)):
            raise TopologyError("observation_links entries must be 0 or 1")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "observation_links", links)
        if not self.is_connected():
            raise TopologyError("controllable communication graph must be connected")
        uncovered = [l for l in range(v) if links[:, l].sum() < 1]
        if uncovered:
            raise TopologyError(
                "every uncontrollable agent needs at least one controllable "
                f"observer; agents {[n + l + 1 for l in uncovered]} have none"
            )

    @property
    def n_total(self) -> int:
        return self.n_controllable + self.n_uncontrollable

    def is_connected(self) -> bool:
        """Breadth-first connectivity check on the controllable subgraph."""
        n = self.n_controllable
        if n <= 1:
            return True
        seen = np.zeros(n, dtype=bool)
        queue = [0]
        seen[0] = True
        while queue:
            i = queue.pop()
            for j in np.flatnonzero(self.adjacency[i]):
                if not seen[j]:
                    seen[j] = True
                    queue.append(int(j))
        return bool(seen.all())

    def access_row(self, i: int) -> NDArray[np.float64]:
        """Measurement-access weights b_il of controllable agent i.

        Entry l is 1 when agent i can read agent l's true state directly:
        its own state, a controllable neighbor, or a linked uncontrollable
        agent.
        """
        n = self.n_controllable
        row = np.empty(self.n_total)
        row[:n] = self.adjacency[i]
        row[i] = 1.0
        row[n:] = self.observation_links[i]
        return row


@dataclass(frozen=True)
class SpectralCertificate:
    """Extreme eigenvalues of a coupling matrix.

    lambda_min <= lambda_max always holds; positivity of lambda_min is a
    property of valid coupling matrices and is checked where the estimator
    gain condition is evaluated, not here, so indefinite matrices can still
    be summarized.
    """

    lambda_min: float
    lambda_max: float
    matrix_index: Optional[int] = None

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lambda_min) and np.isfinite(self.lambda_max)):
            raise ValueError("eigenvalues must be finite")
        if self.lambda_min > self.lambda_max:
            raise ValueError("lambda_min must not exceed lambda_max")

    @property
    def is_positive_definite(self) -> bool:
        return self.lambda_min > 0.0


def laplacian(topology: Topology) -> NDArray[np.float64]:
    """Graph Laplacian L = D - A of the controllable subgraph."""
    adj = topology.adjacency
    return np.diag(adj.sum(axis=1)) - adj


def h_matrix(topology: Topology, j: int) -> NDArray[np.float64]:
    """Coupling matrix L + B_j for target agent j (0-based, any agent).

    B_j is diagonal with b_ij = a_ij for i != j and b_jj = 1; for an
    uncontrollable target the entries come from the observation links.
    """
    n = topology.n_controllable
    if not 0 <= j < topology.n_total:
        raise TopologyError(f"target index {j} out of range for {topology.n_total} agents")
    b = np.array([topology.access_row(i)[j] for i in range(n)])
    return laplacian(topology) + np.diag(b)


def extreme_eigenvalues(
    m: NDArray[np.float64], matrix_index: Optional[int] = None
) -> SpectralCertificate:
    """Smallest and largest eigenvalues of a symmetric matrix.

    Uses cyclic Jacobi rotations; adequate for the small dense matrices that
    arise from agent graphs (N up to a few dozen).

    Args:
        m: symmetric matrix.
        matrix_index: optional agent id recorded on the certificate.

    Raises:
        ValueError: if m is not square and symmetric.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max())) if a.size else 1.0
    if np.abs(a - a.T).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix must be symmetric")
    eigs = _jacobi_eigenvalues(a)
    return SpectralCertificate(float(eigs.min()), float(eigs.max()), matrix_index)


def _jacobi_eigenvalues(a: NDArray[np.float64]) -> NDArray[np.float64]:
    n = a.shape[0]
    if n == 0:
        raise ValueError("matrix must be nonempty")
    if n == 1:
        return a[0, :1].copy()
    a = a.copy()
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n)
    # Sweep until the off-diagonal mass is negligible. Quadratic convergence
    # makes ~10 sweeps plenty at these sizes; the cap only guards stagnation.
    for _ in range(100):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off <= 1e-15 * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * norm:
                    continue
                # Classic symmetric Schur rotation zeroing a[p, q].
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a = 0.5 * (a + a.T)
    return np.diag(a).copy()


def check_observer_certificate(
    cert: SpectralCertificate,
    p: float,
    lipschitz: float,
    sigma: float,
    delta: float,
) -> bool:
    """Check the scalar gain condition for estimator convergence.

    With the estimator weight restricted to the scalar family P = p*I the
    matrix condition collapses to

        2*lambda_max*p^2 + lipschitz^2/lambda_min - 2*lambda_min*delta*p
            + sigma*p < 0.

    Args:
        cert: extreme eigenvalues of the target's coupling matrix.
        p: scalar estimator weight, > 0.
        lipschitz: Lipschitz constant of the drift (user supplied).
        sigma: adaptive-gain leak rate, > 0.
        delta: candidate constant gain.

    Returns:
        True iff the inequality holds strictly.
    """
    if p <= 0.0:
        raise ValueError("weight p must be positive")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if not cert.is_positive_definite:
        raise ValueError("coupling matrix must be positive definite")
    lhs = (
        2.0 * cert.lambda_max * p * p
        + lipschitz * lipschitz / cert.lambda_min
        - 2.0 * cert.lambda_min * delta * p
        + sigma * p
    )
    return bool(lhs < 0.0)
