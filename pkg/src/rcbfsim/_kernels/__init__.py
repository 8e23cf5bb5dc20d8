"""Hot-loop kernels: the closed-loop vector field and the per-step control
snapshot, in two interchangeable implementations.

`pure` is vectorized numpy and always available. `_fast` is a compiled
extension built from the same formulas; it is used automatically when
present. Both consume a KernelSpec, a flat-array digest of one scenario, and
operate on the packed state vector laid out as

    [plant states 3M | estimates 2NM | observer gains NM | theta N | r_hat N]

with estimates grouped first by owning agent, then by estimated agent.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

STATE_DIM = 3  # x, y, heading
EST_DIM = 2  # estimated positions

# Primitive kind codes shared by both backends and build_kernel_spec.
KIND_CIRCLE = 0
KIND_SEPARATION = 1
KIND_CONNECTIVITY = 2

ALPHA_LINEAR = 0
ALPHA_ODD_POWER = 1


@dataclass(frozen=True)
class KernelSpec:
    """Scenario digest as contiguous arrays.

    Sizes: M total agents, N controllable (the first N agent indices), K
    barrier primitives across all controllable agents in a CSR layout
    (prim_start has N+1 entries). Circle primitives store the obstacle
    center in (prim_cx, prim_cy) and use partner -1; pair primitives store
    the partner agent in prim_b. prim_thr2 is the squared threshold whose
    sign convention the kind code determines.
    """

    n_total: int
    n_controllable: int
    adjacency: NDArray[np.float64]  # (N, N)
    access: NDArray[np.float64]  # (N, M) direct-measurement weights
    obs_weight: NDArray[np.float64]  # (M, EST_DIM) diagonal per target
    obs_leak: NDArray[np.float64]  # (M,)
    offsets: NDArray[np.float64]  # (M,) wheel offsets
    prim_start: NDArray[np.int32]  # (N+1,)
    prim_kind: NDArray[np.int32]  # (K,)
    prim_a: NDArray[np.int32]  # (K,)
    prim_b: NDArray[np.int32]  # (K,)
    prim_cx: NDArray[np.float64]  # (K,)
    prim_cy: NDArray[np.float64]  # (K,)
    prim_thr2: NDArray[np.float64]  # (K,)
    sharpness: NDArray[np.float64]  # (N,)
    rho0: NDArray[np.float64]  # (N,)
    rho_inf: NDArray[np.float64]  # (N,)
    decay: NDArray[np.float64]  # (N,)
    error_gain: NDArray[np.float64]  # (N,)
    rcbf_leak: NDArray[np.float64]  # (N,)
    adapt_gain: NDArray[np.float64]  # (N,)
    smoothing: NDArray[np.float64]  # (N,)
    alpha_kind: NDArray[np.int32]  # (N,)
    alpha_gain: NDArray[np.float64]  # (N,)
    alpha_power: NDArray[np.int32]  # (N,)
    guard: float = 1e-6

    @property
    def est_offset(self) -> int:
        return STATE_DIM * self.n_total

    @property
    def gain_offset(self) -> int:
        return self.est_offset + EST_DIM * self.n_controllable * self.n_total

    @property
    def theta_offset(self) -> int:
        return self.gain_offset + self.n_controllable * self.n_total

    @property
    def rhat_offset(self) -> int:
        return self.theta_offset + self.n_controllable

    @property
    def state_size(self) -> int:
        return self.rhat_offset + self.n_controllable


@dataclass(frozen=True)
class Snapshot:
    """Controller-facing view of one instant, indexed by controllable agent.

    a_rows/b_vals define the safety rows a'u >= b (zero and ignorable where
    has_row is False). est_rate (n_controllable x n_total x EST_DIM) is each
    observer's analytic estimate rate, the velocity each agent believes the
    others have. The remaining arrays are diagnostics destined for the
    trace: barrier values, reconstruction gap and corridor, transformed
    error, offset adaptation rate, clamp flags, and estimate error norms
    (n_controllable x n_total).
    """

    a_rows: NDArray[np.float64]
    b_vals: NDArray[np.float64]
    has_row: NDArray[np.bool_]
    h_true: NDArray[np.float64]
    h_hat: NDArray[np.float64]
    err: NDArray[np.float64]
    rho: NDArray[np.float64]
    eps: NDArray[np.float64]
    theta_rate: NDArray[np.float64]
    clamped: NDArray[np.bool_]
    est_err: NDArray[np.float64]
    est_rate: NDArray[np.float64]


def load_backend(name: str | None = None):
    """Pick the kernel module. `name` (or RCBFSIM_BACKEND) is 'py', 'cy', or
    'auto' (default: compiled when built, pure otherwise)."""
    choice = name or os.environ.get("RCBFSIM_BACKEND", "auto")
    if choice not in ("auto", "py", "cy"):
        raise ValueError(f"unknown backend '{choice}'; use 'py', 'cy', or 'auto'")
    if choice in ("auto", "cy"):
        try:
            from . import _fast

            return _fast
        except ImportError:
            if choice == "cy":
                raise RuntimeError(
                    "compiled backend requested but the extension is not built"
                ) from None
    from . import pure

    return pure
