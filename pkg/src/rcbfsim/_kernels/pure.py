"""Numpy implementation of the closed-loop kernels.

Formula-for-formula this file is mirrored by the compiled backend; changes
here must be ported there (test_kernels locks the two together).
"""

from __future__ import annotations

import numpy as np

from . import (
    ALPHA_LINEAR,
    EST_DIM,
    KIND_CONNECTIVITY,
    STATE_DIM,
    KernelSpec,
    Snapshot,
)

BACKEND_NAME = "py"


def _unpack(z: np.ndarray, spec: KernelSpec):
    m, n = spec.n_total, spec.n_controllable
    plant = z[: spec.est_offset].reshape(m, STATE_DIM)
    est = z[spec.est_offset : spec.gain_offset].reshape(n, m, EST_DIM)
    gains = z[spec.gain_offset : spec.theta_offset].reshape(n, m)
    theta = z[spec.theta_offset : spec.rhat_offset]
    rhat = z[spec.rhat_offset :]
    return plant, est, gains, theta, rhat


def _observer_rates(plant_pos, est, gains, spec):
    """Disagreement signals and the resulting estimate/gain rates."""
    deg = spec.adjacency.sum(axis=1)
    xi = deg[:, None, None] * est - np.einsum("ij,jld->ild", spec.adjacency, est)
    xi = xi + spec.access[:, :, None] * (est - plant_pos[None, :, :])
    est_rate = -gains[:, :, None] * xi
    quad = np.einsum("ild,ld,ild->il", xi, spec.obs_weight, xi)
    gain_rate = 2.0 * quad - spec.obs_leak[None, :] * gains
    return est_rate, gain_rate


def _owner_index(spec: KernelSpec) -> np.ndarray:
    counts = np.diff(spec.prim_start)
    return np.repeat(np.arange(spec.n_controllable), counts)


def _primitive_values(qa, qb, spec):
    """Values of every primitive given gathered endpoint positions."""
    diff = qa - qb
    sq = (diff * diff).sum(axis=1)
    is_conn = spec.prim_kind == KIND_CONNECTIVITY
    values = np.where(is_conn, spec.prim_thr2 - sq, sq - spec.prim_thr2)
    return diff, values


def _gather_endpoints(stacks, owner, spec):
    """Endpoint positions per primitive from per-owner position stacks."""
    qa = stacks[owner, spec.prim_a]
    partner = np.maximum(spec.prim_b, 0)
    qb = stacks[owner, partner]
    centers = np.stack([spec.prim_cx, spec.prim_cy], axis=1)
    has_partner = (spec.prim_b >= 0)[:, None]
    return qa, np.where(has_partner, qb, centers)


def _softmin_per_owner(values, spec):
    """Smooth minimum and its convex weights over each owner's slice."""
    n = spec.n_controllable
    h = np.zeros(n)
    has = np.zeros(n, dtype=bool)
    weights = np.zeros(values.shape[0])
    for i in range(n):
        lo, hi = spec.prim_start[i], spec.prim_start[i + 1]
        if hi == lo:
            continue
        has[i] = True
        v = values[lo:hi]
        kappa = spec.sharpness[i]
        floor = v.min()
        scaled = np.exp(-kappa * (v - floor))
        total = scaled.sum()
        h[i] = floor - np.log(total) / kappa
        weights[lo:hi] = scaled / total
    return h, weights, has


def _barrier_at_estimates(plant_pos, est, spec):
    """Per-owner barrier value and gradient at the estimate stack with the
    owner's own slot replaced by its true position."""
    n, m = spec.n_controllable, spec.n_total
    stacks = est.copy()
    idx = np.arange(n)
    stacks[idx, idx] = plant_pos[:n]
    owner = _owner_index(spec)
    qa, qb = _gather_endpoints(stacks, owner, spec)
    diff, values = _primitive_values(qa, qb, spec)
    h_est, weights, has = _softmin_per_owner(values, spec)
    grads = np.zeros((n, m, EST_DIM))
    sign = np.where(spec.prim_kind == KIND_CONNECTIVITY, -1.0, 1.0)
    contrib = (2.0 * sign * weights)[:, None] * diff
    np.add.at(grads, (owner, spec.prim_a), contrib)
    mask = spec.prim_b >= 0
    np.add.at(grads, (owner[mask], spec.prim_b[mask]), -contrib[mask])
    return h_est, grads, has, stacks


def _barrier_at_truth(plant_pos, spec):
    owner = _owner_index(spec)
    qa = plant_pos[spec.prim_a]
    partner = np.maximum(spec.prim_b, 0)
    qb = plant_pos[partner]
    centers = np.stack([spec.prim_cx, spec.prim_cy], axis=1)
    qb = np.where((spec.prim_b >= 0)[:, None], qb, centers)
    _, values = _primitive_values(qa, qb, spec)
    h_true, _, _ = _softmin_per_owner(values, spec)
    return h_true


def _funnel(spec, t):
    span = spec.rho0 - spec.rho_inf
    decayed = span * np.exp(-spec.decay * t)
    return decayed + spec.rho_inf, -spec.decay * decayed


def _rcbf_pieces(t, theta, rhat, h_true, h_est, grads, est_rate, has, spec):
    """Clamped gap, transformed error, and the adaptation rates, vectorized
    over controllable agents. Agents without a barrier get zeros."""
    rho, rho_rate = _funnel(spec, t)
    h_hat = h_est - theta
    e = h_true - h_hat
    lo = spec.guard * rho
    hi = (1.0 - spec.guard) * rho
    e_safe = np.clip(e, lo, hi)
    clamped = has & ((e < lo) | (e > hi))
    eps = 0.5 * np.log(e_safe / (rho - e_safe))
    width = e_safe * (rho - e_safe)
    grad_norm = np.sqrt((grads * grads).sum(axis=(1, 2)))
    est_rate_norm = np.sqrt((est_rate * est_rate).sum(axis=(1, 2)))
    signal = grad_norm + est_rate_norm
    chi = eps * rho / (2.0 * width) * signal
    robust = -(rhat**2) * signal * chi / np.sqrt(chi**2 * rhat**2 + spec.smoothing**2)
    theta_rate = (
        -spec.error_gain * (width / rho) * eps
        + (e_safe / rho) * rho_rate
        - rho * eps / (4.0 * width)
        + robust
    )
    r_hat_rate = (
        spec.adapt_gain * np.abs(eps) * rho / (2.0 * width) * signal
        - spec.rcbf_leak * rhat
    )
    zero = np.zeros_like(theta)
    return (
        np.where(has, h_hat, zero),
        np.where(has, e, zero),
        rho,
        np.where(has, eps, zero),
        np.where(has, theta_rate, zero),
        np.where(has, r_hat_rate, zero),
        clamped,
    )


def field(t: float, z: np.ndarray, u: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Time derivative of the packed state under inputs u (M*2 flat)."""
    plant, est, gains, theta, rhat = _unpack(z, spec)
    plant_pos = plant[:, :2]
    inputs = u.reshape(spec.n_total, 2)
    heading = plant[:, 2]
    cos_t = np.cos(heading)
    sin_t = np.sin(heading)
    v = inputs[:, 0]
    w = inputs[:, 1]
    plant_rate = np.empty_like(plant)
    plant_rate[:, 0] = cos_t * v - spec.offsets * sin_t * w
    plant_rate[:, 1] = sin_t * v + spec.offsets * cos_t * w
    plant_rate[:, 2] = w

    est_rate, gain_rate = _observer_rates(plant_pos, est, gains, spec)

    h_est, grads, has, _ = _barrier_at_estimates(plant_pos, est, spec)
    h_true = _barrier_at_truth(plant_pos, spec)
    _, _, _, _, theta_rate, r_hat_rate, _ = _rcbf_pieces(
        t, theta, rhat, h_true, h_est, grads, est_rate, has, spec
    )

    dz = np.empty_like(z)
    dz[: spec.est_offset] = plant_rate.reshape(-1)
    dz[spec.est_offset : spec.gain_offset] = est_rate.reshape(-1)
    dz[spec.gain_offset : spec.theta_offset] = gain_rate.reshape(-1)
    dz[spec.theta_offset : spec.rhat_offset] = theta_rate
    dz[spec.rhat_offset :] = r_hat_rate
    return dz


def control_snapshot(t: float, z: np.ndarray, spec: KernelSpec) -> Snapshot:
    """Constraint rows and diagnostics for the controllers at one instant."""
    plant, est, gains, theta, rhat = _unpack(z, spec)
    plant_pos = plant[:, :2]
    n = spec.n_controllable

    est_rate, _ = _observer_rates(plant_pos, est, gains, spec)
    h_est, grads, has, _ = _barrier_at_estimates(plant_pos, est, spec)
    h_true = _barrier_at_truth(plant_pos, spec)
    h_hat, err, rho, eps, theta_rate, _, clamped = _rcbf_pieces(
        t, theta, rhat, h_true, h_est, grads, est_rate, has, spec
    )

    alpha_val = np.where(
        spec.alpha_kind == ALPHA_LINEAR,
        spec.alpha_gain * h_hat,
        spec.alpha_gain * np.power(h_hat, spec.alpha_power),
    )
    a_rows = np.zeros((n, 2))
    b_vals = np.zeros(n)
    for i in range(n):
        if not has[i]:
            continue
        gx, gy = grads[i, i]
        heading = plant[i, 2]
        off = spec.offsets[i]
        cos_t = np.cos(heading)
        sin_t = np.sin(heading)
        a_rows[i, 0] = cos_t * gx + sin_t * gy
        a_rows[i, 1] = -off * sin_t * gx + off * cos_t * gy
        coupling = float(np.sum(grads[i] * est_rate[i])) - float(
            grads[i, i] @ est_rate[i, i]
        )
        b_vals[i] = -alpha_val[i] - coupling + theta_rate[i]

    est_err = np.sqrt(((est - plant_pos[None, :, :]) ** 2).sum(axis=2))
    return Snapshot(
        a_rows=a_rows,
        b_vals=b_vals,
        has_row=has,
        h_true=np.where(has, h_true, 0.0),
        h_hat=h_hat,
        err=err,
        rho=rho,
        eps=eps,
        theta_rate=theta_rate,
        clamped=clamped,
        est_err=est_err,
        est_rate=est_rate,
    )
