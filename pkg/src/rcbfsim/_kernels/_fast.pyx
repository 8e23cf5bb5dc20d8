# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the closed-loop kernels.

Formula-for-formula mirror of pure.py; changes there must be ported here
(test_kernels locks the two together). The layout contract is identical:
packed state [plant 3M | estimates 2NM | gains NM | theta N | r_hat N].
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, fabs, log, pow, sin, sqrt

from . import ALPHA_LINEAR, KIND_CONNECTIVITY, Snapshot

cnp.import_array()

BACKEND_NAME = "cy"

cdef int ALPHA_LINEAR_C = ALPHA_LINEAR
cdef int KIND_CONNECTIVITY_C = KIND_CONNECTIVITY


cdef void _plant_rates(
    double[:, ::1] plant,
    double[::1] u,
    double[::1] offsets,
    double[:, ::1] out,
    Py_ssize_t m,
) noexcept nogil:
    cdef Py_ssize_t k
    cdef double c, s, v, w, off
    for k in range(m):
        c = cos(plant[k, 2])
        s = sin(plant[k, 2])
        v = u[2 * k]
        w = u[2 * k + 1]
        off = offsets[k]
        out[k, 0] = c * v - off * s * w
        out[k, 1] = s * v + off * c * w
        out[k, 2] = w


cdef void _observer_rates(
    double[:, ::1] plant,
    double[:, :, ::1] est,
    double[:, ::1] gains,
    double[:, ::1] adjacency,
    double[:, ::1] access,
    double[:, ::1] obs_weight,
    double[::1] obs_leak,
    double[:, :, ::1] est_rate,
    double[:, ::1] gain_rate,
    Py_ssize_t n,
    Py_ssize_t m,
) noexcept nogil:
    cdef Py_ssize_t i, j, l, d
    cdef double deg, xi0, xi1, acc0, acc1, quad
    for i in range(n):
        deg = 0.0
        for j in range(n):
            deg += adjacency[i, j]
        for l in range(m):
            acc0 = 0.0
            acc1 = 0.0
            for j in range(n):
                acc0 += adjacency[i, j] * est[j, l, 0]
                acc1 += adjacency[i, j] * est[j, l, 1]
            xi0 = deg * est[i, l, 0] - acc0 + access[i, l] * (est[i, l, 0] - plant[l, 0])
            xi1 = deg * est[i, l, 1] - acc1 + access[i, l] * (est[i, l, 1] - plant[l, 1])
            est_rate[i, l, 0] = -gains[i, l] * xi0
            est_rate[i, l, 1] = -gains[i, l] * xi1
            quad = xi0 * obs_weight[l, 0] * xi0 + xi1 * obs_weight[l, 1] * xi1
            gain_rate[i, l] = 2.0 * quad - obs_leak[l] * gains[i, l]


cdef void _barriers(
    double[:, ::1] plant,
    double[:, :, ::1] est,
    int[::1] prim_start,
    int[::1] prim_kind,
    int[::1] prim_a,
    int[::1] prim_b,
    double[::1] prim_cx,
    double[::1] prim_cy,
    double[::1] prim_thr2,
    double[::1] sharpness,
    double[::1] h_est,
    double[::1] h_true,
    double[:, :, ::1] grads,
    unsigned char[::1] has,
    double[::1] scratch_v,
    double[::1] scratch_t,
    double[:, ::1] scratch_d,
    Py_ssize_t n,
) noexcept nogil:
    # Per owner: softmin value and gradient at the estimate stack (own slot
    # replaced by the true position) plus the softmin value at ground truth.
    cdef Py_ssize_t i, p, lo, hi, a, b
    cdef double ax, ay, bx, by, dx, dy, sq, val, kappa
    cdef double floor_e, floor_t, total_e, total_t, scaled, weight, coeff
    for i in range(n):
        lo = prim_start[i]
        hi = prim_start[i + 1]
        if hi == lo:
            has[i] = 0
            h_est[i] = 0.0
            h_true[i] = 0.0
            continue
        has[i] = 1
        floor_e = 0.0
        floor_t = 0.0
        for p in range(lo, hi):
            a = prim_a[p]
            b = prim_b[p]
            # value at the owner's belief stack
            if a == i:
                ax = plant[i, 0]
                ay = plant[i, 1]
            else:
                ax = est[i, a, 0]
                ay = est[i, a, 1]
            if b >= 0:
                if b == i:
                    bx = plant[i, 0]
                    by = plant[i, 1]
                else:
                    bx = est[i, b, 0]
                    by = est[i, b, 1]
            else:
                bx = prim_cx[p]
                by = prim_cy[p]
            dx = ax - bx
            dy = ay - by
            scratch_d[p, 0] = dx
            scratch_d[p, 1] = dy
            sq = dx * dx + dy * dy
            if prim_kind[p] == KIND_CONNECTIVITY_C:
                val = prim_thr2[p] - sq
            else:
                val = sq - prim_thr2[p]
            scratch_v[p] = val
            if p == lo or val < floor_e:
                floor_e = val
            # value at ground truth
            ax = plant[a, 0]
            ay = plant[a, 1]
            if b >= 0:
                bx = plant[b, 0]
                by = plant[b, 1]
            else:
                bx = prim_cx[p]
                by = prim_cy[p]
            dx = ax - bx
            dy = ay - by
            sq = dx * dx + dy * dy
            if prim_kind[p] == KIND_CONNECTIVITY_C:
                val = prim_thr2[p] - sq
            else:
                val = sq - prim_thr2[p]
            scratch_t[p] = val
            if p == lo or val < floor_t:
                floor_t = val
        kappa = sharpness[i]
        total_e = 0.0
        total_t = 0.0
        for p in range(lo, hi):
            total_e += exp(-kappa * (scratch_v[p] - floor_e))
            total_t += exp(-kappa * (scratch_t[p] - floor_t))
        h_est[i] = floor_e - log(total_e) / kappa
        h_true[i] = floor_t - log(total_t) / kappa
        for p in range(lo, hi):
            a = prim_a[p]
            b = prim_b[p]
            weight = exp(-kappa * (scratch_v[p] - floor_e)) / total_e
            if prim_kind[p] == KIND_CONNECTIVITY_C:
                coeff = -2.0 * weight
            else:
                coeff = 2.0 * weight
            grads[i, a, 0] += coeff * scratch_d[p, 0]
            grads[i, a, 1] += coeff * scratch_d[p, 1]
            if b >= 0:
                grads[i, b, 0] -= coeff * scratch_d[p, 0]
                grads[i, b, 1] -= coeff * scratch_d[p, 1]


cdef void _rcbf_pieces(
    double t,
    double[::1] theta,
    double[::1] rhat,
    double[::1] h_true,
    double[::1] h_est,
    double[:, :, ::1] grads,
    double[:, :, ::1] est_rate,
    unsigned char[::1] has,
    double[::1] rho0,
    double[::1] rho_inf,
    double[::1] decay,
    double[::1] error_gain,
    double[::1] rcbf_leak,
    double[::1] adapt_gain,
    double[::1] smoothing,
    double guard,
    double[::1] h_hat,
    double[::1] err,
    double[::1] rho_out,
    double[::1] eps_out,
    double[::1] theta_rate,
    double[::1] r_hat_rate,
    unsigned char[::1] clamped,
    Py_ssize_t n,
    Py_ssize_t m,
) noexcept nogil:
    cdef Py_ssize_t i, l, d
    cdef double decayed, rho, rho_rate, hh, e, lo, hi, e_safe, eps, width
    cdef double grad_sq, rate_sq, signal, chi, robust
    for i in range(n):
        decayed = (rho0[i] - rho_inf[i]) * exp(-decay[i] * t)
        rho = decayed + rho_inf[i]
        rho_rate = -decay[i] * decayed
        rho_out[i] = rho
        hh = h_est[i] - theta[i]
        e = h_true[i] - hh
        lo = guard * rho
        hi = (1.0 - guard) * rho
        e_safe = e
        if e_safe < lo:
            e_safe = lo
        elif e_safe > hi:
            e_safe = hi
        clamped[i] = 1 if (has[i] and (e < lo or e > hi)) else 0
        eps = 0.5 * log(e_safe / (rho - e_safe))
        width = e_safe * (rho - e_safe)
        grad_sq = 0.0
        rate_sq = 0.0
        for l in range(m):
            for d in range(2):
                grad_sq += grads[i, l, d] * grads[i, l, d]
                rate_sq += est_rate[i, l, d] * est_rate[i, l, d]
        signal = sqrt(grad_sq) + sqrt(rate_sq)
        chi = eps * rho / (2.0 * width) * signal
        robust = -(rhat[i] * rhat[i]) * signal * chi / sqrt(
            chi * chi * rhat[i] * rhat[i] + smoothing[i] * smoothing[i]
        )
        if has[i]:
            h_hat[i] = hh
            err[i] = e
            eps_out[i] = eps
            theta_rate[i] = (
                -error_gain[i] * (width / rho) * eps
                + (e_safe / rho) * rho_rate
                - rho * eps / (4.0 * width)
                + robust
            )
            r_hat_rate[i] = (
                adapt_gain[i] * fabs(eps) * rho / (2.0 * width) * signal
                - rcbf_leak[i] * rhat[i]
            )
        else:
            h_hat[i] = 0.0
            err[i] = 0.0
            eps_out[i] = 0.0
            theta_rate[i] = 0.0
            r_hat_rate[i] = 0.0


def field(double t, z, u, spec):
    """Time derivative of the packed state under inputs u (M*2 flat)."""
    cdef Py_ssize_t m = spec.n_total
    cdef Py_ssize_t n = spec.n_controllable
    cdef Py_ssize_t n_prim = spec.prim_kind.shape[0]

    z_arr = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t est_off = spec.est_offset
    cdef Py_ssize_t gain_off = spec.gain_offset
    cdef Py_ssize_t theta_off = spec.theta_offset
    cdef Py_ssize_t rhat_off = spec.rhat_offset

    dz = np.empty_like(z_arr)

    plant = z_arr[:est_off].reshape(m, 3)
    est = z_arr[est_off:gain_off].reshape(n, m, 2)
    gains = z_arr[gain_off:theta_off].reshape(n, m)
    cdef double[:, ::1] plant_v = plant
    cdef double[:, :, ::1] est_v = est
    cdef double[:, ::1] gains_v = gains
    cdef double[::1] theta_v = z_arr[theta_off:rhat_off]
    cdef double[::1] rhat_v = z_arr[rhat_off:]

    cdef double[::1] offsets = np.ascontiguousarray(spec.offsets, dtype=np.float64)
    cdef double[:, ::1] adjacency = np.ascontiguousarray(spec.adjacency, dtype=np.float64)
    cdef double[:, ::1] access = np.ascontiguousarray(spec.access, dtype=np.float64)
    cdef double[:, ::1] obs_weight = np.ascontiguousarray(spec.obs_weight, dtype=np.float64)
    cdef double[::1] obs_leak = np.ascontiguousarray(spec.obs_leak, dtype=np.float64)
    cdef int[::1] prim_start = np.ascontiguousarray(spec.prim_start, dtype=np.int32)
    cdef int[::1] prim_kind = np.ascontiguousarray(spec.prim_kind, dtype=np.int32)
    cdef int[::1] prim_a = np.ascontiguousarray(spec.prim_a, dtype=np.int32)
    cdef int[::1] prim_b = np.ascontiguousarray(spec.prim_b, dtype=np.int32)
    cdef double[::1] prim_cx = np.ascontiguousarray(spec.prim_cx, dtype=np.float64)
    cdef double[::1] prim_cy = np.ascontiguousarray(spec.prim_cy, dtype=np.float64)
    cdef double[::1] prim_thr2 = np.ascontiguousarray(spec.prim_thr2, dtype=np.float64)
    cdef double[::1] sharpness = np.ascontiguousarray(spec.sharpness, dtype=np.float64)
    cdef double[::1] rho0 = np.ascontiguousarray(spec.rho0, dtype=np.float64)
    cdef double[::1] rho_inf = np.ascontiguousarray(spec.rho_inf, dtype=np.float64)
    cdef double[::1] decay = np.ascontiguousarray(spec.decay, dtype=np.float64)
    cdef double[::1] error_gain = np.ascontiguousarray(spec.error_gain, dtype=np.float64)
    cdef double[::1] rcbf_leak = np.ascontiguousarray(spec.rcbf_leak, dtype=np.float64)
    cdef double[::1] adapt_gain = np.ascontiguousarray(spec.adapt_gain, dtype=np.float64)
    cdef double[::1] smoothing = np.ascontiguousarray(spec.smoothing, dtype=np.float64)
    cdef double guard = spec.guard

    plant_rate = np.empty((m, 3), dtype=np.float64)
    est_rate = np.zeros((n, m, 2), dtype=np.float64)
    gain_rate = np.zeros((n, m), dtype=np.float64)
    h_est = np.zeros(n, dtype=np.float64)
    h_true = np.zeros(n, dtype=np.float64)
    grads = np.zeros((n, m, 2), dtype=np.float64)
    has = np.zeros(n, dtype=np.uint8)
    h_hat = np.zeros(n, dtype=np.float64)
    err = np.zeros(n, dtype=np.float64)
    rho = np.zeros(n, dtype=np.float64)
    eps = np.zeros(n, dtype=np.float64)
    theta_rate = np.zeros(n, dtype=np.float64)
    r_hat_rate = np.zeros(n, dtype=np.float64)
    clamped = np.zeros(n, dtype=np.uint8)
    scratch_v = np.zeros(n_prim, dtype=np.float64)
    scratch_t = np.zeros(n_prim, dtype=np.float64)
    scratch_d = np.zeros((n_prim, 2), dtype=np.float64)

    cdef double[:, ::1] plant_rate_v = plant_rate
    cdef double[:, :, ::1] est_rate_v = est_rate
    cdef double[:, ::1] gain_rate_v = gain_rate
    cdef double[::1] h_est_v = h_est
    cdef double[::1] h_true_v = h_true
    cdef double[:, :, ::1] grads_v = grads
    cdef unsigned char[::1] has_v = has
    cdef double[::1] h_hat_v = h_hat
    cdef double[::1] err_v = err
    cdef double[::1] rho_v = rho
    cdef double[::1] eps_v = eps
    cdef double[::1] theta_rate_v = theta_rate
    cdef double[::1] r_hat_rate_v = r_hat_rate
    cdef unsigned char[::1] clamped_v = clamped
    cdef double[::1] scratch_v_v = scratch_v
    cdef double[::1] scratch_t_v = scratch_t
    cdef double[:, ::1] scratch_d_v = scratch_d

    with nogil:
        _plant_rates(plant_v, uv, offsets, plant_rate_v, m)
        if n:
            _observer_rates(
                plant_v, est_v, gains_v, adjacency, access, obs_weight, obs_leak,
                est_rate_v, gain_rate_v, n, m,
            )
            _barriers(
                plant_v, est_v, prim_start, prim_kind, prim_a, prim_b,
                prim_cx, prim_cy, prim_thr2, sharpness,
                h_est_v, h_true_v, grads_v, has_v,
                scratch_v_v, scratch_t_v, scratch_d_v, n,
            )
            _rcbf_pieces(
                t, theta_v, rhat_v, h_true_v, h_est_v, grads_v, est_rate_v, has_v,
                rho0, rho_inf, decay, error_gain, rcbf_leak, adapt_gain, smoothing,
                guard, h_hat_v, err_v, rho_v, eps_v, theta_rate_v, r_hat_rate_v,
                clamped_v, n, m,
            )

    dz[:est_off] = plant_rate.reshape(-1)
    if n:
        dz[est_off:gain_off] = est_rate.reshape(-1)
        dz[gain_off:theta_off] = gain_rate.reshape(-1)
        dz[theta_off:rhat_off] = theta_rate
        dz[rhat_off:] = r_hat_rate
    return dz


def control_snapshot(double t, z, spec):
    """Constraint rows and diagnostics for the controllers at one instant."""
    cdef Py_ssize_t m = spec.n_total
    cdef Py_ssize_t n = spec.n_controllable
    cdef Py_ssize_t n_prim = spec.prim_kind.shape[0]

    z_arr = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t est_off = spec.est_offset
    cdef Py_ssize_t gain_off = spec.gain_offset
    cdef Py_ssize_t theta_off = spec.theta_offset
    cdef Py_ssize_t rhat_off = spec.rhat_offset

    plant = z_arr[:est_off].reshape(m, 3)
    est = z_arr[est_off:gain_off].reshape(n, m, 2)
    gains = z_arr[gain_off:theta_off].reshape(n, m)
    cdef double[:, ::1] plant_v = plant
    cdef double[:, :, ::1] est_v = est
    cdef double[:, ::1] gains_v = gains
    cdef double[::1] theta_v = z_arr[theta_off:rhat_off]
    cdef double[::1] rhat_v = z_arr[rhat_off:]

    cdef double[::1] offsets = np.ascontiguousarray(spec.offsets, dtype=np.float64)
    cdef double[:, ::1] adjacency = np.ascontiguousarray(spec.adjacency, dtype=np.float64)
    cdef double[:, ::1] access = np.ascontiguousarray(spec.access, dtype=np.float64)
    cdef double[:, ::1] obs_weight = np.ascontiguousarray(spec.obs_weight, dtype=np.float64)
    cdef double[::1] obs_leak = np.ascontiguousarray(spec.obs_leak, dtype=np.float64)
    cdef int[::1] prim_start = np.ascontiguousarray(spec.prim_start, dtype=np.int32)
    cdef int[::1] prim_kind = np.ascontiguousarray(spec.prim_kind, dtype=np.int32)
    cdef int[::1] prim_a = np.ascontiguousarray(spec.prim_a, dtype=np.int32)
    cdef int[::1] prim_b = np.ascontiguousarray(spec.prim_b, dtype=np.int32)
    cdef double[::1] prim_cx = np.ascontiguousarray(spec.prim_cx, dtype=np.float64)
    cdef double[::1] prim_cy = np.ascontiguousarray(spec.prim_cy, dtype=np.float64)
    cdef double[::1] prim_thr2 = np.ascontiguousarray(spec.prim_thr2, dtype=np.float64)
    cdef double[::1] sharpness = np.ascontiguousarray(spec.sharpness, dtype=np.float64)
    cdef double[::1] rho0 = np.ascontiguousarray(spec.rho0, dtype=np.float64)
    cdef double[::1] rho_inf = np.ascontiguousarray(spec.rho_inf, dtype=np.float64)
    cdef double[::1] decay = np.ascontiguousarray(spec.decay, dtype=np.float64)
    cdef double[::1] error_gain = np.ascontiguousarray(spec.error_gain, dtype=np.float64)
    cdef double[::1] rcbf_leak = np.ascontiguousarray(spec.rcbf_leak, dtype=np.float64)
    cdef double[::1] adapt_gain = np.ascontiguousarray(spec.adapt_gain, dtype=np.float64)
    cdef double[::1] smoothing = np.ascontiguousarray(spec.smoothing, dtype=np.float64)
    cdef int[::1] alpha_kind = np.ascontiguousarray(spec.alpha_kind, dtype=np.int32)
    cdef double[::1] alpha_gain = np.ascontiguousarray(spec.alpha_gain, dtype=np.float64)
    cdef int[::1] alpha_power = np.ascontiguousarray(spec.alpha_power, dtype=np.int32)
    cdef double guard = spec.guard

    est_rate = np.zeros((n, m, 2), dtype=np.float64)
    gain_rate = np.zeros((n, m), dtype=np.float64)
    h_est = np.zeros(n, dtype=np.float64)
    h_true = np.zeros(n, dtype=np.float64)
    grads = np.zeros((n, m, 2), dtype=np.float64)
    has = np.zeros(n, dtype=np.uint8)
    h_hat = np.zeros(n, dtype=np.float64)
    err = np.zeros(n, dtype=np.float64)
    rho = np.zeros(n, dtype=np.float64)
    eps = np.zeros(n, dtype=np.float64)
    theta_rate = np.zeros(n, dtype=np.float64)
    r_hat_rate = np.zeros(n, dtype=np.float64)
    clamped = np.zeros(n, dtype=np.uint8)
    scratch_v = np.zeros(n_prim, dtype=np.float64)
    scratch_t = np.zeros(n_prim, dtype=np.float64)
    scratch_d = np.zeros((n_prim, 2), dtype=np.float64)
    a_rows = np.zeros((n, 2), dtype=np.float64)
    b_vals = np.zeros(n, dtype=np.float64)
    est_err = np.zeros((n, m), dtype=np.float64)

    cdef double[:, :, ::1] est_rate_v = est_rate
    cdef double[:, ::1] gain_rate_v = gain_rate
    cdef double[::1] h_est_v = h_est
    cdef double[::1] h_true_v = h_true
    cdef double[:, :, ::1] grads_v = grads
    cdef unsigned char[::1] has_v = has
    cdef double[::1] h_hat_v = h_hat
    cdef double[::1] err_v = err
    cdef double[::1] rho_v = rho
    cdef double[::1] eps_v = eps
    cdef double[::1] theta_rate_v = theta_rate
    cdef double[::1] r_hat_rate_v = r_hat_rate
    cdef unsigned char[::1] clamped_v = clamped
    cdef double[::1] scratch_v_v = scratch_v
    cdef double[::1] scratch_t_v = scratch_t
    cdef double[:, ::1] scratch_d_v = scratch_d
    cdef double[:, ::1] a_rows_v = a_rows
    cdef double[::1] b_vals_v = b_vals
    cdef double[:, ::1] est_err_v = est_err

    cdef Py_ssize_t i, l
    cdef double alpha_val, gx, gy, c, s, off, coupling, dx, dy

    with nogil:
        if n:
            _observer_rates(
                plant_v, est_v, gains_v, adjacency, access, obs_weight, obs_leak,
                est_rate_v, gain_rate_v, n, m,
            )
            _barriers(
                plant_v, est_v, prim_start, prim_kind, prim_a, prim_b,
                prim_cx, prim_cy, prim_thr2, sharpness,
                h_est_v, h_true_v, grads_v, has_v,
                scratch_v_v, scratch_t_v, scratch_d_v, n,
            )
            _rcbf_pieces(
                t, theta_v, rhat_v, h_true_v, h_est_v, grads_v, est_rate_v, has_v,
                rho0, rho_inf, decay, error_gain, rcbf_leak, adapt_gain, smoothing,
                guard, h_hat_v, err_v, rho_v, eps_v, theta_rate_v, r_hat_rate_v,
                clamped_v, n, m,
            )
        for i in range(n):
            for l in range(m):
                dx = est_v[i, l, 0] - plant_v[l, 0]
                dy = est_v[i, l, 1] - plant_v[l, 1]
                est_err_v[i, l] = sqrt(dx * dx + dy * dy)
            if not has_v[i]:
                h_true_v[i] = 0.0
                continue
            if alpha_kind[i] == ALPHA_LINEAR_C:
                alpha_val = alpha_gain[i] * h_hat_v[i]
            else:
                alpha_val = alpha_gain[i] * pow(h_hat_v[i], <double> alpha_power[i])
            gx = grads_v[i, i, 0]
            gy = grads_v[i, i, 1]
            c = cos(plant_v[i, 2])
            s = sin(plant_v[i, 2])
            off = offsets[i]
            a_rows_v[i, 0] = c * gx + s * gy
            a_rows_v[i, 1] = -off * s * gx + off * c * gy
            coupling = 0.0
            for l in range(m):
                if l != i:
                    coupling += (
                        grads_v[i, l, 0] * est_rate_v[i, l, 0]
                        + grads_v[i, l, 1] * est_rate_v[i, l, 1]
                    )
            b_vals_v[i] = -alpha_val - coupling + theta_rate_v[i]

    return Snapshot(
        a_rows=a_rows,
        b_vals=b_vals,
        has_row=has.astype(bool),
        h_true=h_true,
        h_hat=h_hat,
        err=err,
        rho=rho,
        eps=eps,
        theta_rate=theta_rate,
        clamped=clamped.astype(bool),
        est_err=est_err,
        est_rate=est_rate,
    )
