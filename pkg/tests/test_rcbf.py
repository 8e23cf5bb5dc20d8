"""Funnel, transform, and adaptation-law unit tests.

The numeric oracles here are evaluated from the closed-form definitions
independently of the module (plain math formulas, frozen literals) so a sign
slip in the implementation cannot hide.
"""

import math

import numpy as np
import pytest

from rcbfsim.rcbf import (
    GUARD,
    FunnelParams,
    RcbfState,
    funnel,
    inverse_transform,
    rcbf_rates,
    rcbf_value,
    reconstruction_error,
    transform,
)

PAPER_FUNNEL = FunnelParams(rho0=1.0, rho_inf=0.15, decay=1.0)


def _state(theta=0.1, r_hat=0.0, error_gain=0.01, leak=0.8, adapt_gain=0.01,
           smoothing=0.01, funnel_params=PAPER_FUNNEL):
    return RcbfState(
        theta=theta,
        r_hat=r_hat,
        error_gain=error_gain,
        leak=leak,
        adapt_gain=adapt_gain,
        smoothing=smoothing,
        funnel=funnel_params,
    )


class TestFunnel:
    def test_validation(self):
        with pytest.raises(ValueError, match="0 < rho_inf < rho0"):
            FunnelParams(rho0=1.0, rho_inf=1.0, decay=1.0)
        with pytest.raises(ValueError, match="0 < rho_inf < rho0"):
            FunnelParams(rho0=1.0, rho_inf=0.0, decay=1.0)
        with pytest.raises(ValueError, match="decay"):
            FunnelParams(rho0=1.0, rho_inf=0.5, decay=0.0)

    def test_initial_width(self):
        rho, rho_rate = funnel(PAPER_FUNNEL, 0.0)
        assert rho == pytest.approx(1.0, abs=0.0)
        assert rho_rate == pytest.approx(-0.85, abs=0.0)

    def test_width_at_one_second(self):
        rho, rho_rate = funnel(PAPER_FUNNEL, 1.0)
        assert rho == pytest.approx(0.4626975249957259, abs=1e-15)
        assert rho_rate == pytest.approx(-0.31269752499572595, abs=1e-15)

    def test_terminal_width(self):
        rho, rho_rate = funnel(PAPER_FUNNEL, 80.0)
        assert rho == pytest.approx(0.15, abs=1e-12)
        assert rho_rate == pytest.approx(0.0, abs=1e-12)

    def test_monotone_decrease_above_floor(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            rho_inf = rng.uniform(0.01, 1.0)
            params = FunnelParams(
                rho0=rho_inf + rng.uniform(0.01, 3.0),
                rho_inf=rho_inf,
                decay=rng.uniform(0.1, 2.0),
            )
            # Keep decay*t small enough that the shrinking part stays
            # representable next to rho_inf, so strict ordering holds.
            t1 = rng.uniform(0.0, 4.0)
            t2 = t1 + rng.uniform(0.01, 2.0)
            r1, _ = funnel(params, t1)
            r2, _ = funnel(params, t2)
            assert rho_inf < r2 < r1

    def test_rate_matches_finite_difference(self):
        h = 1e-6
        for t in (0.0, 0.3, 2.0, 7.5):
            rho_plus, _ = funnel(PAPER_FUNNEL, t + h)
            rho_minus, _ = funnel(PAPER_FUNNEL, max(t - h, 0.0))
            span = h if t == 0.0 else 2 * h
            fd = (rho_plus - rho_minus) / span
            _, rate = funnel(PAPER_FUNNEL, t)
            assert rate == pytest.approx(fd, abs=1e-6)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            funnel(PAPER_FUNNEL, -0.1)


class TestReconstructionError:
    def test_zero_gap(self):
        assert reconstruction_error(1.0, 1.0) == 0.0

    def test_simple_gap(self):
        assert reconstruction_error(1.0, 0.5) == 0.5

    def test_half_width_start(self):
        # Offset initialized to half the true value with exact estimates
        # puts the initial gap exactly at half of the initial corridor.
        h0 = 0.72
        theta0 = h0 - h0 / 2.0
        h_hat0 = rcbf_value(h0, theta0)
        assert reconstruction_error(h0, h_hat0) == pytest.approx(h0 / 2.0, abs=0.0)


class TestRcbfValue:
    def test_zero_offset(self):
        assert rcbf_value(0.546, 0.0) == 0.546

    def test_fixed_offset(self):
        assert rcbf_value(0.546, 0.1) == pytest.approx(0.446)


class TestTransform:
    def test_midpoint_maps_to_zero(self):
        eps, clamped = transform(0.5, 1.0)
        assert eps == 0.0
        assert not clamped

    def test_unit_output_point(self):
        # epsilon = 1 exactly when e/rho equals the logistic of 2.
        rho = 0.7
        eps, clamped = transform(0.8807970779778823 * rho, rho)
        assert eps == pytest.approx(1.0, abs=1e-12)
        assert not clamped

    def test_clamp_below(self):
        eps, clamped = transform(-0.3, 1.0)
        assert clamped
        assert eps == pytest.approx(-6.907754778981887, abs=1e-12)

    def test_clamp_above(self):
        eps, clamped = transform(1.5, 1.0)
        assert clamped
        # Mirror of the lower clamp up to float cancellation in 1-(1-1e-6).
        assert eps == pytest.approx(6.907754778981887, abs=1e-10)

    def test_zero_gap_clamps(self):
        _, clamped = transform(0.0, 0.5)
        assert clamped

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            rho = rng.uniform(0.05, 3.0)
            e = rho * rng.uniform(1e-5, 1.0 - 1e-5)
            eps, clamped = transform(e, rho)
            assert not clamped
            assert inverse_transform(eps, rho) == pytest.approx(e, abs=1e-10)

    def test_inverse_overflow_safe(self):
        assert inverse_transform(-800.0, 1.0) == 0.0
        assert inverse_transform(800.0, 1.0) == 1.0
        assert math.isfinite(inverse_transform(-40.0, 2.5))

    def test_bad_inputs(self):
        with pytest.raises(ValueError, match="width"):
            transform(0.5, 0.0)
        with pytest.raises(ValueError, match="guard"):
            transform(0.5, 1.0, guard=0.6)
        with pytest.raises(ValueError, match="width"):
            inverse_transform(0.0, -1.0)


class TestStateValidation:
    def test_negative_r_hat_rejected(self):
        with pytest.raises(ValueError, match="r_hat"):
            _state(r_hat=-0.1)

    def test_nonpositive_gain_rejected(self):
        with pytest.raises(ValueError, match="leak"):
            _state(leak=0.0)
        with pytest.raises(ValueError, match="smoothing"):
            _state(smoothing=-1.0)


def _oracle_rates(s, t, e, grad_norm, est_rate_norm):
    """Term-by-term re-derivation used to cross-check rcbf_rates."""
    span = s.funnel.rho0 - s.funnel.rho_inf
    rho = span * math.exp(-s.funnel.decay * t) + s.funnel.rho_inf
    rho_rate = -s.funnel.decay * span * math.exp(-s.funnel.decay * t)
    eps = 0.5 * math.log(e / (rho - e))
    sig = grad_norm + est_rate_norm
    chi = eps * rho / (2.0 * e * (rho - e)) * sig
    t1 = -s.error_gain * (e * (rho - e) / rho) * eps
    t2 = (e / rho) * rho_rate
    t3 = -rho * eps / (4.0 * e * (rho - e))
    t4 = -s.r_hat**2 * sig * chi / math.sqrt(chi**2 * s.r_hat**2 + s.smoothing**2)
    r_rate = s.adapt_gain * abs(eps) * rho / (2.0 * e * (rho - e)) * sig - s.leak * s.r_hat
    return (t1, t2, t3, t4), r_rate, chi


class TestRates:
    def test_midpoint_tracks_corridor(self):
        # e = rho/2 zeroes the transformed error, leaving only the
        # corridor-tracking feedforward rho_rate/2 in theta's rate.
        s = _state(r_hat=0.4)
        t = 0.7
        rho, rho_rate = funnel(PAPER_FUNNEL, t)
        theta_rate, r_hat_rate, chi = rcbf_rates(s, t, rho / 2.0, 1.3, 0.2)
        assert chi == 0.0
        assert theta_rate == pytest.approx(rho_rate / 2.0, abs=1e-15)
        assert r_hat_rate == pytest.approx(-s.leak * 0.4, abs=1e-15)

    def test_zero_gain_midpoint(self):
        s = _state(r_hat=0.0)
        t = 0.0
        theta_rate, r_hat_rate, _ = rcbf_rates(s, t, 0.5, 2.0, 1.0)
        _, rho_rate = funnel(PAPER_FUNNEL, t)
        assert theta_rate == pytest.approx(rho_rate / 2.0, abs=1e-15)
        assert r_hat_rate == 0.0

    def test_full_four_term_agreement(self):
        rng = np.random.default_rng(19)
        for _ in range(300):
            s = _state(
                r_hat=rng.uniform(0.0, 2.0),
                error_gain=rng.uniform(0.001, 1.0),
                leak=rng.uniform(0.01, 2.0),
                adapt_gain=rng.uniform(0.001, 1.0),
                smoothing=rng.uniform(0.001, 0.1),
            )
            t = rng.uniform(0.0, 8.0)
            rho, _ = funnel(PAPER_FUNNEL, t)
            e = rho * rng.uniform(0.01, 0.99)
            grad_norm = rng.uniform(0.0, 5.0)
            est_rate_norm = rng.uniform(0.0, 5.0)
            theta_rate, r_hat_rate, chi = rcbf_rates(s, t, e, grad_norm, est_rate_norm)
            terms, r_oracle, chi_oracle = _oracle_rates(s, t, e, grad_norm, est_rate_norm)
            assert theta_rate == pytest.approx(sum(terms), rel=1e-12, abs=1e-12)
            assert r_hat_rate == pytest.approx(r_oracle, rel=1e-12, abs=1e-12)
            assert chi == pytest.approx(chi_oracle, rel=1e-12, abs=1e-12)

    def test_corridor_tracking_term_identity(self):
        # Isolate theta's second term by differencing two evaluations that
        # share every other term, then compare with (e/rho) rho_rate.
        rng = np.random.default_rng(23)
        for _ in range(200):
            t = rng.uniform(0.0, 6.0)
            rho, rho_rate = funnel(PAPER_FUNNEL, t)
            e = rho * rng.uniform(0.05, 0.95)
            s = _state(r_hat=rng.uniform(0.0, 1.0))
            theta_rate, _, _ = rcbf_rates(s, t, e, 0.7, 0.3)
            terms, _, _ = _oracle_rates(s, t, e, 0.7, 0.3)
            isolated = theta_rate - terms[0] - terms[2] - terms[3]
            assert isolated == pytest.approx((e / rho) * rho_rate, abs=1e-12)

    def test_robust_term_bounded_by_gain(self):
        # The smoothed absolute value keeps the robustification term within
        # r_hat times the signal magnitude.
        rng = np.random.default_rng(29)
        for _ in range(200):
            s = _state(r_hat=rng.uniform(0.0, 3.0), smoothing=rng.uniform(1e-4, 0.1))
            t = rng.uniform(0.0, 5.0)
            rho, _ = funnel(PAPER_FUNNEL, t)
            e = rho * rng.uniform(0.01, 0.99)
            sig = rng.uniform(0.0, 4.0)
            theta_rate, _, _ = rcbf_rates(s, t, e, sig, 0.0)
            terms, _, _ = _oracle_rates(s, t, e, sig, 0.0)
            robust = theta_rate - terms[0] - terms[1] - terms[2]
            assert abs(robust) <= s.r_hat * sig + 1e-9

    def test_out_of_corridor_input_is_clamped(self):
        s = _state(r_hat=0.5)
        t = 1.0
        rho, _ = funnel(PAPER_FUNNEL, t)
        at_edge = rcbf_rates(s, t, GUARD * rho, 1.0, 1.0)
        below = rcbf_rates(s, t, -0.4, 1.0, 1.0)
        assert below == at_edge

    def test_nonfinite_inputs_rejected(self):
        s = _state()
        with pytest.raises(ValueError, match="e must be finite"):
            rcbf_rates(s, 0.0, math.nan, 1.0, 1.0)
        with pytest.raises(ValueError, match="grad_norm"):
            rcbf_rates(s, 0.0, 0.5, math.inf, 1.0)
