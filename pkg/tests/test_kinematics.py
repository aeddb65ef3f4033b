import numpy as np
import pytest
from numpy.testing import assert_allclose

from kinereco.core import TimeSeries1, TimeSeries3, rotate_series
from kinereco.errors import ConfigError, DataError, DegenerateSignalError
from kinereco.kinematics import (A3g1Geometry, a3g1_solve, adaptive_filter,
                                 average_angular_velocity, five_point_derivative)
from kinereco.synth import HarmonicComponent, MotionProfile

from conftest import random_rotation

RATE = 1125.0
POSITIONS = [np.array([-0.064, -0.059, 0.015]),
             np.array([-0.064, 0.059, 0.015]),
             np.array([-0.090, 0.000, 0.015])]
REF_POINT = np.array([0.075, 0.0, -0.035])


def series(samples, rate=RATE, start=0.0):
    return TimeSeries3(start, rate, np.asarray(samples, dtype=float))


def random_motion(rng, n_components=3):
    """Band-limited random motion with exact analytic derivatives."""
    axes = []
    for _ in range(3):
        comps = [HarmonicComponent(
            amplitude=float(rng.uniform(0.5, 8.0)),
            freq_hz=float(rng.uniform(2.0, 40.0)),
            phase=float(rng.uniform(0, 2 * np.pi)),
            center_s=float(rng.uniform(0.05, 0.15)),
            width_s=float(rng.uniform(0.03, 0.3)),
        ) for _ in range(n_components)]
        axes.append(tuple(comps))
    q_axes = []
    for _ in range(3):
        comps = [HarmonicComponent(
            amplitude=float(rng.uniform(5.0, 150.0)),
            freq_hz=float(rng.uniform(0.0, 30.0)),
            phase=float(rng.uniform(0, 2 * np.pi)),
            center_s=float(rng.uniform(0.05, 0.15)),
            width_s=float(rng.uniform(0.01, 0.2)),
        ) for _ in range(2)]
        q_axes.append(tuple(comps))
    return MotionProfile(tuple(axes), tuple(q_axes))


def forward_sensors(motion, times, positions, gravity=(0.0, 0.0, 0.0)):
    """Exact rigid-body forward model: the independent oracle for the solve."""
    return [series(motion.acceleration_at(times, r, gravity)) for r in positions]


class TestAverageAngularVelocity:
    def test_mean_of_identical_series_is_identity(self):
        s = series(np.random.default_rng(0).normal(size=(32, 3)))
        out = average_angular_velocity([s] * 5)
        assert_allclose(out.samples, s.samples)

    def test_two_series_mean(self):
        a = series([[1.0, 0, 0]] * 4)
        b = series([[3.0, 0, 0]] * 4)
        assert_allclose(average_angular_velocity([a, b]).samples[:, 0], 2.0)

    def test_noise_reduction_close_to_sqrt5(self):
        rng = np.random.default_rng(31)
        t = np.arange(1000) / RATE
        clean = np.column_stack([np.sin(2 * np.pi * 7 * t)] * 3)
        sigma = 0.4
        ratios = []
        for _ in range(100):
            copies = [series(clean + rng.normal(scale=sigma, size=clean.shape))
                      for _ in range(5)]
            avg = average_angular_velocity(copies)
            residual_sd = (avg.samples - clean).std()
            ratios.append(residual_sd / sigma)
        ratios = np.asarray(ratios)
        assert ratios.max() < 0.6
        assert abs(ratios.mean() - 1 / np.sqrt(5)) < 0.05

    def test_mismatched_clocks_rejected(self):
        a = series(np.zeros((8, 3)))
        b = series(np.zeros((8, 3)), start=0.5)
        with pytest.raises(DataError):
            average_angular_velocity([a, b])

    def test_commutes_with_rotation(self):
        rng = np.random.default_rng(12)
        R = random_rotation(rng)
        streams = [series(rng.normal(size=(16, 3))) for _ in range(5)]
        lhs = rotate_series(average_angular_velocity(streams), R)
        rhs = average_angular_velocity([rotate_series(s, R) for s in streams])
        assert_allclose(lhs.samples, rhs.samples, atol=1e-12)


class TestFivePointDerivative:
    def test_constant_gives_zero(self):
        out = five_point_derivative(series(np.full((10, 3), 4.2)))
        assert_allclose(out.samples, 0.0, atol=1e-12)

    def test_quartic_exact_at_interior(self):
        t = 1.0 + np.arange(200) / RATE
        s = series(np.column_stack([t ** 4] * 3))
        out = five_point_derivative(s)
        expected = 4.0 * t ** 3
        rel = np.abs(out.samples[2:-2, 0] - expected[2:-2]) / expected[2:-2]
        assert rel.max() < 1e-8

    def test_sine_matches_analytic_derivative(self):
        t = np.arange(1125) / RATE
        s = series(np.column_stack([np.sin(2 * np.pi * 10 * t)] * 3))
        out = five_point_derivative(s)
        expected = 2 * np.pi * 10 * np.cos(2 * np.pi * 10 * t)
        err = np.abs(out.samples[2:-2, 0] - expected[2:-2])
        assert err.max() / np.abs(expected).max() < 1e-4

    def test_short_series_rejected(self):
        with pytest.raises(DataError):
            five_point_derivative(series(np.zeros((4, 3))))

    def test_scalar_series_supported(self):
        t = np.arange(100) / RATE
        s = TimeSeries1(0.0, RATE, t ** 2)
        out = five_point_derivative(s)
        assert_allclose(out.values[2:-2], 2 * t[2:-2], atol=1e-9)


class TestA3g1Solve:
    def test_pure_translation_recovered(self):
        n = 50
        accel = np.tile([1.5, -2.0, 9.0], (n, 1))
        accels = [series(accel) for _ in range(3)]
        omega = series(np.zeros((n, 3)))
        alpha, q, a4, residual = a3g1_solve(accels, omega, POSITIONS, REF_POINT)
        assert_allclose(alpha.samples, 0.0, atol=1e-10)
        assert_allclose(q.samples, accel, atol=1e-10)
        assert_allclose(a4.samples, accel, atol=1e-10)
        assert residual.values.max() < 1e-10

    def test_steady_spin_centripetal_only(self):
        n, w = 40, 5.0
        omega = series(np.tile([0.0, 0.0, w], (n, 1)))
        accels = []
        for r in POSITIONS:
            centripetal = np.cross([0, 0, w], np.cross([0, 0, w], r))
            accels.append(series(np.tile(centripetal, (n, 1))))
        alpha, q, a4, residual = a3g1_solve(accels, omega, POSITIONS, REF_POINT)
        assert_allclose(alpha.samples, 0.0, atol=1e-9)
        assert_allclose(q.samples, 0.0, atol=1e-9)
        expected_a4 = np.cross([0, 0, w], np.cross([0, 0, w], REF_POINT))
        assert_allclose(a4.samples, np.tile(expected_a4, (n, 1)), atol=1e-9)

    def test_forward_inverse_closure_on_synthetic_maneuver(self):
        rng = np.random.default_rng(77)
        motion = random_motion(rng)
        times = np.arange(int(0.2 * RATE)) / RATE
        accels = forward_sensors(motion, times, POSITIONS)
        omega = series(motion.omega_at(times))
        alpha, q, a4, residual = a3g1_solve(accels, omega, POSITIONS, REF_POINT)
        alpha_true = motion.alpha_at(times)
        q_true = motion.q_at(times)
        scale_a = np.abs(alpha_true).max()
        scale_q = np.abs(q_true).max()
        assert np.abs(alpha.samples - alpha_true).max() / scale_a < 1e-6
        assert np.abs(q.samples - q_true).max() / scale_q < 1e-6
        assert residual.values.max() < 1e-9
        a4_true = motion.acceleration_at(times, REF_POINT)
        assert np.abs(a4.samples - a4_true).max() / np.abs(a4_true).max() < 1e-6

    def test_gravity_shifts_q_only(self):
        rng = np.random.default_rng(13)
        motion = random_motion(rng)
        times = np.arange(120) / RATE
        omega = series(motion.omega_at(times))
        g = np.array([0.3, -9.8, 1.1])
        plain = forward_sensors(motion, times, POSITIONS)
        lifted = [series(s.samples + g) for s in plain]
        alpha0, q0, _, _ = a3g1_solve(plain, omega, POSITIONS, REF_POINT)
        alpha1, q1, _, _ = a3g1_solve(lifted, omega, POSITIONS, REF_POINT)
        assert np.abs(alpha1.samples - alpha0.samples).max() < 1e-9
        assert_allclose(q1.samples - q0.samples, np.tile(g, (len(times), 1)),
                        atol=1e-9)

    def test_frame_covariance_under_rotation(self):
        rng = np.random.default_rng(14)
        motion = random_motion(rng)
        times = np.arange(100) / RATE
        R = random_rotation(rng)
        omega = series(motion.omega_at(times))
        accels = forward_sensors(motion, times, POSITIONS)
        alpha0, q0, a40, _ = a3g1_solve(accels, omega, POSITIONS, REF_POINT)
        alpha1, q1, a41, _ = a3g1_solve(
            [rotate_series(s, R) for s in accels], rotate_series(omega, R),
            [R @ r for r in POSITIONS], R @ REF_POINT)
        assert np.abs(alpha1.samples - alpha0.samples @ R.T).max() < 1e-9
        assert np.abs(q1.samples - q0.samples @ R.T).max() < 1e-9
        assert np.abs(a41.samples - a40.samples @ R.T).max() < 1e-9

    def test_collinear_geometry_rejected(self):
        bad = [np.array([0.00, 0.0, 0.0]), np.array([0.03, 0.0, 0.0]),
               np.array([0.07, 0.0, 0.0])]
        with pytest.raises(ConfigError, match="collinear|rank"):
            A3g1Geometry(*bad)

    def test_mismatched_clock_rejected(self):
        omega = series(np.zeros((10, 3)))
        accels = [series(np.zeros((10, 3))) for _ in range(2)]
        accels.append(series(np.zeros((10, 3)), start=1.0))
        with pytest.raises(DataError):
            a3g1_solve(accels, omega, POSITIONS, REF_POINT)


class TestAdaptiveFilter:
    def window_series(self, values, rate=1600.0):
        return TimeSeries3(-0.03125, rate, values)

    def test_clean_sine_passes_through(self):
        # Slices away from the window edges: a stationary tone shows no
        # transient, the cutoff falls back to the cap, the tone is untouched.
        rate = 1600.0
        t = -0.6 + np.arange(int(1.6 * rate)) / rate
        samples = np.zeros((len(t), 3))
        samples[:, 0] = np.sin(2 * np.pi * 5.0 * t)
        out, cutoff = adaptive_filter(TimeSeries3(-0.6, rate, samples))
        assert cutoff.f_n is None
        nrmse = np.sqrt(np.mean((out.samples[:, 0] - samples[:, 0]) ** 2))
        assert nrmse / np.abs(samples[:, 0]).max() < 0.02

    def test_burst_energy_removed(self):
        rate = 1600.0
        t = -0.03125 + np.arange(int(0.213 * rate)) / rate
        sine = np.sin(2 * np.pi * 10.0 * t)
        burst = np.where((t >= 0) & (t < 0.020),
                         np.sin(2 * np.pi * 300.0 * t), 0.0)
        samples = np.zeros((len(t), 3))
        samples[:, 0] = sine + burst
        out, cutoff = adaptive_filter(self.window_series(samples, rate))
        spec_in = np.abs(np.fft.rfft(samples[:, 0]))
        spec_out = np.abs(np.fft.rfft(out.samples[:, 0]))
        freqs = np.fft.rfftfreq(len(t), d=1 / rate)
        band = (freqs > 250) & (freqs < 350)
        assert (spec_out[band] ** 2).sum() <= 0.1 * (spec_in[band] ** 2).sum()
        assert cutoff.f0 <= 180.0

    def test_all_zero_signal_rejected(self):
        rate = 1600.0
        samples = np.zeros((int(0.213 * rate), 3))
        with pytest.raises(DegenerateSignalError):
            adaptive_filter(self.window_series(samples, rate))

    def test_window_must_cover_analysis_span(self):
        rate = 1600.0
        samples = np.ones((int(0.1 * rate), 3))
        from kinereco.errors import WindowError
        with pytest.raises(WindowError):
            adaptive_filter(self.window_series(samples, rate))

    def test_single_gyro_variant_matches_on_noiseless_data(
            self, config, clean_session_small):
        # noiseless rigid-body data: every gyro reads the same field, so the
        # single-gyro A3G1 variant must agree with the averaged one
        from dataclasses import replace
        from kinereco.cli import _build_window
        from kinereco.core import magnitude
        from kinereco.detect import detect_impacts
        from kinereco.kinematics import reconstruct_headband_event

        sim = clean_session_small
        recs = {r.sensor_id: r for r in sim.headband}
        trig = magnitude(recs["bt_back"].trigger_accel)
        event = detect_impacts(trig, config.trigger.threshold,
                               config.trigger.min_duration,
                               min_separation=0.2)[0]
        window = _build_window(recs, event, config.window.pre,
                               config.window.headband_post)
        averaged = reconstruct_headband_event(window, config, "a3g1")
        single = reconstruct_headband_event(
            window, replace(config, a3g1_gyro="bt_back"), "a3g1")
        scale = np.abs(averaged.alpha_a3g1.samples).max()
        diff = np.abs(single.alpha_a3g1.samples - averaged.alpha_a3g1.samples)
        assert diff.max() / scale < 0.02

    def test_alpha_methods_agree_on_band_limited_motion(self):
        # noiseless, band-limited below f0/2: stencil and algebraic methods
        # must track each other within 5% RMS
        rng = np.random.default_rng(99)
        motion = random_motion(rng)
        times = np.arange(int(0.3 * RATE)) / RATE
        omega = series(motion.omega_at(times))
        accels = forward_sensors(motion, times, POSITIONS)
        alpha_a3g1, _, _, _ = a3g1_solve(accels, omega, POSITIONS, REF_POINT)
        alpha_diff = five_point_derivative(omega)
        num = np.sqrt(np.mean((alpha_diff.samples - alpha_a3g1.samples) ** 2))
        den = np.sqrt(np.mean(alpha_a3g1.samples ** 2))
        assert num / den < 0.05
