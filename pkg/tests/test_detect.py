import numpy as np
import pytest

from kinereco.core import TimeSeries1, TimeSeries3, magnitude
from kinereco.detect import (ImpactEvent, align_events, detect_impacts,
                             extract_window, refine_offset)
from kinereco.errors import WindowError
from kinereco.ingest import G_STANDARD, ImuRecording

THREE_G = 3.0 * G_STANDARD


def pulse_series(rate=1600.0, duration=4.0, pulses=(), base=G_STANDARD):
    """Rectangular pulses (t_start, width_s, level) on a 1 g baseline."""
    t = np.arange(int(duration * rate)) / rate
    values = np.full_like(t, base)
    for t0, width, level in pulses:
        values[(t >= t0) & (t < t0 + width)] = level
    return TimeSeries1(0.0, rate, values)


class TestDetectImpacts:
    def test_constant_one_g_yields_nothing(self):
        s = pulse_series()
        assert detect_impacts(s, THREE_G, 0.003) == []

    def test_10ms_5g_pulse_detected_at_onset(self):
        s = pulse_series(pulses=[(2.000, 0.010, 5 * G_STANDARD)])
        events = detect_impacts(s, THREE_G, 0.003)
        assert len(events) == 1
        assert abs(events[0].t0 - 2.000) <= 1.0 / s.sample_rate

    def test_2ms_pulse_rejected_by_duration_rule(self):
        s = pulse_series(pulses=[(2.000, 0.002, 5 * G_STANDARD)])
        assert detect_impacts(s, THREE_G, 0.003) == []

    def test_close_runs_suppressed_by_separation(self):
        s = pulse_series(pulses=[(1.0, 0.010, 5 * G_STANDARD),
                                 (1.05, 0.010, 5 * G_STANDARD),
                                 (2.0, 0.010, 5 * G_STANDARD)])
        events = detect_impacts(s, THREE_G, 0.003, min_separation=0.18125)
        assert [round(e.t0, 3) for e in events] == [1.0, 2.0]

    def test_count_matches_injected_supra_threshold_pulses(self):
        rng = np.random.default_rng(2)
        t0s = np.sort(rng.uniform(0.5, 9.0, size=6))
        while np.any(np.diff(t0s) < 0.5):
            t0s = np.sort(rng.uniform(0.5, 9.0, size=6))
        pulses = [(t0, 0.008, 6 * G_STANDARD) for t0 in t0s]
        pulses += [(t0 + 0.3, 0.001, 6 * G_STANDARD) for t0 in t0s]  # too short
        s = pulse_series(duration=10.0, pulses=pulses)
        events = detect_impacts(s, THREE_G, 0.003, min_separation=0.18125)
        assert len(events) == 6

    def test_invariant_under_time_shift(self):
        s = pulse_series(pulses=[(2.0, 0.010, 5 * G_STANDARD)])
        shifted = TimeSeries1(s.start_time + 11.25, s.sample_rate, s.values)
        e0 = detect_impacts(s, THREE_G, 0.003)[0]
        e1 = detect_impacts(shifted, THREE_G, 0.003)[0]
        assert e1.t0 - e0.t0 == pytest.approx(11.25)

    def test_matches_bruteforce_run_scan_on_random_signals(self):
        # oracle: explicit run-length scan with the same duration/suppression
        # semantics, sample by sample
        def brute_force(values, dt, threshold, min_dur, min_sep):
            events, i, last = [], 0, -np.inf
            while i < len(values):
                if values[i] > threshold:
                    j = i
                    while j < len(values) and values[j] > threshold:
                        j += 1
                    if (j - 1 - i) * dt > min_dur and i * dt - last >= min_sep:
                        events.append(i * dt)
                        last = i * dt
                    i = j
                else:
                    i += 1
            return events

        rng = np.random.default_rng(10)
        for _ in range(30):
            rate = 800.0
            values = np.abs(rng.normal(28.0, 6.0, size=2000))
            s = TimeSeries1(0.0, rate, values)
            got = [e.t0 for e in detect_impacts(s, THREE_G, 0.003,
                                                min_separation=0.05)]
            expected = brute_force(values, 1.0 / rate, THREE_G, 0.003, 0.05)
            assert got == pytest.approx(expected)


def recording_with_pulse(rate=1600.0, duration=3.0, t0=1.5):
    t = np.arange(int(duration * rate)) / rate
    accel = np.zeros((len(t), 3))
    accel[:, 2] = G_STANDARD
    accel[(t >= t0) & (t < t0 + 0.01), 0] = 8 * G_STANDARD
    gyro = np.zeros((len(t), 3))
    return ImuRecording("imu1", TimeSeries3(0.0, rate, gyro),
                        accel_low=None,
                        accel_high=TimeSeries3(0.0, rate, accel))


class TestExtractWindow:
    def test_event_at_recording_start_rejected(self):
        rec = recording_with_pulse()
        with pytest.raises(WindowError, match="gyro"):
            extract_window(rec, ImpactEvent(0.01, "headband"), 0.03125, 0.150)

    def test_window_length_and_relative_clock(self):
        rec = recording_with_pulse()
        win = extract_window(rec, ImpactEvent(1.5, "headband"), 0.03125, 0.150)
        span = win.gyro.end_time - win.gyro.start_time
        assert abs(span - 0.18125) <= 1.0 / rec.gyro.sample_rate
        assert win.gyro.start_time == pytest.approx(-0.03125, abs=1e-3)
        assert win.gyro.sample_rate == rec.gyro.sample_rate

    def test_windows_line_up_with_injected_impacts(self, config, clean_session_small):
        profile_events = clean_session_small.truth
        recs = {r.sensor_id: r for r in clean_session_small.headband}
        rec = recs["bt_back"]
        trig = magnitude(rec.trigger_accel)
        events = detect_impacts(trig, config.trigger.threshold,
                                config.trigger.min_duration, min_separation=0.2)
        assert len(events) == len(profile_events)
        for ev, truth in zip(events, profile_events):
            win = extract_window(rec, ev, 0.03125, 0.150)
            mag = magnitude(win.trigger_accel)
            onset = mag.times[mag.values > config.trigger.threshold][0]
            assert abs(onset) <= 2.0 / rec.trigger_accel.sample_rate
            assert abs(ev.t0 - truth.t0) < 0.02


class TestAlignEvents:
    def test_identical_lists_fully_paired(self):
        events = [ImpactEvent(t, "headband") for t in (1.0, 2.0, 3.0)]
        refs = [ImpactEvent(t, "reference") for t in (1.0, 2.0, 3.0)]
        pairs, un_h, un_r = align_events(events, refs, 0.5)
        assert len(pairs) == 3 and not un_h and not un_r
        assert all(p.offset == 0.0 for p in pairs)

    def test_uniform_shift_paired_with_offset(self):
        events = [ImpactEvent(t, "headband") for t in (1.5, 2.5, 3.5)]
        refs = [ImpactEvent(t - 0.5, "reference") for t in (1.5, 2.5, 3.5)]
        pairs, _, _ = align_events(events, refs, 1.0)
        assert len(pairs) == 3
        assert all(p.offset == pytest.approx(0.5) for p in pairs)

    def test_pairing_symmetric_under_swap(self):
        rng = np.random.default_rng(4)
        a = [ImpactEvent(float(t), "a") for t in np.sort(rng.uniform(0, 30, 8))]
        b = [ImpactEvent(float(t + rng.normal(0, 0.05)), "b") for t in
             np.sort(rng.uniform(0, 30, 10))]
        pairs_ab, _, _ = align_events(a, b, 0.4)
        pairs_ba, _, _ = align_events(b, a, 0.4)
        set_ab = {(p.headband.t0, p.reference.t0) for p in pairs_ab}
        set_ba = {(p.reference.t0, p.headband.t0) for p in pairs_ba}
        assert set_ab == set_ba

    def test_out_of_tolerance_events_stay_unpaired(self):
        a = [ImpactEvent(1.0, "a")]
        b = [ImpactEvent(3.0, "b")]
        pairs, un_a, un_b = align_events(a, b, 0.5)
        assert not pairs and len(un_a) == 1 and len(un_b) == 1


class TestOffsetRefinement:
    def test_refine_offset_recovers_injected_lag(self):
        rate = 3200.0
        t = np.arange(int(0.125 * rate)) / rate - 0.03125
        shape = np.exp(-(((t - 0.004) / 0.006) ** 2)) * 120.0 + G_STANDARD
        a = TimeSeries1(t[0], rate, np.interp(t - 0.0025, t, shape))
        b = TimeSeries1(t[0], rate, shape)
        lag = refine_offset(a, b)
        assert lag == pytest.approx(0.0025, abs=1.0 / rate)

    def test_clock_skew_recovered_on_full_session(self, config, skewed_session):
        sim = skewed_session
        recs = {r.sensor_id: r for r in sim.headband}
        trig = magnitude(recs["bt_back"].trigger_accel)
        hb_events = detect_impacts(trig, config.trigger.threshold,
                                   config.trigger.min_duration,
                                   min_separation=0.18125)
        ref_events = []
        ref_mag_parts = []
        for block in sim.reference_blocks:
            block_trig = magnitude(block.trigger_accel)
            ref_mag_parts.append(block_trig)
            found = detect_impacts(block_trig, config.trigger.threshold,
                                   config.trigger.min_duration)
            ref_events.append(ImpactEvent(found[0].t0, "reference"))
        assert len(hb_events) == len(ref_events) == 18

        from kinereco.cli import _concat_scalar
        pairs, un_h, un_r = align_events(
            hb_events, ref_events, 0.5,
            hb_accel_mag=trig, ref_accel_mag=_concat_scalar(ref_mag_parts),
        )
        assert len(pairs) == 18 and not un_h and not un_r
        offsets = np.array([p.offset for p in pairs])
        assert np.abs(offsets - 0.020).max() < 0.001
