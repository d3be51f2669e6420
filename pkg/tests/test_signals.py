import numpy as np
import pytest

from comfortnav.signals import (AmplitudeSpectrum, SignalWindow, StateLog,
                                VehicleStateSample, WindowAnchor, amplitude_spectrum,
                                quat_from_yaw, read_state_log, window_states,
                                write_state_log, yaw_from_quat)


def make_log(n, rate=200.0, w=None, a=None, yaw=0.0):
    t = np.arange(n) / rate
    p = np.column_stack([t, np.zeros(n), np.zeros(n)])
    q = np.tile(quat_from_yaw(yaw), (n, 1))
    w = np.zeros((n, 3)) if w is None else w
    a = np.zeros((n, 3)) if a is None else a
    return StateLog(t, p, q, w, a)


def naive_dft_amplitude(x):
    """O(n^2) direct-summation DFT magnitude oracle (mean removed, /n)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    xc = x - x.mean()
    out = np.empty(n // 2 + 1)
    j = np.arange(n)
    for k in range(n // 2 + 1):
        basis = np.exp(-2j * np.pi * j * k / n)
        out[k] = np.abs(np.sum(xc * basis)) / n
    return out


class TestWindowing:
    def test_window_counts(self):
        assert len(window_states(make_log(1024), 256, 128)) == 7
        assert len(window_states(make_log(256), 256, 128)) == 1
        assert window_states(make_log(255), 256, 128) == []

    def test_offsets_follow_stride(self):
        ws = window_states(make_log(1024), 256, 128)
        assert [w.start_index for w in ws] == [0, 128, 256, 384, 512, 640, 768]

    def test_anchor_is_center_sample(self):
        log = make_log(512)
        ws = window_states(log, 256, 128)
        assert ws[0].anchor.t == pytest.approx(log.t[128])
        assert np.allclose(ws[1].anchor.position, log.p[128 + 128])

    def test_non_monotone_rejected(self):
        t = np.arange(300) / 200.0
        t[100] = t[99]  # stall
        with pytest.raises(ValueError, match="strictly increasing"):
            StateLog(t, np.zeros((300, 3)), np.tile([1.0, 0, 0, 0], (300, 1)),
                     np.zeros((300, 3)), np.zeros((300, 3)))

    def test_bad_params(self):
        with pytest.raises(ValueError):
            window_states(make_log(300), 0, 128)
        with pytest.raises(ValueError):
            window_states(make_log(300), 256, 0)

    def test_window_carries_channels(self):
        n = 300
        w = np.column_stack([np.full(n, 1.0), np.full(n, 2.0), np.zeros(n)])
        a = np.column_stack([np.zeros(n), np.zeros(n), np.full(n, 3.0)])
        win = window_states(make_log(n, w=w, a=a), 256, 128)[0]
        assert np.allclose(win.samples[:, 0], 1.0)
        assert np.allclose(win.samples[:, 1], 2.0)
        assert np.allclose(win.samples[:, 2], 3.0)


class TestAmplitudeSpectrum:
    def window_of(self, signal3):
        return SignalWindow(signal3, 0, WindowAnchor(0.0, np.zeros(3), 0.0))

    def test_constant_signal_zero_spectrum(self):
        win = self.window_of(np.full((256, 3), 7.5))
        spec = amplitude_spectrum(win)
        assert np.allclose(spec.per_axis, 0.0)

    def test_pure_tone_bin(self):
        n, k, amp = 256, 12, 0.8
        sig = np.zeros((n, 3))
        sig[:, 1] = amp * np.sin(2 * np.pi * k * np.arange(n) / n)
        spec = amplitude_spectrum(self.window_of(sig))
        assert spec.per_axis[1, k] == pytest.approx(amp / 2, abs=1e-12)
        others = np.delete(spec.per_axis[1], k)
        assert np.max(others) < 1e-12
        assert np.max(spec.per_axis[[0, 2]]) < 1e-12

    def test_matches_naive_dft_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            sig = rng.normal(size=(256, 3))
            spec = amplitude_spectrum(self.window_of(sig))
            for axis in range(3):
                oracle = naive_dft_amplitude(sig[:, axis])
                assert np.max(np.abs(spec.per_axis[axis] - oracle)) < 1e-9

    def test_linearity_power_of_two_exact(self):
        rng = np.random.default_rng(1)
        sig = rng.normal(size=(128, 3))
        sig -= sig.mean(axis=0)  # mean-removed signal per the contract
        a = amplitude_spectrum(self.window_of(sig)).per_axis
        b = amplitude_spectrum(self.window_of(2.0 * sig)).per_axis
        assert np.array_equal(2.0 * a, b)

    def test_energy_scales_down(self):
        rng = np.random.default_rng(2)
        sig = rng.normal(size=(128, 3))
        full = amplitude_spectrum(self.window_of(sig)).per_axis
        half = sig.copy()
        half[:, 0] *= 0.5
        shrunk = amplitude_spectrum(self.window_of(half)).per_axis
        assert np.sum(shrunk ** 2) <= np.sum(full ** 2) + 1e-15

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        sig = rng.normal(size=(256, 3))
        a = amplitude_spectrum(self.window_of(sig))
        b = amplitude_spectrum(self.window_of(sig.copy()))
        assert np.array_equal(a.per_axis, b.per_axis)

    def test_concatenated_layout(self):
        rng = np.random.default_rng(4)
        spec = amplitude_spectrum(self.window_of(rng.normal(size=(64, 3))))
        assert spec.concatenated.shape == (3 * 33,)
        assert np.array_equal(spec.concatenated[:33], spec.per_axis[0])
        back = AmplitudeSpectrum.from_concatenated(spec.concatenated)
        assert np.array_equal(back.per_axis, spec.per_axis)

    def test_hann_taper(self):
        rng = np.random.default_rng(5)
        sig = rng.normal(size=(256, 3))
        rect = amplitude_spectrum(self.window_of(sig))
        hann = amplitude_spectrum(self.window_of(sig), taper="hann")
        assert hann.per_axis.shape == rect.per_axis.shape
        assert not np.array_equal(hann.per_axis, rect.per_axis)
        with pytest.raises(ValueError):
            amplitude_spectrum(self.window_of(sig), taper="blackman")

    def test_non_finite_rejected(self):
        sig = np.zeros((64, 3))
        sig[10, 2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            amplitude_spectrum(self.window_of(sig))


class TestQuaternions:
    def test_yaw_roundtrip(self):
        for yaw in (-3.0, -1.2, 0.0, 0.7, 3.1):
            assert yaw_from_quat(quat_from_yaw(yaw)) == pytest.approx(yaw)

    def test_sample_validation(self):
        with pytest.raises(ValueError, match="unit quaternion"):
            VehicleStateSample(0.0, np.zeros(3), np.array([1.0, 0.2, 0, 0]),
                               np.zeros(3), np.zeros(3))


class TestStateLogIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        n = 50
        t = np.cumsum(rng.uniform(0.004, 0.006, n))
        q = rng.normal(size=(n, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        log = StateLog(t, rng.normal(size=(n, 3)), q,
                       rng.normal(size=(n, 3)), rng.normal(size=(n, 3)))
        path = tmp_path / "log.csv"
        write_state_log(log, path)
        back = read_state_log(path)
        assert np.array_equal(back.t, log.t)
        assert np.array_equal(back.p, log.p)
        assert np.array_equal(back.q, log.q)
        assert np.array_equal(back.w, log.w)
        assert np.array_equal(back.a, log.a)

    def test_write_deterministic(self, tmp_path):
        log = make_log(20)
        write_state_log(log, tmp_path / "a.csv")
        write_state_log(log, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,x\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_state_log(path)
