import numpy as np
import pytest

from ambientrx import rffe
from ambientrx.rffe import RffeConfig, apply_frontend, downconvert, gyrator_shift_hz, selectivity_response_db
from ambientrx.sigcore import SampledSignal, dbm_to_watts, make_ook_carrier, measure_power_dbm

FS = 32.768e6


def _tone(offset_hz, power_dbm=-40.0, n=2**16):
    t = np.arange(n) / FS
    amp = np.sqrt(dbm_to_watts(power_dbm) * 50.0)
    return SampledSignal(amp * np.exp(2j * np.pi * offset_hz * t), FS)


def _fft_peak_hz(sig):
    spec = np.abs(np.fft.fft(sig.samples))
    freqs = np.fft.fftfreq(len(sig), 1 / sig.sample_rate)
    return freqs[np.argmax(spec)]


class TestGyrator:
    def test_zero_gm(self):
        assert gyrator_shift_hz(0.0, 10e-12) == 0.0

    def test_direct_evaluation(self):
        assert gyrator_shift_hz(100e-6, 10e-12) == pytest.approx(20e6, rel=1e-12)

    def test_linearity_in_gm(self):
        assert gyrator_shift_hz(200e-6, 10e-12) == pytest.approx(2 * gyrator_shift_hz(100e-6, 10e-12))

    def test_direction_flag(self):
        assert gyrator_shift_hz(100e-6, 10e-12, forward=False) == -gyrator_shift_hz(100e-6, 10e-12)

    def test_bad_cap(self):
        with pytest.raises(ValueError):
            gyrator_shift_hz(100e-6, 0.0)


class TestDownconvert:
    def test_identity_lo(self):
        sig = _tone(1.035e6)
        assert _fft_peak_hz(downconvert(sig, 0.0)) == pytest.approx(1.035e6, abs=FS / len(sig))

    def test_shift(self):
        sig = _tone(2.0e6)
        out = downconvert(sig, 0.965e6)
        assert _fft_peak_hz(out) == pytest.approx(1.035e6, abs=FS / len(sig))

    def test_inverse_rotation_recovers_signal(self):
        sig = _tone(0.5e6)
        back = downconvert(downconvert(sig, 0.7e6), -0.7e6)
        np.testing.assert_allclose(back.samples, sig.samples, rtol=1e-9)

    def test_energy_preserved(self):
        sig = _tone(1.2e6)
        out = downconvert(sig, 0.4e6)
        assert measure_power_dbm(out) == pytest.approx(measure_power_dbm(sig), abs=1e-9)


class TestSelectivity:
    def test_passband_center(self):
        cfg = RffeConfig()
        assert selectivity_response_db(0.0, cfg) == pytest.approx(cfg.gain_db)

    def test_image_rejection_anchor(self):
        cfg = RffeConfig()
        wanted = selectivity_response_db(cfg.f_if_hz, cfg)
        image = selectivity_response_db(-cfg.f_if_hz, cfg)
        assert wanted - image == pytest.approx(16.7, abs=1e-9)

    def test_oob_anchor_40_vs_4_mhz(self):
        cfg = RffeConfig()
        assert selectivity_response_db(4e6, cfg) - selectivity_response_db(40e6, cfg) == pytest.approx(
            17.0, abs=1e-9
        )

    def test_even_symmetric_iff_no_irr(self):
        offs = np.array([0.3e6, 1.035e6, 2e6, 10e6])
        sym = RffeConfig(irr_db=0.0)
        np.testing.assert_allclose(
            selectivity_response_db(offs, sym), selectivity_response_db(-offs, sym), rtol=1e-12
        )
        asym = RffeConfig()
        assert selectivity_response_db(-asym.f_if_hz, asym) < selectivity_response_db(asym.f_if_hz, asym)

    def test_oob_monotone_beyond_passband(self):
        cfg = RffeConfig()
        offs = np.linspace(1.2e6, 60e6, 400)
        resp = selectivity_response_db(offs, cfg)
        assert np.all(np.diff(resp) <= 1e-9)

    def test_custom_profile_interpolated(self):
        cfg = RffeConfig(oob_profile=((2e6, 0.0), (20e6, 30.0)))
        assert selectivity_response_db(11e6, cfg) == pytest.approx(cfg.gain_db - 15.0, abs=1e-9)

    def test_non_monotone_profile_rejected(self):
        with pytest.raises(ValueError):
            RffeConfig(oob_profile=((2e6, 10.0), (20e6, 5.0)))


class TestApplyFrontend:
    def test_noiseless_tone_passes_with_gain(self):
        cfg = RffeConfig(nf_db=0.0)
        sig = _tone(1.035e6, power_dbm=-60.0)
        out = apply_frontend(sig, cfg, 0.0, seed=0)
        assert measure_power_dbm(out) == pytest.approx(-60.0 + cfg.gain_db, abs=0.05)

    def test_image_tone_suppressed(self):
        cfg = RffeConfig(nf_db=0.0)
        wanted = apply_frontend(_tone(1.035e6), cfg, 0.0, seed=0)
        image = apply_frontend(_tone(-1.035e6), cfg, 0.0, seed=0)
        delta = measure_power_dbm(wanted) - measure_power_dbm(image)
        assert delta == pytest.approx(16.7, abs=0.5)

    def test_linear_in_signal_for_fixed_seed(self):
        cfg = RffeConfig()
        sig = _tone(1.035e6, power_dbm=-50.0)
        zero = SampledSignal(np.zeros(len(sig), dtype=complex), FS)
        out1 = apply_frontend(sig, cfg, 0.0, seed=9).samples
        out3 = apply_frontend(SampledSignal(3.0 * sig.samples, FS), cfg, 0.0, seed=9).samples
        noise = apply_frontend(zero, cfg, 0.0, seed=9).samples
        np.testing.assert_allclose(out3 - noise, 3.0 * (out1 - noise), rtol=1e-9, atol=1e-12)

    def test_output_noise_floor_matches_nf(self):
        # noise in a band of width B at the output: -174 + 10log10(B) + nf + gain
        cfg = RffeConfig(nf_db=12.0, gain_db=30.0)
        zero = SampledSignal(np.zeros(2**21, dtype=complex), FS)
        out = apply_frontend(zero, cfg, 0.0, seed=4)
        freqs = np.fft.fftfreq(len(out), 1 / FS)
        spec = np.abs(np.fft.fft(out.samples)) ** 2 / (len(out) * FS * 50.0)
        band = (freqs > 0.945e6) & (freqs < 1.125e6)
        p_dbm = 10 * np.log10(np.sum(spec[band]) * FS / len(out)) + 30.0
        expect = -174.0 + 10 * np.log10(180e3) + 12.0 + 30.0
        assert p_dbm == pytest.approx(expect, abs=0.5)

    def test_output_nf_at_target_if(self):
        cfg = RffeConfig(nf_db=12.0)
        zero = SampledSignal(np.zeros(2**21, dtype=complex), FS)
        out = apply_frontend(zero, cfg, 0.0, seed=8)
        freqs = np.fft.fftfreq(len(out), 1 / FS)
        psd = np.abs(np.fft.fft(out.samples)) ** 2 / (len(out) * FS * 50.0)
        band = np.abs(freqs - 1.035e6) < 50e3
        density_dbm_hz = 10 * np.log10(np.mean(psd[band])) + 30.0
        nf_meas = density_dbm_hz - cfg.gain_db + 174.0
        assert nf_meas == pytest.approx(12.0, abs=1.0)

    def test_link_budget_snr_at_minus_60_dbm(self):
        # SNR = -60 - (-121.45) - 12 = 49.45 dB in the 180 kHz channel
        cfg = RffeConfig(nf_db=12.0)
        sig = make_ook_carrier([1] * 40, 10e3, cfo_hz=1.035e6, power_dbm=-60.0, sample_rate=FS)
        out = apply_frontend(sig, cfg, 0.0, seed=2)
        freqs = np.fft.fftfreq(len(out), 1 / FS)
        spec = np.abs(np.fft.fft(out.samples)) ** 2
        sig_band = np.abs(freqs - 1.035e6) < 90e3
        noise_band = np.abs(freqs - 3.0e6) < 90e3
        snr = 10 * np.log10(np.sum(spec[sig_band]) / np.sum(spec[noise_band]) - 1.0)
        assert snr == pytest.approx(49.45, abs=1.0)

    def test_flicker_shaping_raises_low_frequency_noise(self):
        cfg = RffeConfig(nf_db=12.0, flicker_corner_hz=200e3)
        zero = SampledSignal(np.zeros(2**20, dtype=complex), FS)
        out = apply_frontend(zero, cfg, 0.0, seed=1)
        freqs = np.fft.fftfreq(len(out), 1 / FS)
        psd = np.abs(np.fft.fft(out.samples)) ** 2
        low = np.abs(freqs - 100e3) < 30e3
        at_if = np.abs(freqs - 1.035e6) < 30e3
        ratio_db = 10 * np.log10(np.mean(psd[low]) / np.mean(psd[at_if]))
        expect = 10 * np.log10((1 + 200e3 / 100e3) / (1 + 200e3 / 1.035e6))
        assert ratio_db == pytest.approx(expect, abs=0.7)

    def test_response_curve_export(self):
        curve = rffe.response_curve(RffeConfig(), [0.0, 4e6, 40e6])
        assert curve.shape == (3, 2)
        assert curve[0, 1] == pytest.approx(RffeConfig().gain_db)
