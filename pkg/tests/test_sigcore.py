import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambientrx import sigcore
from ambientrx.sigcore import (
    NoiseSpec,
    SampledSignal,
    add_awgn,
    dbm_to_watts,
    load_signal,
    make_ook_carrier,
    measure_power_dbm,
    save_signal,
    watts_to_dbm,
)


class TestPowerConversions:
    def test_zero_dbm_is_one_milliwatt(self):
        assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-12)

    def test_thirty_dbm_is_one_watt(self):
        assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-12)

    def test_sensitivity_level_in_watts(self):
        # independent calculator value for -88.45 dBm
        assert dbm_to_watts(-88.45) == pytest.approx(1.4289e-12, rel=1e-3)

    @given(st.floats(min_value=-150.0, max_value=50.0))
    def test_round_trip(self, p):
        assert watts_to_dbm(dbm_to_watts(p)) == pytest.approx(p, rel=1e-12, abs=1e-9)

    def test_zero_watts_reports_below_floor(self):
        assert watts_to_dbm(0.0) == -np.inf


class TestMeasurePower:
    def test_unit_amplitude_tone_into_50_ohm(self):
        sig = SampledSignal(np.ones(1000, dtype=complex), 1e6)
        assert measure_power_dbm(sig) == pytest.approx(10 * np.log10(1000 / 50), abs=1e-9)

    def test_all_zero_signal_is_below_floor(self):
        sig = SampledSignal(np.zeros(64, dtype=complex), 1e6)
        assert measure_power_dbm(sig) == -np.inf

    def test_doubling_amplitude_adds_6dB(self):
        sig = SampledSignal(np.ones(100, dtype=complex), 1e6)
        sig2 = SampledSignal(2.0 * sig.samples, 1e6)
        assert measure_power_dbm(sig2) - measure_power_dbm(sig) == pytest.approx(
            20 * np.log10(2), abs=1e-9
        )

    def test_empty_signal_rejected(self):
        sig = SampledSignal(np.zeros(0, dtype=complex), 1e6)
        with pytest.raises(ValueError):
            measure_power_dbm(sig)

    @given(st.floats(min_value=0.01, max_value=100.0))
    @settings(max_examples=30)
    def test_power_scales_with_gain_squared(self, g):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        base = SampledSignal(x, 1e6)
        scaled = SampledSignal(g * x, 1e6)
        w0 = dbm_to_watts(measure_power_dbm(base))
        w1 = dbm_to_watts(measure_power_dbm(scaled))
        assert w1 == pytest.approx(g * g * w0, rel=1e-9)


class TestOokCarrier:
    def test_constant_carrier_hits_requested_power(self):
        sig = make_ook_carrier([1], symbol_rate=10e3, cfo_hz=0.0, power_dbm=0.0, sample_rate=1e6)
        assert measure_power_dbm(sig) == pytest.approx(0.0, abs=0.1)

    def test_off_bit_is_exactly_zero(self):
        sig = make_ook_carrier([1, 0], symbol_rate=10e3, power_dbm=0.0, sample_rate=1e6)
        half = len(sig) // 2
        assert np.all(sig.samples[half:] == 0)
        assert np.all(np.abs(sig.samples[:half]) > 0)

    def test_cfo_appears_as_fft_peak(self):
        fs = 32.768e6
        sig = make_ook_carrier(
            [1] * 64, symbol_rate=10e3, cfo_hz=1.035e6, power_dbm=0.0, sample_rate=fs
        )
        spec = np.abs(np.fft.fft(sig.samples))
        freqs = np.fft.fftfreq(len(sig), 1 / fs)
        peak = freqs[np.argmax(spec)]
        assert abs(peak - 1.035e6) <= fs / len(sig)

    def test_cfo_rotation_preserves_envelope(self):
        # exact up to the 1-ulp rounding of |a * exp(j*theta)|
        a = make_ook_carrier([1] * 8, 10e3, cfo_hz=0.0, power_dbm=-20, sample_rate=1e6)
        b = make_ook_carrier([1] * 8, 10e3, cfo_hz=37e3, power_dbm=-20, sample_rate=1e6)
        np.testing.assert_allclose(np.abs(a.samples), np.abs(b.samples), rtol=1e-12)

    def test_low_sample_rate_rejected(self):
        with pytest.raises(sigcore.RateError):
            make_ook_carrier([1], symbol_rate=10e3, cfo_hz=1e6, power_dbm=0.0, sample_rate=1e6)

    def test_empty_bits_give_empty_signal(self):
        sig = make_ook_carrier([], symbol_rate=10e3, power_dbm=0.0, sample_rate=1e6)
        assert len(sig) == 0


class TestAwgn:
    def test_noise_power_formula_180khz(self):
        assert NoiseSpec().total_power_dbm(180e3) == pytest.approx(-121.45, abs=0.01)

    def test_noise_power_with_12db_nf_measured(self):
        spec = NoiseSpec(extra_nf_db=12.0)
        silent = SampledSignal(np.zeros(2**20, dtype=complex), 32.768e6)
        noisy = add_awgn(silent, spec, 180e3, seed=3)
        assert measure_power_dbm(noisy) == pytest.approx(-109.45, abs=0.3)

    def test_same_seed_bit_identical(self):
        sig = make_ook_carrier([1] * 4, 10e3, power_dbm=-60, sample_rate=1e6)
        a = add_awgn(sig, NoiseSpec(), 180e3, seed=11)
        b = add_awgn(sig, NoiseSpec(), 180e3, seed=11)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_different_seed_differs(self):
        sig = make_ook_carrier([1] * 4, 10e3, power_dbm=-60, sample_rate=1e6)
        a = add_awgn(sig, NoiseSpec(), 180e3, seed=11)
        b = add_awgn(sig, NoiseSpec(), 180e3, seed=12)
        assert not np.array_equal(a.samples, b.samples)

    def test_density_sanity_bound(self):
        with pytest.raises(ValueError):
            NoiseSpec(density_dbm_hz=-50.0)


class TestSignalType:
    def test_rejects_nonfinite_samples(self):
        with pytest.raises(ValueError):
            SampledSignal(np.array([1.0, np.nan]), 1e6)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            SampledSignal(np.ones(4), 0.0)

    def test_duration(self):
        assert SampledSignal(np.ones(100), 1e3).duration == pytest.approx(0.1)

    def test_dump_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        sig = SampledSignal(rng.standard_normal(33) + 1j * rng.standard_normal(33), 2e6, epoch=0.25)
        path = tmp_path / "sig.bin"
        save_signal(path, sig)
        back = load_signal(path)
        assert back.sample_rate == sig.sample_rate
        assert back.epoch == sig.epoch
        np.testing.assert_array_equal(back.samples, sig.samples)
