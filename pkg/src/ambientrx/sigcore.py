"""Complex-baseband signal plumbing shared by every other module.

All waveforms are complex envelopes referenced to the nominal carrier; RF
frequencies appear as offsets from it.  Power bookkeeping is in dBm into a
reference impedance (50 ohm unless stated otherwise).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_SAMPLE_RATE = 32.768e6
DEFAULT_IMPEDANCE_OHMS = 50.0
THERMAL_DENSITY_DBM_HZ = -174.0


class RateError(ValueError):
    """Sample rate too low to represent the requested content."""


@dataclass(frozen=True)
class SampledSignal:
    """Uniformly sampled complex envelope.

    samples are dimensionless amplitudes (V-equivalent into the reference
    impedance used by the power helpers); sample_rate in Hz; epoch is the
    time of the first sample in seconds.
    """

    samples: np.ndarray
    sample_rate: float
    epoch: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.complex128)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        if arr.size and not np.all(np.isfinite(arr.real) & np.isfinite(arr.imag)):
            raise ValueError("signal contains non-finite samples")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        return self.epoch + np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True)
class NoiseSpec:
    """Noise density in dBm/Hz plus an excess noise figure in dB."""

    density_dbm_hz: float = THERMAL_DENSITY_DBM_HZ
    extra_nf_db: float = 0.0

    def __post_init__(self):
        if self.density_dbm_hz > -100.0:
            raise ValueError(f"density {self.density_dbm_hz} dBm/Hz above sanity bound (-100)")
        if self.extra_nf_db < 0:
            raise ValueError("extra_nf_db must be >= 0")

    def total_power_dbm(self, bandwidth_hz: float) -> float:
        """Integrated noise power over a noise-equivalent bandwidth."""
        if bandwidth_hz <= 0:
            raise ValueError("bandwidth must be > 0")
        return self.density_dbm_hz + 10.0 * np.log10(bandwidth_hz) + self.extra_nf_db


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_w: float) -> float:
    if p_w < 0:
        raise ValueError("power must be >= 0 W")
    if p_w == 0.0:
        return -np.inf
    return 10.0 * np.log10(p_w) + 30.0


def measure_power_dbm(signal: SampledSignal, ref_impedance: float = DEFAULT_IMPEDANCE_OHMS) -> float:
    """Mean-square envelope power in dBm into ref_impedance.

    An all-zero signal reports -inf (below floor); an empty signal is an error.
    """
    if len(signal) == 0:
        raise ValueError("cannot measure power of an empty signal")
    watts = float(np.mean(np.abs(signal.samples) ** 2)) / ref_impedance
    return watts_to_dbm(watts)


def amplitude_for_power(p_dbm: float, ref_impedance: float = DEFAULT_IMPEDANCE_OHMS) -> float:
    """Envelope amplitude that measures as p_dbm into ref_impedance."""
    return float(np.sqrt(dbm_to_watts(p_dbm) * ref_impedance))


def make_ook_carrier(
    bits,
    symbol_rate: float,
    cfo_hz: float = 0.0,
    power_dbm: float = 0.0,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    ref_impedance: float = DEFAULT_IMPEDANCE_OHMS,
    epoch: float = 0.0,
) -> SampledSignal:
    """OOK-keyed carrier as a complex envelope.

    Bit 1 keys the carrier on at the amplitude implied by power_dbm, bit 0
    keys it off.  A static CFO appears as the rotation exp(j*2*pi*cfo*t).
    Rectangular symbols, no pulse shaping.
    """
    bits = np.asarray(list(bits), dtype=np.int64)
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0/1")
    if symbol_rate <= 0:
        raise ValueError("symbol_rate must be > 0")
    if sample_rate < 8.0 * (abs(cfo_hz) + symbol_rate):
        raise RateError(
            f"sample_rate {sample_rate:g} < 8*(|cfo|+symbol_rate) = "
            f"{8.0 * (abs(cfo_hz) + symbol_rate):g}"
        )
    if bits.size == 0:
        return SampledSignal(np.zeros(0, dtype=np.complex128), sample_rate, epoch)

    n = int(round(bits.size * sample_rate / symbol_rate))
    t = np.arange(n) / sample_rate
    sym_idx = np.minimum((t * symbol_rate).astype(np.int64), bits.size - 1)
    gate = bits[sym_idx].astype(np.float64)
    amp = amplitude_for_power(power_dbm, ref_impedance)
    samples = amp * gate * np.exp(2j * np.pi * cfo_hz * (epoch + t))
    return SampledSignal(samples, sample_rate, epoch)


def add_awgn(signal: SampledSignal, noise: NoiseSpec, bandwidth_hz: float, seed: int) -> SampledSignal:
    """Add complex white Gaussian noise.

    The noise total power equals noise.total_power_dbm(bandwidth_hz); the
    bandwidth argument is the noise-equivalent bandwidth of that power,
    while the generated samples are white across the full sampled band.
    Deterministic for a fixed seed.
    """
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be > 0")
    rng = np.random.default_rng(seed)
    p_watts = dbm_to_watts(noise.total_power_dbm(bandwidth_hz))
    # mean |n|^2 / R = p_watts with R the default impedance convention
    sigma = np.sqrt(p_watts * DEFAULT_IMPEDANCE_OHMS / 2.0)
    n = signal.samples.size
    noise_samples = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return SampledSignal(signal.samples + noise_samples, signal.sample_rate, signal.epoch)


def save_signal(path, signal: SampledSignal) -> None:
    """Dump: one JSON header line, then interleaved re,im float64 little-endian."""
    header = {"sample_rate": signal.sample_rate, "epoch": signal.epoch, "length": len(signal)}
    inter = np.empty(2 * len(signal), dtype="<f8")
    inter[0::2] = signal.samples.real
    inter[1::2] = signal.samples.imag
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("ascii"))
        fh.write(inter.tobytes())


def load_signal(path) -> SampledSignal:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        inter = np.frombuffer(fh.read(), dtype="<f8")
    samples = inter[0::2] + 1j * inter[1::2]
    if samples.size != header["length"]:
        raise ValueError(f"dump length mismatch: header {header['length']}, data {samples.size}")
    return SampledSignal(samples, header["sample_rate"], header["epoch"])
