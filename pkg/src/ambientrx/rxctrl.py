"""Three-step receiver orchestration and the link-budget/BER harness.

Step A receives through a wide IF band that tolerates the free-running LO
uncertainty, Step B runs the IF-feedback LO calibration, Step C narrows
the IF band around the measured residual IF and demodulates OOK payload.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import loloop
from .loloop import LoopParams, LoopResult, VcoModel
from .rffe import RffeConfig, apply_frontend
from .sigcore import (
    DEFAULT_IMPEDANCE_OHMS,
    SampledSignal,
    make_ook_carrier,
    measure_power_dbm,
    watts_to_dbm,
)


class RxMode(Enum):
    UNCERTAIN_IF = "A"
    CALIBRATING = "B"
    APPROX_LOW_IF = "C"


@dataclass(frozen=True)
class IfPlan:
    candidates_hz: tuple[float, ...]
    chosen_hz: float
    lower_bound_hz: float
    rationale: str


def plan_if(cbw_hz: float, count: int = 12) -> IfPlan:
    """Target-IF candidates cbw/4 + n*cbw/2 above the 3-channel lower bound.

    The plan puts the image exactly on a channel edge (inside the guard
    band between adjacent channels).  The default choice is the first
    candidate clearing 5.5 channels, which avoids near-DC flicker; for the
    180 kHz channel this is 1035 kHz.
    """
    if cbw_hz <= 0:
        raise ValueError("cbw must be > 0")
    bound = 3.0 * cbw_hz
    cands: list[float] = []
    n = 0
    while len(cands) < count:
        f = cbw_hz / 4.0 + cbw_hz / 2.0 * n
        if f > bound:
            cands.append(f)
        n += 1
    chosen = next((f for f in cands if f >= 5.5 * cbw_hz), cands[-1])
    return IfPlan(tuple(cands), chosen, bound, "flicker/DC avoidance")


@dataclass(frozen=True)
class RxConfig:
    """Receiver plan; bandwidths are -3 dB widths of the IF filters."""

    f_carrier_hz: float = 900e6
    cbw_hz: float = 180e3
    f_if_target_hz: float = 1.035e6
    bw_stepA_hz: float = 1.2e6
    bw_stepC_hz: float = 180e3
    snr_min_db: float = 15.0
    margin_db: float = 6.0
    symbol_rate_hz: float = 20e3
    sample_rate_hz: float = 4.5e6
    cal_duration_s: float = 1e-4
    lock_hold_cycles: int = 4
    recenter_on_measured: bool = True
    guard_band_hz: float = 0.0  # pending standardization; informational

    def __post_init__(self):
        if self.cbw_hz <= 0:
            raise ValueError("cbw must be > 0")
        if not self.bw_stepA_hz > self.bw_stepC_hz >= self.cbw_hz:
            raise ValueError("need bw_stepA > bw_stepC >= cbw")
        plan = plan_if(self.cbw_hz, count=64)
        if not any(abs(self.f_if_target_hz - c) < 1e-6 * self.f_if_target_hz for c in plan.candidates_hz):
            raise ValueError(f"f_if_target {self.f_if_target_hz} not in the IF plan for cbw {self.cbw_hz}")

    @property
    def n_preamble_symbols(self) -> int:
        return int(np.ceil(self.cal_duration_s * self.symbol_rate_hz))


@dataclass
class LinkReport:
    sensitivity_dbm: float
    ber: float | None
    snr_measured_db: float | None
    snr_stepA_db: float | None
    lock_time_s: float | None
    mode_history: list[RxMode]
    locked: bool
    f_if_measured_hz: float | None
    lock_losses: int = 0

    def __post_init__(self):
        if self.ber is not None and not (0.0 <= self.ber <= 1.0):
            raise ValueError("ber must be in [0, 1]")


def sensitivity_estimate_dbm(bw_hz: float, snr_min_db: float, nf_db: float, margin_db: float) -> float:
    """Sensitivity = -174 dBm/Hz + 10log10(BW) + SNR_min + NF + Margin."""
    if bw_hz <= 0:
        raise ValueError("bw must be > 0")
    return -174.0 + 10.0 * np.log10(bw_hz) + snr_min_db + nf_db + margin_db


_FILTER_ORDER = 4


def noise_bandwidth_hz(bw_hz: float, order: int = _FILTER_ORDER) -> float:
    """Noise-equivalent bandwidth of the Butterworth-shaped IF filter."""
    x = np.pi / (2 * order)
    return bw_hz * x / np.sin(x)


def if_filter(iq: SampledSignal, center_hz: float, bw_hz: float, order: int = _FILTER_ORDER) -> SampledSignal:
    """Band-pass around +center with -3 dB width bw.

    Frequency-domain Butterworth magnitude, zero phase (zero group delay).
    """
    if bw_hz <= 0:
        raise ValueError("bw must be > 0")
    if center_hz - bw_hz / 2.0 <= 0:
        raise ValueError("passband must stay above DC")
    freqs = np.fft.fftfreq(len(iq), d=1.0 / iq.sample_rate)
    mag = 1.0 / np.sqrt(1.0 + ((freqs - center_hz) / (bw_hz / 2.0)) ** (2 * order))
    out = np.fft.ifft(np.fft.fft(iq.samples) * mag)
    return SampledSignal(out, iq.sample_rate, iq.epoch)


class TimingError(ValueError):
    """Symbol timing cannot be resolved at this sample rate."""


def _symbol_values(samples: np.ndarray, sample_rate: float, symbol_rate: float) -> np.ndarray:
    sps = sample_rate / symbol_rate
    if sps < 2:
        raise TimingError(f"need >= 2 samples per symbol, got {sps:.2f}")
    n_sym = int(samples.size * symbol_rate / sample_rate)
    if n_sym == 0:
        return np.zeros(0)
    idx = (np.arange(samples.size) * symbol_rate / sample_rate).astype(np.int64)
    keep = idx < n_sym
    sums = np.bincount(idx[keep], weights=np.abs(samples[keep]), minlength=n_sym)
    counts = np.bincount(idx[keep], minlength=n_sym)
    return sums / np.maximum(counts, 1)


def _slicer_thresholds(values: np.ndarray, mode) -> np.ndarray:
    if isinstance(mode, (int, float)):
        return np.full(values.size, float(mode))
    if mode == "global":
        hi = float(np.mean(values[values >= np.median(values)]))
        lo = float(np.mean(values[values < np.median(values)])) if np.any(values < np.median(values)) else hi
        thr = 0.5 * hi if hi - lo <= 0.1 * hi else 0.5 * (hi + lo)
        return np.full(values.size, thr)
    if mode != "adaptive":
        raise ValueError(f"unknown threshold mode {mode!r}")
    # blockwise quartile tracking over 16-symbol windows
    win = 16
    thr = np.empty(values.size)
    for start in range(0, values.size, win):
        block = np.sort(values[start : start + win])
        q = max(1, block.size // 4)
        lo, hi = float(np.mean(block[:q])), float(np.mean(block[-q:]))
        t = 0.5 * hi if hi - lo <= 0.1 * hi else 0.5 * (hi + lo)
        thr[start : start + win] = t
    return thr


def envelope_demod(iq_if: SampledSignal, symbol_rate: float, threshold_mode="adaptive") -> np.ndarray:
    """Magnitude -> symbol integrate-and-dump -> adaptive threshold -> bits."""
    values = _symbol_values(iq_if.samples, iq_if.sample_rate, symbol_rate)
    if values.size == 0:
        return np.zeros(0, dtype=np.int64)
    thr = _slicer_thresholds(values, threshold_mode)
    return (values > thr).astype(np.int64)


def make_link_signal(
    payload_bits,
    cfg: RxConfig,
    power_dbm: float,
    cfo_hz: float = 0.0,
) -> SampledSignal:
    """Carrier-on calibration preamble followed by the OOK payload.

    The payload starts at the first symbol boundary at or after
    cfg.cal_duration_s, which run_receive relies on for alignment.
    """
    bits = np.concatenate([np.ones(cfg.n_preamble_symbols, dtype=np.int64), np.asarray(payload_bits, dtype=np.int64)])
    return make_ook_carrier(
        bits,
        cfg.symbol_rate_hz,
        cfo_hz=cfo_hz,
        power_dbm=power_dbm,
        sample_rate=cfg.sample_rate_hz,
    )


def _band_power_dbm(sig: SampledSignal, sl: slice) -> float:
    seg = sig.samples[sl]
    return watts_to_dbm(float(np.mean(np.abs(seg) ** 2)) / DEFAULT_IMPEDANCE_OHMS)


def _estimate_if_hz(samples: np.ndarray, sample_rate: float) -> float:
    prods = samples[1:] * np.conj(samples[:-1])
    return float(np.angle(np.mean(prods)) * sample_rate / (2.0 * np.pi))


def run_receive(
    rf: SampledSignal,
    cfg: RxConfig,
    loop: LoopParams,
    vco: VcoModel,
    rffe_cfg: RffeConfig | None = None,
    *,
    seed: int = 0,
    expected_bits=None,
) -> tuple[LinkReport, np.ndarray]:
    """Uncertain-IF -> IF-feedback calibration -> approximate low-IF demod.

    Returns the link report and the demodulated payload bits.  No lock
    within the calibration window yields a report whose mode history ends
    in CALIBRATING and an empty bit stream.
    """
    if rffe_cfg is None:
        rffe_cfg = RffeConfig()
    fs = rf.sample_rate
    ss = np.random.SeedSequence([seed, 0xA10])
    seed_loop, seed_fe = (int(s.generate_state(1)[0]) for s in ss.spawn(2))

    sens = sensitivity_estimate_dbm(cfg.bw_stepC_hz, cfg.snr_min_db, rffe_cfg.nf_db, cfg.margin_db)
    history = [RxMode.UNCERTAIN_IF, RxMode.CALIBRATING]

    n_pre = int(round(cfg.n_preamble_symbols * fs / cfg.symbol_rate_hz))
    head = SampledSignal(rf.samples[:n_pre], fs, rf.epoch)
    res: LoopResult = loloop.run_calibration(
        head,
        rffe_cfg,
        loop,
        vco,
        cfg.cal_duration_s,
        seed=seed_loop,
        symbol_rate=cfg.symbol_rate_hz,
        lock_hold_cycles=cfg.lock_hold_cycles,
    )
    if not res.locked:
        report = LinkReport(
            sensitivity_dbm=sens,
            ber=None,
            snr_measured_db=None,
            snr_stepA_db=None,
            lock_time_s=None,
            mode_history=history,
            locked=False,
            f_if_measured_hz=None,
        )
        return report, np.zeros(0, dtype=np.int64)

    history.append(RxMode.APPROX_LOW_IF)
    lo_offset = res.f_lo_hz - cfg.f_carrier_hz
    iq = apply_frontend(rf, rffe_cfg, lo_offset, seed_fe)
    f_if_meas = cfg.f_carrier_hz - res.f_lo_hz
    center_c = f_if_meas if cfg.recenter_on_measured else cfg.f_if_target_hz

    sig_c = if_filter(iq, center_c, cfg.bw_stepC_hz)
    sig_a = if_filter(iq, cfg.f_if_target_hz, cfg.bw_stepA_hz)
    # off-band window measures the (flat) noise floor without the carrier
    center_n = center_c + cfg.bw_stepA_hz / 2.0 + 2.0 * cfg.bw_stepC_hz
    if center_n + cfg.bw_stepC_hz / 2.0 >= 0.49 * fs:
        center_n = 0.49 * fs - cfg.bw_stepC_hz
    sig_n = if_filter(iq, center_n, cfg.bw_stepC_hz)

    pre = slice(n_pre // 4, n_pre)
    n_c = 10.0 ** (_band_power_dbm(sig_n, pre) / 10.0)
    n_a = n_c * cfg.bw_stepA_hz / cfg.bw_stepC_hz
    s_plus_n_c = 10.0 ** (_band_power_dbm(sig_c, pre) / 10.0)
    s_plus_n_a = 10.0 ** (_band_power_dbm(sig_a, pre) / 10.0)
    snr_c = 10.0 * np.log10(max(s_plus_n_c - n_c, 1e-30) / n_c)
    snr_a = 10.0 * np.log10(max(s_plus_n_a - n_a, 1e-30) / n_a)

    # Step C demodulation with lock-loss supervision per 8-symbol block
    sps = fs / cfg.symbol_rate_hz
    payload_start = int(round(cfg.n_preamble_symbols * sps))
    tol = loop.dead_zone_hz + loop.cp_quantum_hz
    block_syms = 8
    block = int(round(block_syms * sps))
    pre_power = float(np.mean(np.abs(sig_c.samples[pre]) ** 2))

    bits_out: list[np.ndarray] = []
    lock_losses = 0
    pos = payload_start
    run_start = pos
    while pos + block <= len(sig_c):
        seg = sig_c.samples[pos : pos + block]
        seg_power = float(np.mean(np.abs(seg) ** 2))
        if seg_power >= 0.25 * pre_power:
            f_est = _estimate_if_hz(seg, fs)
            if abs(f_est - center_c) > 3.0 * tol:
                # lock loss: demodulate what we have, then recalibrate here
                if pos > run_start:
                    chunk = SampledSignal(sig_c.samples[run_start:pos], fs)
                    bits_out.append(envelope_demod(chunk, cfg.symbol_rate_hz))
                lock_losses += 1
                history.extend([RxMode.CALIBRATING, RxMode.APPROX_LOW_IF])
                recal_head = SampledSignal(rf.samples[pos : pos + n_pre], fs)
                res = loloop.run_calibration(
                    recal_head, rffe_cfg, loop, vco, cfg.cal_duration_s,
                    seed=seed_loop + lock_losses, symbol_rate=cfg.symbol_rate_hz,
                    lock_hold_cycles=cfg.lock_hold_cycles,
                )
                if not res.locked:
                    history.pop()  # ends in CALIBRATING
                    break
                lo_offset = res.f_lo_hz - cfg.f_carrier_hz
                iq = apply_frontend(rf, rffe_cfg, lo_offset, seed_fe + lock_losses)
                f_if_meas = cfg.f_carrier_hz - res.f_lo_hz
                center_c = f_if_meas if cfg.recenter_on_measured else cfg.f_if_target_hz
                sig_c = if_filter(iq, center_c, cfg.bw_stepC_hz)
                pos += n_pre
                run_start = pos
                continue
        pos += block
    if run_start < len(sig_c) and history[-1] is RxMode.APPROX_LOW_IF:
        chunk = SampledSignal(sig_c.samples[run_start:], fs)
        bits_out.append(envelope_demod(chunk, cfg.symbol_rate_hz))

    bits = np.concatenate(bits_out) if bits_out else np.zeros(0, dtype=np.int64)
    ber = None
    if expected_bits is not None:
        exp = np.asarray(expected_bits, dtype=np.int64)
        n = min(exp.size, bits.size)
        errors = int(np.sum(bits[:n] != exp[:n])) + (exp.size - n)
        ber = errors / exp.size if exp.size else 0.0

    report = LinkReport(
        sensitivity_dbm=sens,
        ber=ber,
        snr_measured_db=float(snr_c),
        snr_stepA_db=float(snr_a),
        lock_time_s=res.t_lock_s,
        mode_history=history,
        locked=True,
        f_if_measured_hz=float(f_if_meas),
        lock_losses=lock_losses,
    )
    return report, bits


# --- Monte-Carlo BER harness ----------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    power_dbm: float
    ber: float
    ci_low: float
    ci_high: float
    n_bits: int


def wilson_interval(errors: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = errors / n
    denom = 1.0 + z**2 / n
    center = (p + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _sweep_trial(args) -> tuple[int, int, int, int]:
    (p_idx, t_idx, power, cfg, loop, vco, rffe_cfg, seed, n_bits) = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, p_idx, t_idx]))
    bits = rng.integers(0, 2, n_bits)
    rf = make_link_signal(bits, cfg, power)
    report, _ = run_receive(
        rf, cfg, loop, vco, rffe_cfg,
        seed=int(np.random.SeedSequence([seed, p_idx, t_idx, 1]).generate_state(1)[0]),
        expected_bits=bits,
    )
    errors = int(round((report.ber if report.ber is not None else 1.0) * n_bits))
    return p_idx, t_idx, errors, n_bits


def ber_sweep(
    power_grid_dbm,
    cfg: RxConfig,
    loop: LoopParams,
    vco: VcoModel,
    rffe_cfg: RffeConfig | None = None,
    trials: int = 4,
    seed: int = 0,
    bits_per_trial: int = 2000,
    workers: int = 1,
) -> list[SweepRow]:
    """Monte-Carlo BER per power point with Wilson 95% intervals.

    Trials fan out to a worker pool when workers > 1; results merge in
    (power, trial) order so the output is seed-stable either way.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if rffe_cfg is None:
        rffe_cfg = RffeConfig()
    tasks = [
        (p_idx, t_idx, float(p), cfg, loop, vco, rffe_cfg, seed, bits_per_trial)
        for p_idx, p in enumerate(power_grid_dbm)
        for t_idx in range(trials)
    ]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_trial, tasks))
    else:
        results = [_sweep_trial(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))

    rows: list[SweepRow] = []
    for p_idx, p in enumerate(power_grid_dbm):
        errs = sum(r[2] for r in results if r[0] == p_idx)
        n = sum(r[3] for r in results if r[0] == p_idx)
        lo, hi = wilson_interval(errs, n)
        rows.append(SweepRow(float(p), errs / n if n else 1.0, lo, hi, n))
    return rows
