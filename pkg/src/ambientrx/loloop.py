"""Carrier-auxiliary IF-feedback LO frequency calibration loop.

Transient engine plus the individual behavioral blocks: Schmitt trigger,
rotational frequency detector (RFD), source-switch charge pump with a
first-order loop filter, and a ring-VCO model.  The digital alternatives
(SAR search and counter-based DFLL) live here too.

The RFD tracks the quadrant of the Schmitt-shaped I/Q IF signal sampled by
the reference clock and emits one corrective pulse per net revolution of
the sampled phase, so the pulse rate equals |f_if - f_ref|.  The engine
samples on both reference edges with a polarity fold on the odd edges,
which doubles the unambiguous capture range to roughly +/-f_ref.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .rffe import RffeConfig
from .sigcore import (
    DEFAULT_IMPEDANCE_OHMS,
    THERMAL_DENSITY_DBM_HZ,
    SampledSignal,
    dbm_to_watts,
)

UP, DN, NONE = 1, -1, 0

_QUADRANT = {(1, 1): 0, (0, 1): 1, (0, 0): 2, (1, 0): 3}


@dataclass(frozen=True)
class SchmittConfig:
    """Hysteresis window; output rises above v_high, falls below v_low."""

    v_high: float
    v_low: float

    def __post_init__(self):
        if self.v_high <= self.v_low:
            raise ValueError("v_high must exceed v_low")

    @property
    def window(self) -> float:
        return self.v_high - self.v_low


@dataclass(frozen=True)
class LoopParams:
    """Charge-pump FLL configuration.

    cp_pulse_s of None means one reference period.  The per-pulse frequency
    quantum k_vco*i_cp*pulse/c_loop sets both the acquisition rate and the
    post-lock granularity; defaults give ~151 kHz, which reproduces the
    ~12-reference-cycle settling from a 450 kHz initial error.  dead_zone
    suppresses corrective pulses once the implied frequency error (inverse
    of the measured revolution time) falls below it, freezing the loop.
    """

    i_cp_a: float = 5e-6
    c_loop_f: float = 640e-12
    r_loop_ohm: float = 0.0
    k_vco_hz_v: float = 20e6
    f_ref_hz: float = 1.035e6
    dead_zone_hz: float = 90e3
    cp_pulse_s: float | None = None
    cp_mismatch: float = 1.0
    v_mid_v: float = 0.6
    v_rail_v: tuple[float, float] = (0.0, 1.2)

    def __post_init__(self):
        if min(self.i_cp_a, self.c_loop_f, self.k_vco_hz_v, self.f_ref_hz) <= 0:
            raise ValueError("i_cp, c_loop, k_vco and f_ref must be > 0")
        if self.r_loop_ohm < 0 or self.dead_zone_hz < 0:
            raise ValueError("r_loop and dead_zone must be >= 0")

    @property
    def pulse_s(self) -> float:
        return self.cp_pulse_s if self.cp_pulse_s is not None else 1.0 / self.f_ref_hz

    @property
    def cp_quantum_hz(self) -> float:
        """LO frequency change of one full charge-pump pulse."""
        return self.k_vco_hz_v * self.i_cp_a * self.pulse_s / self.c_loop_f


@dataclass(frozen=True)
class VcoModel:
    """Ring VCO around its post-LUT center frequency.

    init_offset_ppm of None draws uniformly from +/-1000 ppm at run time.
    drift_ppm_rtsec is the random-walk intensity (ppm per sqrt-second).
    """

    f_nominal_hz: float = 898.965e6
    init_offset_ppm: float | None = 0.0
    drift_ppm_rtsec: float = 0.0
    duty: float = 0.5

    def __post_init__(self):
        if self.f_nominal_hz <= 0:
            raise ValueError("f_nominal must be > 0")
        if self.duty != 0.5:
            raise ValueError("duty is fixed at 0.5")


@dataclass
class VcoState:
    offset_ppm: float = 0.0
    drift_ppm: float = 0.0
    phase_rad: float = 0.0


@dataclass
class RfdState:
    last_quadrant: int | None = None
    step_accum: int = 0
    last_direction: int | None = None


# --- behavioral blocks ---------------------------------------------------


def schmitt(x: np.ndarray, cfg: SchmittConfig, initial: int = 0) -> np.ndarray:
    """Hysteresis comparator over a real sample stream; vectorized."""
    x = np.asarray(x, dtype=np.float64)
    marks = np.zeros(x.size, dtype=np.int8)
    marks[x > cfg.v_high] = 1
    marks[x < cfg.v_low] = -1
    idx = np.where(marks != 0, np.arange(x.size), -1)
    last = np.maximum.accumulate(idx)
    out = np.where(last < 0, initial, (marks[last] + 1) // 2)
    return out.astype(np.uint8)


def rfd_step(i_bit: int, q_bit: int, state: RfdState) -> tuple[int, RfdState]:
    """One reference-edge sample of the rotational frequency detector.

    Returns UP when the sampled quadrant completes a net forward revolution
    (IF faster than the reference), DN for a backward one, NONE otherwise.
    Two-quadrant jumps take their direction from the last seen rotation.
    """
    q = _QUADRANT[(int(i_bit), int(q_bit))]
    if state.last_quadrant is None:
        state.last_quadrant = q
        return NONE, state
    delta = (q - state.last_quadrant) % 4
    state.last_quadrant = q
    if delta == 0:
        return NONE, state
    if delta == 1:
        step = 1
    elif delta == 3:
        step = -1
    elif state.last_direction is None:
        return NONE, state  # opposite-quadrant jump with no rotation history
    else:
        step = 2 * state.last_direction
    state.last_direction = 1 if step > 0 else -1
    state.step_accum += step
    if state.step_accum >= 4:
        state.step_accum -= 4
        return UP, state
    if state.step_accum <= -4:
        state.step_accum += 4
        return DN, state
    return NONE, state


def charge_pump_and_filter(event: int, dt: float, params: LoopParams, v_ctrl: float) -> float:
    """Apply one detector event of width dt to the loop filter.

    UP sources +i_cp, DN sinks i_cp*cp_mismatch; the control voltage moves
    by I*(r_loop + dt/c_loop) and clamps to the rails.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if event == NONE:
        return v_ctrl
    current = params.i_cp_a if event == UP else -params.i_cp_a * params.cp_mismatch
    v = v_ctrl + current * (params.r_loop_ohm + dt / params.c_loop_f)
    lo, hi = params.v_rail_v
    return float(min(max(v, lo), hi))


def vco_frequency(v_ctrl: float, model: VcoModel, params: LoopParams, state: VcoState) -> float:
    ppm = state.offset_ppm + state.drift_ppm
    return model.f_nominal_hz * (1.0 + ppm * 1e-6) + params.k_vco_hz_v * (v_ctrl - params.v_mid_v)


def vco_step(
    v_ctrl: float,
    dt: float,
    model: VcoModel,
    params: LoopParams,
    state: VcoState,
    rng: np.random.Generator | None = None,
) -> tuple[VcoState, float]:
    """Advance the VCO by dt; returns the updated state and f_lo.

    The I/Q outputs are cos(phase) and sin(phase) - quadrature by
    construction at 50% duty.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if model.drift_ppm_rtsec > 0 and rng is not None:
        state.drift_ppm += float(rng.normal(0.0, model.drift_ppm_rtsec * np.sqrt(dt)))
    f_lo = vco_frequency(v_ctrl, model, params, state)
    state.phase_rad += 2.0 * np.pi * f_lo * dt
    return state, f_lo


def lo_iq(state: VcoState) -> tuple[float, float]:
    return float(np.cos(state.phase_rad)), float(np.sin(state.phase_rad))


def resolve_vco_offset_ppm(model: VcoModel, rng: np.random.Generator) -> float:
    if model.init_offset_ppm is not None:
        return float(model.init_offset_ppm)
    return float(rng.uniform(-1000.0, 1000.0))


# --- trajectory + lock ----------------------------------------------------


@dataclass
class LoopTrajectory:
    """Rows sampled at every RFD instant (half reference period)."""

    t_s: np.ndarray
    v_ctrl_v: np.ndarray
    f_lo_hz: np.ndarray
    f_if_hz: np.ndarray
    event: np.ndarray  # +1 UP, -1 DN, 0 none

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t_s,v_ctrl_v,f_lo_hz,f_if_hz,event\n")
            for k in range(self.t_s.size):
                fh.write(
                    f"{self.t_s[k]:.12g},{self.v_ctrl_v[k]:.12g},"
                    f"{self.f_lo_hz[k]:.12g},{self.f_if_hz[k]:.12g},{int(self.event[k])}\n"
                )


def lock_detect(traj: LoopTrajectory, f_ref_hz: float, tol_hz: float, hold_cycles: int) -> float | None:
    """First time |f_if - f_ref| <= tol sustained for hold reference cycles."""
    if tol_hz <= 0 or hold_cycles < 1:
        raise ValueError("tol must be > 0 and hold >= 1")
    hold_s = hold_cycles / f_ref_hz
    in_tol = np.abs(traj.f_if_hz - f_ref_hz) <= tol_hz
    start = None
    for k in range(traj.t_s.size):
        if in_tol[k]:
            if start is None:
                start = traj.t_s[k]
            if traj.t_s[k] - start >= hold_s:
                return float(start + hold_s)
        else:
            start = None
    return None


@dataclass
class LoopResult:
    locked: bool
    t_lock_s: float | None
    lock_cycles: float | None
    residual_hz: float
    f_lo_hz: float
    v_ctrl_v: float
    up_count: int
    dn_count: int
    trajectory: LoopTrajectory


def analytic_pole_hz(params: LoopParams, detector_gain_pulse_per_hz_cycle: float | None = None) -> float:
    """Closed-loop -3 dB pole of the linearized first-order model.

    The rotational detector emits |f_if - f_ref| pulses per second, i.e.
    1/f_ref pulses per Hz per reference cycle; each pulse moves the LO by
    one charge-pump quantum, so the loop rate constant is
    detector_gain * f_ref * quantum (1/s).
    """
    kd = detector_gain_pulse_per_hz_cycle
    if kd is None:
        kd = 1.0 / params.f_ref_hz
    rate = kd * params.f_ref_hz * params.cp_quantum_hz
    return rate / (2.0 * np.pi)


# --- transient engine -----------------------------------------------------


def _brickwall(x: np.ndarray, fs: float, halfwidth_hz: float) -> np.ndarray:
    spec = np.fft.fft(x)
    freqs = np.fft.fftfreq(x.size, d=1.0 / fs)
    spec[np.abs(freqs) > halfwidth_hz] = 0.0
    return np.fft.ifft(spec)


def _moving_average(x: np.ndarray, window: int) -> np.ndarray:
    window = max(1, min(window, x.size))
    csum = np.cumsum(np.concatenate([[0.0], x]))
    out = np.empty(x.size)
    out[window - 1 :] = (csum[window:] - csum[:-window]) / window
    # warm-up region averages what has been seen so far
    out[: window - 1] = csum[1:window] / np.arange(1, window)
    return out


def run_calibration(
    carrier: SampledSignal,
    rffe_cfg: RffeConfig,
    loop: LoopParams,
    vco: VcoModel,
    duration_s: float,
    *,
    seed: int = 0,
    carrier_cfo_hz: float = 0.0,
    symbol_rate: float | None = None,
    envelope_gate: bool = True,
    schmitt_cfg: SchmittConfig | None = None,
    prefilter_halfwidth_hz: float = 1.6e6,
    lock_tol_hz: float | None = None,
    lock_hold_cycles: int = 4,
) -> LoopResult:
    """Closed-loop transient: downconvert -> IF -> Schmitt -> RFD -> CP -> VCO.

    The state machine advances one RFD sampling instant (half reference
    period) per step; the carrier is read at the nearest signal sample.
    Front-end noise is injected input-referred at -174 + nf_db dBm/Hz.
    Returns a no-lock result (locked=False) when the tolerance is never
    held for lock_hold_cycles within the duration.
    """
    if not (0.5e6 <= loop.f_ref_hz <= 1.5e6):
        raise ValueError("f_ref outside the 0.5-1.5 MHz synthesizer range")
    if len(carrier) == 0:
        raise ValueError("carrier signal is empty")
    fs = carrier.sample_rate
    rng = np.random.default_rng(seed)

    x = carrier.samples.copy()
    if rffe_cfg.nf_db > 0:
        density_w = dbm_to_watts(THERMAL_DENSITY_DBM_HZ + rffe_cfg.nf_db)
        sigma = np.sqrt(density_w * fs * DEFAULT_IMPEDANCE_OHMS / 2.0)
        x += sigma * (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size))
    if prefilter_halfwidth_hz is not None and prefilter_halfwidth_hz < fs / 2:
        x = _brickwall(x, fs, prefilter_halfwidth_hz)

    mag = np.abs(x)
    if symbol_rate is not None:
        gate_window = max(1, int(round(4.0 * fs / symbol_rate)))
    else:
        gate_window = max(1, int(round(16.0 * fs / loop.f_ref_hz)))
    env = _moving_average(mag, gate_window) if envelope_gate else None

    if schmitt_cfg is None:
        head = mag[: max(1, int(round(32.0 * fs / loop.f_ref_hz)))]
        a = float(np.sqrt(np.mean(head**2)))
        if a <= 0:
            a = 1.0
        schmitt_cfg = SchmittConfig(v_high=0.3 * a, v_low=-0.3 * a)

    f_carrier = vco.f_nominal_hz + loop.f_ref_hz  # nominal plan: f_lo = f_c - f_ref
    vco_state = VcoState(offset_ppm=resolve_vco_offset_ppm(vco, rng))
    rfd_state = RfdState()
    v_ctrl = loop.v_mid_v

    dt = 1.0 / (2.0 * loop.f_ref_hz)
    n_steps = int(min(duration_s, carrier.duration) * 2.0 * loop.f_ref_hz)
    t_rows = np.empty(n_steps)
    v_rows = np.empty(n_steps)
    flo_rows = np.empty(n_steps)
    fif_rows = np.empty(n_steps)
    ev_rows = np.zeros(n_steps, dtype=np.int8)

    phase_rel = 0.0
    i_state, q_state = 0, 0
    pulse_left = 0.0
    pulse_sign = 0
    up_count = dn_count = 0
    t_rev_anchor = 0.0
    half_window = 0.5 * schmitt_cfg.window

    for k in range(n_steps):
        t = k * dt
        if vco.drift_ppm_rtsec > 0:
            vco_state.drift_ppm += float(rng.normal(0.0, vco.drift_ppm_rtsec * np.sqrt(dt)))
        f_lo = vco_frequency(v_ctrl, vco, loop, vco_state)
        rel_off = f_lo - f_carrier
        phase_rel += 2.0 * np.pi * rel_off * dt

        idx = int(round(t * fs))
        if idx >= x.size:
            n_steps = k
            break
        if_samp = x[idx] * np.exp(-1j * phase_rel)

        gate_open = True
        if envelope_gate and env is not None:
            gate_open = env[idx] >= half_window

        event = NONE
        if gate_open:
            i_raw, q_raw = if_samp.real, if_samp.imag
            if i_raw > schmitt_cfg.v_high:
                i_state = 1
            elif i_raw < schmitt_cfg.v_low:
                i_state = 0
            if q_raw > schmitt_cfg.v_high:
                q_state = 1
            elif q_raw < schmitt_cfg.v_low:
                q_state = 0
            # odd half-edges fold polarity: removes the nominal pi advance
            if k % 2:
                i_eff, q_eff = 1 - i_state, 1 - q_state
            else:
                i_eff, q_eff = i_state, q_state
            prev_accum = rfd_state.step_accum
            event, rfd_state = rfd_step(i_eff, q_eff, rfd_state)
            if prev_accum == 0 and rfd_state.step_accum != 0:
                t_rev_anchor = t
            if event != NONE:
                implied_hz = 1.0 / (t - t_rev_anchor) if t > t_rev_anchor else np.inf
                t_rev_anchor = t
                if implied_hz < loop.dead_zone_hz:
                    event = NONE  # dead zone: too-slow rotation, hold v_ctrl
                elif pulse_left > 0:
                    event = NONE  # charge pump busy
                else:
                    pulse_left = loop.pulse_s
                    pulse_sign = 1 if event == UP else -1
                    if event == UP:
                        up_count += 1
                    else:
                        dn_count += 1
                    ev_rows[k] = event
        if pulse_left > 0:
            dt_eff = min(dt, pulse_left)
            current = loop.i_cp_a if pulse_sign > 0 else -loop.i_cp_a * loop.cp_mismatch
            v_ctrl += current * dt_eff / loop.c_loop_f
            lo_rail, hi_rail = loop.v_rail_v
            v_ctrl = min(max(v_ctrl, lo_rail), hi_rail)
            pulse_left -= dt_eff

        t_rows[k] = t
        v_rows[k] = v_ctrl
        flo_rows[k] = f_lo
        fif_rows[k] = (f_carrier + carrier_cfo_hz) - f_lo

    traj = LoopTrajectory(
        t_s=t_rows[:n_steps],
        v_ctrl_v=v_rows[:n_steps],
        f_lo_hz=flo_rows[:n_steps],
        f_if_hz=fif_rows[:n_steps],
        event=ev_rows[:n_steps],
    )
    tol = lock_tol_hz if lock_tol_hz is not None else loop.dead_zone_hz + loop.cp_quantum_hz
    t_lock = lock_detect(traj, loop.f_ref_hz, tol, lock_hold_cycles) if n_steps else None
    residual = float(abs(traj.f_if_hz[-1] - loop.f_ref_hz)) if n_steps else np.inf
    return LoopResult(
        locked=t_lock is not None,
        t_lock_s=t_lock,
        lock_cycles=(t_lock * loop.f_ref_hz) if t_lock is not None else None,
        residual_hz=residual,
        f_lo_hz=float(traj.f_lo_hz[-1]) if n_steps else np.nan,
        v_ctrl_v=float(traj.v_ctrl_v[-1]) if n_steps else np.nan,
        up_count=up_count,
        dn_count=dn_count,
        trajectory=traj,
    )


# --- digital calibration alternatives -------------------------------------


@dataclass(frozen=True)
class SarResult:
    code: int
    freq_hz: float
    comparisons: int
    lsb_hz: float


def sar_calibrate(freq_comparator, n_bits: int, band_hz: tuple[float, float]) -> SarResult:
    """Successive-approximation search of an oscillator tuning code.

    freq_comparator(f) returns the sign of (f - target); it must be
    monotone over the band.  Exactly n_bits comparisons are made and the
    returned frequency is the mid-point of the final code cell, so the
    residual is at most band_width / 2**(n_bits + 1).
    """
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    lo, hi = band_hz
    if hi <= lo:
        raise ValueError("band must satisfy hi > lo")
    step = (hi - lo) / (1 << n_bits)
    code = 0
    comparisons = 0
    for k in reversed(range(n_bits)):
        trial = code | (1 << k)
        comparisons += 1
        if freq_comparator(lo + trial * step) <= 0:
            code = trial
    return SarResult(code, lo + (code + 0.5) * step, comparisons, step)


@dataclass
class DfllResult:
    codes: np.ndarray
    counts: np.ndarray
    freqs_hz: np.ndarray
    converged: bool
    limit_cycle: bool
    quantum_hz: float


def dfll_calibrate(
    f_start_hz: float,
    counter_window_s: float,
    target_count: int,
    gain_codes_per_count: float = 1.0,
    max_iter: int = 32,
    f_step_per_code_hz: float | None = None,
) -> DfllResult:
    """Digital FLL: count IF cycles per window, step a frequency code.

    The asynchronous counter carries fractional cycles across windows, so
    each count is quantized to +/-1.  The code moves by
    gain*(target - count) per iteration; with the default step of one
    counter quantum per code this is a deadbeat loop at gain 1.  A limit
    cycle (trailing oscillation beyond 2 quanta) is flagged.
    """
    if counter_window_s <= 0:
        raise ValueError("counter window must be > 0")
    quantum = 1.0 / counter_window_s
    k_dco = f_step_per_code_hz if f_step_per_code_hz is not None else quantum
    f = float(f_start_hz)
    code = 0
    carry = 0.0
    codes, counts, freqs = [], [], []
    for _ in range(max_iter):
        cycles = f * counter_window_s + carry
        count = int(np.floor(cycles))
        carry = cycles - count
        err = target_count - count
        codes.append(code)
        counts.append(count)
        freqs.append(f)
        code += int(round(gain_codes_per_count * err))
        f = max(f_start_hz + code * k_dco, 0.0)
    errs = target_count - np.asarray(counts)
    converged = bool(abs(errs[-1]) <= 1)
    tail = errs[-6:]
    limit_cycle = bool(
        tail.size >= 4
        and np.max(np.abs(tail)) > 2
        and np.any(tail > 0)
        and np.any(tail < 0)
    )
    return DfllResult(
        codes=np.asarray(codes),
        counts=np.asarray(counts),
        freqs_hz=np.asarray(freqs),
        converged=converged and not limit_cycle,
        limit_cycle=limit_cycle,
        quantum_hz=quantum,
    )
