"""Baseband-equivalent simulator of a crystal-less ambient-IoT receiver.

An approximate low-IF architecture with a carrier-auxiliary IF-feedback LO
frequency calibration loop, plus line codecs and a link-budget/BER harness.
"""

from .linecodec import (
    ChipStream,
    DecodeError,
    fm0_decode,
    fm0_encode,
    manchester_decode,
    manchester_encode,
    miller_decode,
    miller_encode,
    pie_decode,
    pie_encode,
)
from .loloop import (
    DN,
    NONE,
    UP,
    LoopParams,
    LoopResult,
    LoopTrajectory,
    RfdState,
    SchmittConfig,
    VcoModel,
    analytic_pole_hz,
    charge_pump_and_filter,
    dfll_calibrate,
    lock_detect,
    rfd_step,
    run_calibration,
    sar_calibrate,
    schmitt,
    vco_step,
)
from .rffe import RffeConfig, apply_frontend, downconvert, gyrator_shift_hz, selectivity_response_db
from .rxctrl import (
    LinkReport,
    RxConfig,
    RxMode,
    ber_sweep,
    envelope_demod,
    if_filter,
    make_link_signal,
    plan_if,
    run_receive,
    sensitivity_estimate_dbm,
)
from .sigcore import (
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

__version__ = "0.1.0"
