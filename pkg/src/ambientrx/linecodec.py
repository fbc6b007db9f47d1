"""Line codecs for the reader-to-device and device-to-reader links.

Conventions (RFID-style, pinned):
  Manchester     bit 1 -> chips (1,0), bit 0 -> chips (0,1)
  PIE            EPC-Gen2-style geometry at half-Tari chip period:
                 data-0 = (1,0) lasting Tari, data-1 = (1,1,1,0) lasting 2*Tari
  FM0            biphase-space, level inversion at every bit boundary,
                 extra mid-bit inversion for data-0
  Miller         mid-bit inversion for data-1, boundary inversion between
                 consecutive data-0s, multiplied by an M-cycle square subcarrier

Decoders work on clean chip streams; clock recovery lives elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DecodeError(ValueError):
    """Chip stream violates the codec rules; position is the chip index."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (chip index {position})")
        self.position = position


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(list(bits), dtype=np.int64)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("bits must be strictly binary")
    return arr


def _as_chips(chips) -> np.ndarray:
    arr = np.asarray(list(chips), dtype=np.int64)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("chips must be strictly binary")
    return arr


@dataclass(frozen=True)
class ChipStream:
    """Binary chip sequence with its chip rate in Hz."""

    chips: np.ndarray
    chip_rate: float

    def __post_init__(self):
        if self.chip_rate <= 0:
            raise ValueError("chip_rate must be > 0")
        object.__setattr__(self, "chips", _as_chips(self.chips))

    def __len__(self) -> int:
        return self.chips.size

    @property
    def duration(self) -> float:
        return self.chips.size / self.chip_rate


# --- Manchester ---------------------------------------------------------


def manchester_encode(bits, bit_rate: float = 1.0) -> ChipStream:
    bits = _as_bits(bits)
    chips = np.empty(2 * bits.size, dtype=np.int64)
    chips[0::2] = bits
    chips[1::2] = 1 - bits
    return ChipStream(chips, 2.0 * bit_rate)


def manchester_decode(chips) -> np.ndarray:
    chips = chips.chips if isinstance(chips, ChipStream) else _as_chips(chips)
    if chips.size % 2:
        raise DecodeError("Manchester stream length must be even", chips.size - 1)
    first, second = chips[0::2], chips[1::2]
    bad = np.nonzero(first == second)[0]
    if bad.size:
        raise DecodeError("invalid Manchester pair", int(2 * bad[0]))
    return first.copy()


# --- PIE -----------------------------------------------------------------


def pie_encode(bits, tari: float) -> ChipStream:
    """Pulse-interval encode; chip period is tari/2."""
    if tari <= 0:
        raise ValueError("tari must be > 0")
    bits = _as_bits(bits)
    out: list[int] = []
    for b in bits:
        out.extend((1, 1, 1, 0) if b else (1, 0))
    return ChipStream(np.asarray(out, dtype=np.int64), 2.0 / tari)


def pie_decode(chips) -> np.ndarray:
    chips = chips.chips if isinstance(chips, ChipStream) else _as_chips(chips)
    bits: list[int] = []
    i = 0
    n = chips.size
    while i < n:
        if chips[i] != 1:
            raise DecodeError("PIE symbol must start high", i)
        run = 0
        while i + run < n and chips[i + run] == 1:
            run += 1
        if run == 1:
            bits.append(0)
        elif run == 3:
            bits.append(1)
        else:
            raise DecodeError(f"PIE high run of {run} chips matches no symbol", i)
        i += run
        if i >= n or chips[i] != 0:
            raise DecodeError("PIE symbol missing trailing low chip", min(i, n - 1))
        i += 1
    return np.asarray(bits, dtype=np.int64)


# --- FM0 -----------------------------------------------------------------


def fm0_encode(bits, start_level: int = 1, bit_rate: float = 1.0) -> ChipStream:
    """FM0 biphase-space; start_level is the level of the first half-bit."""
    bits = _as_bits(bits)
    if start_level not in (0, 1):
        raise ValueError("start_level must be 0 or 1")
    chips = np.empty(2 * bits.size, dtype=np.int64)
    level = start_level
    for k, b in enumerate(bits):
        chips[2 * k] = level
        # data-0 inverts mid-bit, data-1 holds
        second = level if b else 1 - level
        chips[2 * k + 1] = second
        level = 1 - second  # boundary inversion
    return ChipStream(chips, 2.0 * bit_rate)


def fm0_decode(chips) -> np.ndarray:
    chips = chips.chips if isinstance(chips, ChipStream) else _as_chips(chips)
    if chips.size % 2:
        raise DecodeError("FM0 stream length must be even", chips.size - 1)
    n_bits = chips.size // 2
    bits = np.empty(n_bits, dtype=np.int64)
    for k in range(n_bits):
        a, b = chips[2 * k], chips[2 * k + 1]
        bits[k] = 1 if a == b else 0
        if k + 1 < n_bits and chips[2 * k + 2] != 1 - b:
            raise DecodeError("FM0 missing boundary inversion", 2 * k + 2)
    return bits


# --- Miller --------------------------------------------------------------

_MILLER_M = (2, 4, 8)


def _miller_baseband(bits) -> np.ndarray:
    """Half-bit levels in {-1,+1} per the Miller transition rules."""
    half = np.empty(2 * bits.size, dtype=np.int64)
    cur = 1
    prev = None
    for k, b in enumerate(bits):
        if prev == 0 and b == 0:
            cur = -cur
        if b:
            half[2 * k], half[2 * k + 1] = cur, -cur
            cur = -cur
        else:
            half[2 * k], half[2 * k + 1] = cur, cur
        prev = b
    return half


def miller_encode(bits, m: int, bit_rate: float = 1.0) -> ChipStream:
    """Baseband Miller multiplied by an m-cycle square subcarrier per bit."""
    if m not in _MILLER_M:
        raise ValueError(f"m must be one of {_MILLER_M}")
    bits = _as_bits(bits)
    half = _miller_baseband(bits)
    # each half-bit spans m chips; subcarrier alternates +1/-1 per chip
    sub = np.where(np.arange(2 * m) % 2 == 0, 1, -1)
    chips = np.empty(2 * m * bits.size, dtype=np.int64)
    for k in range(bits.size):
        bb = np.repeat(half[2 * k : 2 * k + 2], m)
        chips[2 * m * k : 2 * m * (k + 1)] = bb * sub
    return ChipStream((1 + chips) // 2, 2.0 * m * bit_rate)


def miller_decode(chips, m: int) -> np.ndarray:
    if m not in _MILLER_M:
        raise ValueError(f"m must be one of {_MILLER_M}")
    chips = chips.chips if isinstance(chips, ChipStream) else _as_chips(chips)
    if chips.size % (2 * m):
        raise DecodeError(f"Miller-{m} stream length must be a multiple of {2 * m}", chips.size - 1)
    signed = 2 * chips - 1
    sub = np.where(np.arange(2 * m) % 2 == 0, 1, -1)
    n_bits = chips.size // (2 * m)
    halves = np.empty(2 * n_bits, dtype=np.int64)
    for k in range(n_bits):
        seg = signed[2 * m * k : 2 * m * (k + 1)] * sub
        for h in range(2):
            part = seg[h * m : (h + 1) * m]
            if not np.all(part == part[0]):
                raise DecodeError("Miller half-bit does not match subcarrier", 2 * m * k + h * m)
            halves[2 * k + h] = part[0]
    bits = np.where(halves[0::2] != halves[1::2], 1, 0)
    # validate transition rules between consecutive bits
    for k in range(n_bits - 1):
        end = halves[2 * k + 1]
        nxt = halves[2 * k + 2]
        flip_expected = bits[k] == 0 and bits[k + 1] == 0
        if flip_expected != (nxt != end):
            raise DecodeError("Miller boundary transition violates coding rules", 2 * m * (k + 1))
    return bits.astype(np.int64)
