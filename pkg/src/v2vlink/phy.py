"""Link-layer primitives for a half-clocked 10 MHz OFDM V2V radio.

Covers the eight-entry MCS ladder, a logistic packet-error-rate model,
frame throughput and energy efficiency, synthesis of the repeated long
training symbol pair, the difference-based SNR estimator, and feature
matching of tap statistics to a scenario.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .channel import ScenarioKind, ScenarioProfile, TapSet, default_profile_table

N_DATA_SUBCARRIERS = 48
SYMBOL_TIME_S = 8e-6        # half-clocked: 6.4 us FFT period + 1.6 us guard
OVERHEAD_TIME_S = 40e-6     # preamble + signal field at the halved clock
N_SUBCARRIERS = 64


class Modulation(Enum):
    BPSK = 1
    QPSK = 2
    QAM16 = 4
    QAM64 = 6

    @property
    def bits_per_subcarrier(self) -> int:
        return self.value


@dataclass(frozen=True)
class McsEntry:
    """One modulation-and-coding option of the ladder."""

    index: int
    modulation: Modulation
    code_rate: Fraction
    data_rate_mbps: float

    @property
    def bits_per_subcarrier(self) -> int:
        return self.modulation.bits_per_subcarrier

    @property
    def bits_per_symbol(self) -> int:
        """Coded data bits carried by one OFDM symbol."""
        b = N_DATA_SUBCARRIERS * self.bits_per_subcarrier * self.code_rate
        return int(b)


_MCS_DEF = (
    (Modulation.BPSK, Fraction(1, 2)),
    (Modulation.BPSK, Fraction(3, 4)),
    (Modulation.QPSK, Fraction(1, 2)),
    (Modulation.QPSK, Fraction(3, 4)),
    (Modulation.QAM16, Fraction(1, 2)),
    (Modulation.QAM16, Fraction(3, 4)),
    (Modulation.QAM64, Fraction(2, 3)),
    (Modulation.QAM64, Fraction(3, 4)),
)


def mcs_table() -> tuple[McsEntry, ...]:
    """All eight MCS entries in ascending data-rate order.

    Rates follow from 48 data subcarriers at an 8 us symbol time:
    rate = 48 * bits_per_subcarrier * code_rate / 8 us.
    """
    entries = []
    for i, (mod, cr) in enumerate(_MCS_DEF):
        bits = N_DATA_SUBCARRIERS * mod.bits_per_subcarrier * cr
        rate = float(bits / Fraction(8))  # Mbps at 8 us per symbol
        entries.append(McsEntry(i, mod, cr, rate))
    return tuple(entries)


MCS_TABLE = mcs_table()
N_MCS = len(MCS_TABLE)


@dataclass
class PerModel:
    """Logistic packet-error-rate curves, one midpoint per MCS.

    per = max(floor, 1 / (1 + exp(slope * (snr - mid)))), i.e. 0.5 at the
    midpoint, falling toward `floor` at high SNR and saturating at 1 far
    below.  Midpoints increase with the data rate so the curves never
    cross; the shared floor models the residual Doppler/ICI error rate.

    The default midpoints put the 10%-PER point of the weakest MCS below
    the 5 dB edge of the operating range (so some choice always meets a
    10% cap) and that of the strongest at ~21.5 dB (so every MCS is the
    efficiency optimum somewhere below 25 dB).
    """

    midpoints_db: tuple[float, ...] = (2.5, 5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0)
    slopes_per_db: tuple[float, ...] = (1.5,) * 8
    floor: float = 1e-4

    def __post_init__(self):
        if len(self.midpoints_db) != N_MCS or len(self.slopes_per_db) != N_MCS:
            raise ValueError("need one midpoint and slope per MCS")
        if self.floor < 0.0:
            raise ValueError("per floor must be >= 0")
        if any(b <= a for a, b in zip(self.midpoints_db, self.midpoints_db[1:])):
            raise ValueError("midpoints must increase with MCS index")


def per(model: PerModel, mcs: McsEntry, snr_db: float) -> float:
    """Packet error rate of `mcs` at the given true SNR."""
    z = model.slopes_per_db[mcs.index] * (snr_db - model.midpoints_db[mcs.index])
    z = min(max(z, -700.0), 700.0)  # keep exp() finite; tails are flat anyway
    p = 1.0 / (1.0 + math.exp(z))
    return min(1.0, max(model.floor, p))


def per_all(model: PerModel, snr_db: float) -> np.ndarray:
    """Vector of packet error rates over the whole ladder at one SNR."""
    z = np.asarray(model.slopes_per_db) * (snr_db - np.asarray(model.midpoints_db))
    p = 1.0 / (1.0 + np.exp(np.clip(z, -700.0, 700.0)))
    return np.minimum(1.0, np.maximum(model.floor, p))


@dataclass
class FrameSpec:
    """Timing and payload of one data frame."""

    n_data_symbols: int = 100
    symbol_time_s: float = SYMBOL_TIME_S
    overhead_time_s: float = OVERHEAD_TIME_S
    bits_per_symbol: int = 24

    def __post_init__(self):
        if self.n_data_symbols < 1:
            raise ValueError("frame needs at least one data symbol")
        if self.symbol_time_s <= 0 or self.overhead_time_s < 0:
            raise ValueError("bad frame timing")

    @classmethod
    def for_mcs(cls, mcs: McsEntry, n_data_symbols: int = 100,
                symbol_time_s: float = SYMBOL_TIME_S,
                overhead_time_s: float = OVERHEAD_TIME_S) -> "FrameSpec":
        return cls(n_data_symbols, symbol_time_s, overhead_time_s,
                   mcs.bits_per_symbol)


def throughput(frame: FrameSpec, per_value: float) -> float:
    """Goodput of one frame in Mbps.

    n_s * N_b data bits delivered over the on-air time n_s * t_s + t_o,
    scaled by the probability 1 - per that the frame survives.
    """
    if not 0.0 <= per_value <= 1.0:
        raise ValueError("per must lie in [0, 1]")
    bits = frame.n_data_symbols * frame.bits_per_symbol
    air_time = frame.n_data_symbols * frame.symbol_time_s + frame.overhead_time_s
    return bits / air_time / 1e6 * (1.0 - per_value)


def energy_efficiency(throughput_mbps: float, power_w: float) -> float:
    """Delivered Mbps per transmit watt."""
    if power_w <= 0.0:
        raise ValueError("transmit power must be positive")
    return throughput_mbps / power_w


@dataclass
class LtsPair:
    """The two received copies of the long training symbol."""

    y1: np.ndarray
    y2: np.ndarray


class DegenerateLtsPairError(ValueError):
    """The two LTS copies are identical; the estimator is undefined."""


class SnrEstimationFailure(ValueError):
    """Noise exceeded the received power budget; log argument <= 0."""


def transmit_lts(h_freq: np.ndarray, lts_freq: np.ndarray,
                 noise_power_w: float, carrier_hz: float, slot_s: float,
                 rng: np.random.Generator) -> LtsPair:
    """Push the training symbol twice through the same channel response.

    y1 = H x + w1 and y2 = H x e^{j 2 pi f dt} + w2, with independent
    complex Gaussian noise of total power `noise_power_w` per symbol.  The
    residual rotation f*dt is reduced mod 1 before exponentiation so a slot
    that is an integer number of carrier cycles gives exactly zero phase.
    """
    if noise_power_w < 0.0:
        raise ValueError("noise power must be >= 0")
    n = h_freq.size
    signal = h_freq * lts_freq
    sigma = math.sqrt(noise_power_w / n / 2.0) if noise_power_w > 0 else 0.0
    z = rng.standard_normal(4 * n)
    w1 = sigma * (z[:n] + 1j * z[n:2 * n])
    w2 = sigma * (z[2 * n:3 * n] + 1j * z[3 * n:])
    rot = np.exp(2j * np.pi * math.fmod(carrier_hz * slot_s, 1.0))
    return LtsPair(signal + w1, signal * rot + w2)


def estimate_snr(pair: LtsPair, per_subcarrier_power_w: float,
                 n_subcarriers: int = N_SUBCARRIERS) -> float:
    """SNR estimate in dB from the difference of the two LTS copies.

    With the pair phase-aligned, y1 - y2 is pure noise of power 2 W, so
    2 * n_sc * p_t / |y1 - y2|^2 - 1 = (S + W) / W - 1 estimates the linear
    SNR, where p_t is the mean received power (signal plus noise) per
    subcarrier.
    """
    diff = pair.y1 - pair.y2
    denom = float(np.sum(diff.real ** 2 + diff.imag ** 2))
    if denom == 0.0:
        raise DegenerateLtsPairError("received LTS copies are identical")
    arg = 2.0 * n_subcarriers * per_subcarrier_power_w / denom - 1.0
    if arg <= 0.0:
        raise SnrEstimationFailure("noise estimate exceeds received power")
    return 10.0 * math.log10(arg)


def _features(delays_s, dopplers_hz) -> tuple[float, float]:
    delays = np.asarray(delays_s, dtype=float)
    dopplers = np.asarray(dopplers_hz, dtype=float)
    return float(delays.max() - delays.min()), float(np.abs(dopplers).max())


def identify_scenario(estimated_delays_s, estimated_dopplers_hz,
                      table: dict[ScenarioKind, ScenarioProfile] | None = None
                      ) -> ScenarioKind:
    """Nearest-profile match on (delay spread, max |Doppler|).

    Each feature is normalized by its range across the candidate profiles
    before the L2 comparison so microseconds and hertz weigh equally.  Ties
    go to the lower-index scenario.
    """
    if table is None:
        table = default_profile_table()
    profiles = [table[k] for k in ScenarioKind if k in table]
    ds, md = _features(estimated_delays_s, estimated_dopplers_hz)
    spreads = np.asarray([p.delay_spread_s for p in profiles])
    dopplers = np.asarray([p.max_doppler_hz for p in profiles])
    ds_scale = float(spreads.max() - spreads.min()) or 1.0
    md_scale = float(dopplers.max() - dopplers.min()) or 1.0
    best, best_d = None, math.inf
    for p, s, d in zip(profiles, spreads, dopplers):
        dist = ((ds - s) / ds_scale) ** 2 + ((md - d) / md_scale) ** 2
        if dist < best_d:
            best, best_d = p.scenario, dist
    return best
