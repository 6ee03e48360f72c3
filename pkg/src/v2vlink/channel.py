"""Measurement-based V2V multipath channel generation.

Five tap-delay-line profiles (rural / urban-approaching / urban-crossing /
highway, LOS and NLOS) drive Rayleigh tap realizations, per-subcarrier
frequency responses and the per-transmission true-SNR process.  The default
tap table is frozen as package data so tests can pin it; an alternative
table can be loaded from a JSON file of the same shape.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

import numpy as np

GAIN_SUM_TOL = 1e-9


class ScenarioKind(Enum):
    """The five propagation scenarios, in fixed index order."""

    R_LOS = "R-LOS"
    UA_LOS = "U-A-LOS"
    U_NLOS = "U-NLOS"
    H_LOS = "H-LOS"
    H_NLOS = "H-NLOS"

    @property
    def index(self) -> int:
        return _SCENARIO_ORDER.index(self)


_SCENARIO_ORDER = tuple(ScenarioKind)


@dataclass
class ScenarioProfile:
    """Average tap statistics for one scenario.

    Gains are stored normalized: the linear powers 10^(g/10) sum to one, so
    a profile neither amplifies nor attenuates on average.  Delays are in
    seconds with the first tap at zero; Doppler shifts are in Hz and may be
    negative (receding reflectors).
    """

    scenario: ScenarioKind
    avg_path_gains_db: tuple[float, ...]
    path_delays_s: tuple[float, ...]
    doppler_shifts_hz: tuple[float, ...]

    def __post_init__(self):
        m = len(self.avg_path_gains_db)
        if m < 1:
            raise ValueError("profile needs at least one tap")
        if len(self.path_delays_s) != m or len(self.doppler_shifts_hz) != m:
            raise ValueError("gain/delay/doppler lengths disagree")
        if self.path_delays_s[0] != 0.0:
            raise ValueError("first path delay must be 0")
        if any(b < a for a, b in zip(self.path_delays_s, self.path_delays_s[1:])):
            raise ValueError("path delays must be nondecreasing")
        if abs(sum(self.linear_gains) - 1.0) > GAIN_SUM_TOL:
            raise ValueError("linear path gains must sum to 1")

    @property
    def tap_count(self) -> int:
        return len(self.avg_path_gains_db)

    @property
    def linear_gains(self) -> tuple[float, ...]:
        return tuple(10.0 ** (g / 10.0) for g in self.avg_path_gains_db)

    @property
    def delay_spread_s(self) -> float:
        return max(self.path_delays_s) - min(self.path_delays_s)

    @property
    def max_doppler_hz(self) -> float:
        return max(abs(d) for d in self.doppler_shifts_hz)

    @classmethod
    def from_raw(cls, scenario, gains_db, delays_s, dopplers_hz):
        """Build a profile from an unnormalized (published) gain column."""
        lin = np.asarray([10.0 ** (g / 10.0) for g in gains_db])
        lin = lin / lin.sum()
        gains = tuple(10.0 * math.log10(g) for g in lin)
        return cls(scenario, gains, tuple(float(d) for d in delays_s),
                   tuple(float(v) for v in dopplers_hz))


@dataclass
class TapSet:
    """One Rayleigh realization of a profile: complex amplitudes plus the
    profile's delays and Doppler shifts."""

    amplitudes: np.ndarray       # complex, (M,)
    path_delays_s: np.ndarray    # (M,)
    doppler_shifts_hz: np.ndarray  # (M,)


@dataclass
class SnrProcess:
    """I.i.d. uniform true-SNR draws, one per transmission."""

    min_db: float = 5.0
    max_db: float = 25.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_db < self.min_db:
            raise ValueError("snr range inverted")


def load_profile_table(path) -> dict[ScenarioKind, ScenarioProfile]:
    """Read a profile table from a JSON file keyed by scenario label."""
    with open(path) as fh:
        raw = json.load(fh)
    return _table_from_dict(raw)


def _table_from_dict(raw) -> dict[ScenarioKind, ScenarioProfile]:
    table = {}
    for kind in ScenarioKind:
        if kind.value not in raw:
            raise ValueError(f"profile table is missing scenario {kind.value!r}")
        rec = raw[kind.value]
        table[kind] = ScenarioProfile.from_raw(
            kind, rec["avg_path_gains_db"], rec["path_delays_s"],
            rec["doppler_shifts_hz"])
    return table


_DEFAULT_TABLE: dict[ScenarioKind, ScenarioProfile] | None = None


def default_profile_table() -> dict[ScenarioKind, ScenarioProfile]:
    """The frozen default table, loaded once from package data."""
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        text = resources.files("v2vlink.data").joinpath(
            "scenario_profiles.json").read_text()
        _DEFAULT_TABLE = _table_from_dict(json.loads(text))
    return _DEFAULT_TABLE


def profile_for(scenario: ScenarioKind,
                table: dict[ScenarioKind, ScenarioProfile] | None = None
                ) -> ScenarioProfile:
    """Profile for `scenario` from `table` (default: the frozen table)."""
    if table is None:
        table = default_profile_table()
    return table[scenario]


def sample_taps(profile: ScenarioProfile, rng: np.random.Generator) -> TapSet:
    """Draw one Rayleigh tap realization.

    Each amplitude is circularly-symmetric complex Gaussian with variance
    equal to the tap's linear average gain, so E|A_m|^2 reproduces the
    profile and |A_m| is Rayleigh.
    """
    gains = np.asarray(profile.linear_gains)
    m = gains.size
    z = rng.standard_normal(2 * m)
    amps = np.sqrt(gains / 2.0) * (z[:m] + 1j * z[m:])
    return TapSet(amps, np.asarray(profile.path_delays_s),
                  np.asarray(profile.doppler_shifts_hz))


def frequency_response(taps: TapSet, n_subcarriers: int,
                       subcarrier_spacing_hz: float, t_s: float) -> np.ndarray:
    """Per-subcarrier response at time `t_s`.

    H[k] = sum_m A_m * exp(j 2 pi v_m t) * exp(-j 2 pi f_k tau_m), where
    f_k = (k - n/2) * spacing is the k-th subcarrier frequency offset from
    the carrier.  Linear in the amplitudes by construction.
    """
    k = np.arange(n_subcarriers) - n_subcarriers // 2
    f_k = k * subcarrier_spacing_hz
    rotated = taps.amplitudes * np.exp(2j * np.pi * taps.doppler_shifts_hz * t_s)
    phase = np.exp(-2j * np.pi * np.outer(f_k, taps.path_delays_s))
    return phase @ rotated


def next_true_snr(process: SnrProcess, rng: np.random.Generator) -> float:
    """Draw the next per-transmission true SNR in dB."""
    return float(rng.uniform(process.min_db, process.max_db))
