"""Heat-pump noise curve, decibel arithmetic and acoustic exposure metrics.

The noise emitted by the heat pump is modelled as a piecewise-affine map from
the normalized power input u in [0, 1] to a sound level in dB.  Mixed levels,
equivalent levels and the day-evening-night weighting follow the usual
energetic (power-domain) conventions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .timeseries import (
    STEPS_PER_DAY,
    as_float_array,
    fmt_float,
    hour_of_day,
    parse_timestamp,
    read_csv,
    time_axis,
    validate_spacing,
    write_csv,
)

# Day-evening-night windows and penalties (EU Environmental Noise Directive
# convention): day 07-19 +0 dB, evening 19-23 +5 dB, night 23-07 +10 dB.
DEN_EVENING = (19.0, 23.0)
DEN_NIGHT_PENALTY = 10.0
DEN_EVENING_PENALTY = 5.0
DEN_DAY = (7.0, 19.0)

# Quiet-time window for L_quiet: 22:00 inclusive to 07:00 exclusive.
QUIET_START = 22.0
QUIET_END = 7.0


@dataclass(frozen=True)
class NoiseCurve:
    """Piecewise-affine noise map: breakpoints alpha (input fractions) and
    levels beta (dB).  alpha must be strictly increasing from 0 to 1."""

    alpha: np.ndarray
    beta: np.ndarray

    def __init__(self, alpha, beta):
        alpha = as_float_array(alpha, "alpha")
        beta = as_float_array(beta, "beta")
        if len(alpha) != len(beta):
            raise ValueError("alpha and beta must have equal length")
        if len(alpha) < 2:
            raise ValueError("curve needs at least two breakpoints")
        if np.any(np.diff(alpha) <= 0):
            raise ValueError("alpha must be strictly increasing")
        if alpha[0] != 0.0 or alpha[-1] != 1.0:
            raise ValueError("alpha must span the normalized input range [0, 1]")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def n_segments(self) -> int:
        return len(self.alpha) - 1

    def max_level(self) -> float:
        return float(np.max(self.beta))

    def min_level(self) -> float:
        return float(np.min(self.beta))


def default_curve() -> NoiseCurve:
    """Three-segment sigmoid-like curve used throughout the default config."""
    return NoiseCurve([0.0, 0.2, 0.7, 1.0], [0.0, 40.0, 60.0, 60.0])


def eval_curve(curve: NoiseCurve, u: float) -> float:
    """Noise level at input u, by linear interpolation on the containing
    segment.  Exact at breakpoints; raises for u outside [0, 1]."""
    if not (curve.alpha[0] <= u <= curve.alpha[-1]):
        raise ValueError(f"input u={u} outside the curve domain [0, 1]")
    return float(np.interp(u, curve.alpha, curve.beta))


def invert_curve_max_u(curve: NoiseCurve, limit: float) -> float:
    """Largest u in [0, 1] whose noise level does not exceed limit.

    Flat or non-monotone stretches are resolved toward the larger u.  Raises
    when no input (not even u = 0) meets the limit.
    """
    if limit < curve.beta[0]:
        raise ValueError(
            f"limit {limit} dB is below the curve's level at u=0 "
            f"({curve.beta[0]} dB); no feasible input"
        )
    alpha, beta = curve.alpha, curve.beta
    # Walk segments right to left and return the first admissible u found.
    for i in range(curve.n_segments - 1, -1, -1):
        a0, a1 = alpha[i], alpha[i + 1]
        b0, b1 = beta[i], beta[i + 1]
        if b1 <= limit:
            return float(a1)
        if b0 <= limit:
            # level crosses the limit inside this segment (b0 <= limit < b1)
            return float(a0 + (limit - b0) * (a1 - a0) / (b1 - b0))
    return float(alpha[0])


def mix(l_amb: float, l_hp: float) -> float:
    """Energetic sum of two levels: 10*log10(10^(a/10) + 10^(b/10)).

    Either argument may be -inf, meaning that source is absent.
    """
    return float(10.0 * np.log10(10.0 ** (np.asarray(l_amb) / 10.0)
                                 + 10.0 ** (np.asarray(l_hp) / 10.0)))


def mix_arrays(l_amb: np.ndarray, l_hp: np.ndarray) -> np.ndarray:
    return 10.0 * np.log10(10.0 ** (np.asarray(l_amb) / 10.0)
                           + 10.0 ** (np.asarray(l_hp) / 10.0))


def leq(levels) -> float:
    """Equivalent continuous level: energetic mean of the samples."""
    arr = np.asarray(levels, dtype=float)
    if arr.size == 0:
        raise ValueError("leq of an empty series is undefined")
    return float(10.0 * np.log10(np.mean(10.0 ** (arr / 10.0))))


@dataclass
class AmbientProfile:
    """Per-step ambient level forecast/series on the 900 s grid."""

    start: datetime
    levels: np.ndarray

    def __post_init__(self):
        self.levels = as_float_array(self.levels, "levels")
        if not np.all(np.isfinite(self.levels)):
            raise ValueError("ambient levels must be finite")

    def timestamps(self) -> list[datetime]:
        return time_axis(self.start, len(self.levels))

    def to_csv(self, path) -> None:
        rows = (
            [ts.isoformat(), fmt_float(v)]
            for ts, v in zip(self.timestamps(), self.levels)
        )
        write_csv(path, ["timestamp", "L_amb_dB"], rows)

    @classmethod
    def from_csv(cls, path) -> "AmbientProfile":
        rows = read_csv(path, ["timestamp", "L_amb_dB"])
        if not rows:
            raise ValueError(f"empty ambient profile: {path}")
        stamps = [parse_timestamp(r[0]) for r in rows]
        validate_spacing(stamps)
        return cls(start=stamps[0], levels=np.array([float(r[1]) for r in rows]))


@dataclass
class AcousticTrace:
    """Aligned per-step HP, ambient and mixed levels with timestamps."""

    start: datetime
    l_hp: np.ndarray
    l_amb: np.ndarray
    l_mix: np.ndarray = field(default=None)

    def __post_init__(self):
        self.l_hp = np.asarray(self.l_hp, dtype=float)
        self.l_amb = np.asarray(self.l_amb, dtype=float)
        if self.l_mix is None:
            self.l_mix = mix_arrays(self.l_amb, self.l_hp)
        else:
            self.l_mix = np.asarray(self.l_mix, dtype=float)
        n = len(self.l_hp)
        if len(self.l_amb) != n or len(self.l_mix) != n:
            raise ValueError("trace series must have equal lengths")
        if np.any(self.l_mix < np.maximum(self.l_hp, self.l_amb) - 1e-9):
            raise ValueError("mixed level below one of its components")

    def __len__(self) -> int:
        return len(self.l_hp)

    def timestamps(self) -> list[datetime]:
        return time_axis(self.start, len(self))

    def hours(self) -> np.ndarray:
        return np.array([hour_of_day(ts) for ts in self.timestamps()])


def _in_window(hours: np.ndarray, start: float, end: float) -> np.ndarray:
    """Half-open clock window [start, end), wrapping past midnight."""
    if start <= end:
        return (hours >= start) & (hours < end)
    return (hours >= start) | (hours < end)


def l_den(trace: AcousticTrace) -> float:
    """Day-evening-night level of the mixed noise over whole days.

    Energetic 24 h mean with +5 dB added to evening (19-23) and +10 dB to
    night (23-07) samples before averaging.
    """
    n = len(trace)
    if n == 0 or n % STEPS_PER_DAY != 0:
        raise ValueError("trace must cover an integer number of days")
    hours = trace.hours()
    penalty = np.zeros(n)
    penalty[_in_window(hours, *DEN_EVENING)] = DEN_EVENING_PENALTY
    penalty[_in_window(hours, 23.0, 7.0)] = DEN_NIGHT_PENALTY
    return leq(trace.l_mix + penalty)


def l_quiet(trace: AcousticTrace) -> float:
    """Equivalent mixed-noise level over the quiet window [22:00, 07:00)."""
    mask = _in_window(trace.hours(), QUIET_START, QUIET_END)
    if not np.any(mask):
        raise ValueError("trace has no samples in the quiet window")
    return leq(trace.l_mix[mask])


def domination_time(trace: AcousticTrace) -> float:
    """Average hours per day during which the HP is louder than the ambient.

    Ties count as ambient-dominated.
    """
    n = len(trace)
    if n == 0:
        return 0.0
    steps = int(np.sum(trace.l_hp > trace.l_amb))
    days = n / STEPS_PER_DAY
    return steps * 0.25 / days


def real_noise_cost(trace: AcousticTrace) -> float:
    """Sum over the trace of the excess of the mixed level over ambient."""
    return float(np.sum(trace.l_mix - trace.l_amb))


def _raised_cosine_bump(hours: np.ndarray, center: float, half_width: float) -> np.ndarray:
    """Smooth bump in [0, 1], nonzero within +-half_width of center (clock
    distance, wrapping)."""
    dist = np.abs((hours - center + 12.0) % 24.0 - 12.0)
    out = np.zeros_like(hours)
    inside = dist < half_width
    out[inside] = 0.5 * (1.0 + np.cos(np.pi * dist[inside] / half_width))
    return out


@dataclass(frozen=True)
class AmbientParams:
    """Shape of the synthetic diurnal ambient profile.

    noise_db adds a seeded, smooth, nonnegative perturbation of at most that
    many dB on top of the deterministic diurnal shape.  The small default
    is acoustically meaningless but breaks the exact level ties between
    night-time steps, which would otherwise leave the optimizer indifferent
    among them.
    """

    floor_db: float = 40.0
    peak_db: float = 60.0
    peak_hour: float = 13.0
    main_half_width_h: float = 7.0
    late_bump_hour: float = 17.0
    late_bump_half_width_h: float = 3.0
    late_bump_weight: float = 0.2
    noise_db: float = 0.05

    def __post_init__(self):
        if self.peak_db < self.floor_db:
            raise ValueError("ambient peak level must not be below the floor")
        if self.noise_db < 0.0:
            raise ValueError("ambient noise amplitude must be nonnegative")


def synth_ambient(params: AmbientParams, days: int, start: datetime,
                  seed: int = 0) -> AmbientProfile:
    """Deterministic diurnal ambient profile: quiet nights at the floor level,
    a broad midday bump peaking at peak_hour plus a smaller late-afternoon
    bump.  The seeded perturbation is nonnegative, so levels never dip below
    the diurnal shape (the night floor stays a hard floor)."""
    n = days * STEPS_PER_DAY
    stamps = time_axis(start, n)
    hours = np.array([hour_of_day(ts) for ts in stamps])
    shape = _raised_cosine_bump(hours, params.peak_hour, params.main_half_width_h)
    shape = shape + params.late_bump_weight * _raised_cosine_bump(
        hours, params.late_bump_hour, params.late_bump_half_width_h)
    shape = shape / np.max(shape)
    levels = params.floor_db + (params.peak_db - params.floor_db) * shape
    if params.noise_db > 0.0:
        rng = np.random.default_rng(seed)
        knots = rng.uniform(-1.0, 1.0, size=days * 4 + 2)
        t = np.linspace(0.0, len(knots) - 1.0, n)
        wiggle = np.interp(t, np.arange(len(knots)), knots)
        levels = levels + params.noise_db * (0.5 + 0.5 * wiggle)
    return AmbientProfile(start=start, levels=levels)
