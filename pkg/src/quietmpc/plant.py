"""Surrogate building: a 3-state RC network with floor heating, plus synthetic
weather, an occupancy schedule and excitation-signal generation.

The network has air, envelope and floor nodes.  Heat from the pump
(cop * P_max * u) enters the floor, solar gain enters the envelope, occupant
gain enters the air node.  One step advances the linear ODE by its exact
discretization (matrix exponential), cached per step length, so stepping is
deterministic and bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np
from scipy.linalg import expm

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


@dataclass
class RcParams:
    """Thermal network parameters, sized for a 12 m x 16 m x 2.7 m dwelling
    (overall loss coefficient about 220 W/K) with a 15 kW heat pump feeding a
    concrete floor slab."""

    r_air_env: float = 0.0015      # K/W, air to envelope
    r_env_amb: float = 0.0044      # K/W, envelope to ambient
    r_air_floor: float = 0.00052   # K/W, air to floor slab
    r_air_amb: float = 0.02        # K/W, infiltration/window path
    c_air: float = 3.0e6           # J/K, air + furnishings
    c_env: float = 6.0e7           # J/K, walls/roof mass
    c_floor: float = 3.0e7         # J/K, floor slab
    p_max_w: float = 15000.0       # electrical rating
    cop: float = 3.0               # heat output per electrical input
    solar_aperture_m2: float = 10.0

    def __post_init__(self):
        for name in ("r_air_env", "r_env_amb", "r_air_floor", "r_air_amb"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("c_air", "c_env", "c_floor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.cop < 1.0:
            raise ValueError("cop must be at least 1")
        if self.p_max_w <= 0:
            raise ValueError("p_max_w must be positive")


class RcPlant:
    """Mutable state machine; one simulation owns one instance.

    State is (T_air, T_envelope, T_floor) in deg C.
    """

    def __init__(self, params: RcParams = None, init_temp_c: float = 21.0):
        self.params = params if params is not None else RcParams()
        self.state = np.array([init_temp_c, init_temp_c, init_temp_c])
        self._disc_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def t_air(self) -> float:
        return float(self.state[0])

    def _continuous_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        g_ae = 1.0 / p.r_air_env
        g_ea = 1.0 / p.r_env_amb
        g_af = 1.0 / p.r_air_floor
        g_ao = 1.0 / p.r_air_amb
        a = np.array([
            [-(g_ae + g_af + g_ao) / p.c_air, g_ae / p.c_air, g_af / p.c_air],
            [g_ae / p.c_env, -(g_ae + g_ea) / p.c_env, 0.0],
            [g_af / p.c_floor, 0.0, -g_af / p.c_floor],
        ])
        # inputs: [u, T_amb, S, Q_occ]
        b = np.array([
            [0.0, g_ao / p.c_air, 0.0, 1.0 / p.c_air],
            [0.0, g_ea / p.c_env, p.solar_aperture_m2 / p.c_env, 0.0],
            [p.cop * p.p_max_w / p.c_floor, 0.0, 0.0, 0.0],
        ])
        return a, b

    def _discrete(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        cached = self._disc_cache.get(dt)
        if cached is not None:
            return cached
        a, b = self._continuous_matrices()
        # exact discretization via the block matrix exponential
        n, m = 3, 4
        blk = np.zeros((n + m, n + m))
        blk[:n, :n] = a * dt
        blk[:n, n:] = b * dt
        eblk = expm(blk)
        ad = eblk[:n, :n]
        bd = eblk[:n, n:]
        self._disc_cache[dt] = (ad, bd)
        return ad, bd

    def step(self, u: float, t_amb: float, s_sol: float,
             occupant_gain_w: float = 0.0, dt: float = 900.0) -> float:
        """Advance one step and return the measured air temperature."""
        if not (0.0 <= u <= 1.0):
            raise ValueError(f"u={u} outside [0, 1]")
        if dt <= 0:
            raise ValueError("dt must be positive")
        ad, bd = self._discrete(dt)
        w = np.array([u, t_amb, s_sol, occupant_gain_w])
        self.state = ad @ self.state + bd @ w
        return self.t_air


@dataclass
class WeatherSeries:
    """Ambient temperature and solar irradiation on the 900 s grid."""

    start: datetime
    t_amb: np.ndarray
    s_sol: np.ndarray

    def __post_init__(self):
        self.t_amb = as_float_array(self.t_amb, "t_amb")
        self.s_sol = as_float_array(self.s_sol, "s_sol")
        if len(self.t_amb) != len(self.s_sol):
            raise ValueError("weather series must have equal lengths")
        if np.any(self.s_sol < 0):
            raise ValueError("solar irradiation must be nonnegative")

    def __len__(self) -> int:
        return len(self.t_amb)

    def timestamps(self) -> list[datetime]:
        return time_axis(self.start, len(self))

    def to_csv(self, path) -> None:
        rows = (
            [ts.isoformat(), fmt_float(t), fmt_float(s)]
            for ts, t, s in zip(self.timestamps(), self.t_amb, self.s_sol)
        )
        write_csv(path, ["timestamp", "T_amb_C", "S_Wm2"], rows)

    @classmethod
    def from_csv(cls, path) -> "WeatherSeries":
        rows = read_csv(path, ["timestamp", "T_amb_C", "S_Wm2"])
        if not rows:
            raise ValueError(f"empty weather series: {path}")
        stamps = [parse_timestamp(r[0]) for r in rows]
        validate_spacing(stamps)
        return cls(start=stamps[0],
                   t_amb=np.array([float(r[1]) for r in rows]),
                   s_sol=np.array([float(r[2]) for r in rows]))


@dataclass(frozen=True)
class WeatherParams:
    """Winter defaults: diurnal sinusoid around 4 degC, half-sine daylight."""

    mean_c: float = 4.0
    amplitude_c: float = 4.0
    warmest_hour: float = 14.0
    solar_peak_wm2: float = 300.0
    sunrise_hour: float = 8.0
    sunset_hour: float = 17.0
    perturb_c: float = 1.5
    cloud_variability: float = 0.4


def _smooth_knots(rng: np.random.Generator, n_out: int, n_knots: int) -> np.ndarray:
    """Slowly varying series in [-1, 1]: random knots, cosine-smoothed."""
    knots = rng.uniform(-1.0, 1.0, size=n_knots)
    t = np.linspace(0.0, n_knots - 1.0, n_out)
    i0 = np.minimum(t.astype(int), n_knots - 2)
    frac = t - i0
    w = 0.5 - 0.5 * np.cos(np.pi * frac)
    return knots[i0] * (1.0 - w) + knots[i0 + 1] * w


def synth_weather(seed: int, days: int, start: datetime,
                  params: WeatherParams = None) -> WeatherSeries:
    """Deterministic synthetic weather: diurnal temperature sinusoid plus a
    seeded smooth perturbation, and a half-sine solar curve inside the
    daylight window scaled by a seeded cloudiness factor.  Irradiation is
    exactly zero outside the daylight window."""
    if days < 1:
        raise ValueError("days must be at least 1")
    p = params if params is not None else WeatherParams()
    n = days * STEPS_PER_DAY
    stamps = time_axis(start, n)
    hours = np.array([hour_of_day(ts) for ts in stamps])

    t_amb = p.mean_c + p.amplitude_c * np.cos(
        2.0 * np.pi * (hours - p.warmest_hour) / 24.0)
    rng = np.random.default_rng(seed)
    if p.perturb_c > 0:
        t_amb = t_amb + p.perturb_c * _smooth_knots(rng, n, days * 4 + 2)
    else:
        _smooth_knots(rng, n, days * 4 + 2)  # keep the stream position fixed

    daylight = (hours >= p.sunrise_hour) & (hours < p.sunset_hour)
    s_sol = np.zeros(n)
    span = p.sunset_hour - p.sunrise_hour
    s_sol[daylight] = p.solar_peak_wm2 * np.sin(
        np.pi * (hours[daylight] - p.sunrise_hour) / span)
    if p.cloud_variability > 0:
        cloud = 1.0 - p.cloud_variability * (
            0.5 + 0.5 * _smooth_knots(rng, n, days * 4 + 2))
        s_sol = s_sol * cloud
    s_sol = np.maximum(s_sol, 0.0)
    return WeatherSeries(start=start, t_amb=t_amb, s_sol=s_sol)


@dataclass(frozen=True)
class OccupancySchedule:
    """Occupants present 18:00-08:00 on weekdays and all day on weekends."""

    count: int = 5
    gain_w_each: float = 100.0
    arrive_hour: float = 18.0
    depart_hour: float = 8.0

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("occupant count must be nonnegative")

    def count_at(self, ts: datetime) -> int:
        h = hour_of_day(ts)
        if ts.weekday() >= 5:
            return self.count
        if h >= self.arrive_hour or h < self.depart_hour:
            return self.count
        return 0

    def gain_at(self, ts: datetime) -> float:
        return self.count_at(ts) * self.gain_w_each


class ExcitationGenerator:
    """Piecewise-constant random input levels for identification runs.

    Levels are uniform in [0, 1] held for a random dwell of 2-12 steps.  The
    emitted value is overridden to 0 when the building is overheated
    (T_air > 24 degC) and to 1 when overcooled (T_air < 19 degC); the
    underlying level/dwell machine keeps ticking through overrides.
    """

    OVERHEAT_C = 24.0
    OVERCOOL_C = 19.0

    def __init__(self, seed: int):
        self._rng = np.random.default_rng(seed)
        self._level = 0.0
        self._remaining = 0

    def next(self, t_air: float) -> float:
        if self._remaining <= 0:
            self._level = float(self._rng.uniform(0.0, 1.0))
            self._remaining = int(self._rng.integers(2, 13))
        self._remaining -= 1
        if t_air > self.OVERHEAT_C:
            return 0.0
        if t_air < self.OVERCOOL_C:
            return 1.0
        return self._level
