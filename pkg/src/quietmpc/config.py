"""Run configuration: one TOML file with typed sections, strict validation.

Unknown keys are rejected by name.  Every tunable default of the toolkit
lives here; the CLI overrides a handful of them with flags.  A single master
seed fans out to fixed per-purpose sub-seeds so whole runs are reproducible
from (config, seed) alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import datetime

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .acoustics import AmbientParams, NoiseCurve
from .controller import MpcConfig
from .plant import OccupancySchedule, RcParams, WeatherParams


class ConfigError(ValueError):
    pass


# deterministic sub-seed offsets from the master seed
SEED_WEATHER_TRAIN = 11
SEED_WEATHER_TEST = 12
SEED_WEATHER_CONTROL = 13
SEED_EXCITATION_TRAIN = 21
SEED_EXCITATION_TEST = 22
SEED_AMBIENT = 31


def sub_seed(master: int, offset: int) -> int:
    return master * 1000 + offset


@dataclass
class PricesConfig:
    low_per_kwh: float = 0.10
    high_per_kwh: float = 0.20
    low_start: float = 22.0
    low_end: float = 7.0


@dataclass
class NoiseConfig:
    alpha: list = field(default_factory=lambda: [0.0, 0.2, 0.7, 1.0])
    beta: list = field(default_factory=lambda: [0.0, 40.0, 60.0, 60.0])
    ambient_floor_db: float = 40.0
    ambient_peak_db: float = 60.0
    ambient_peak_hour: float = 13.0
    ambient_noise_db: float = 0.05
    hp_off_silent: bool = False

    def curve(self) -> NoiseCurve:
        return NoiseCurve(self.alpha, self.beta)

    def ambient_params(self) -> AmbientParams:
        return AmbientParams(
            floor_db=self.ambient_floor_db, peak_db=self.ambient_peak_db,
            peak_hour=self.ambient_peak_hour, noise_db=self.ambient_noise_db)


@dataclass
class SweepConfig:
    eta_grid: list = field(default_factory=lambda: [0.0, 1.0, 6.0, 32.0, 178.0, 1000.0])
    days: int = 7
    workers: int = 2
    options: list = field(default_factory=lambda: ["ratio", "exceedance"])


@dataclass
class IoConfig:
    out_dir: str = "out"
    record_timing: bool = True
    start: str = "2026-01-05T00:00:00"

    def start_time(self) -> datetime:
        return datetime.fromisoformat(self.start)


@dataclass
class IdentificationConfig:
    train_days: int = 7
    test_days: int = 7
    orders: list = field(default_factory=lambda: [4, 1, 2, 2])
    validation_window_h: float = 12.0


@dataclass
class PlantConfig:
    r_air_env: float = 0.0015
    r_env_amb: float = 0.0044
    r_air_floor: float = 0.00052
    r_air_amb: float = 0.02
    c_air: float = 3.0e6
    c_env: float = 6.0e7
    c_floor: float = 3.0e7
    p_max_w: float = 15000.0
    cop: float = 3.0
    solar_aperture_m2: float = 10.0
    init_temp_c: float = 21.0

    def rc_params(self) -> RcParams:
        return RcParams(
            r_air_env=self.r_air_env, r_env_amb=self.r_env_amb,
            r_air_floor=self.r_air_floor, r_air_amb=self.r_air_amb,
            c_air=self.c_air, c_env=self.c_env, c_floor=self.c_floor,
            p_max_w=self.p_max_w, cop=self.cop,
            solar_aperture_m2=self.solar_aperture_m2)


@dataclass
class OccupancyConfig:
    count: int = 5
    gain_w: float = 100.0
    arrive_hour: float = 18.0
    depart_hour: float = 8.0

    def schedule(self) -> OccupancySchedule:
        return OccupancySchedule(count=self.count, gain_w_each=self.gain_w,
                                 arrive_hour=self.arrive_hour,
                                 depart_hour=self.depart_hour)


@dataclass
class WeatherConfig:
    mean_c: float = 4.0
    amplitude_c: float = 4.0
    warmest_hour: float = 14.0
    solar_peak_wm2: float = 300.0
    sunrise_hour: float = 8.0
    sunset_hour: float = 17.0
    perturb_c: float = 1.5
    cloud_variability: float = 0.4

    def params(self) -> WeatherParams:
        return WeatherParams(
            mean_c=self.mean_c, amplitude_c=self.amplitude_c,
            warmest_hour=self.warmest_hour, solar_peak_wm2=self.solar_peak_wm2,
            sunrise_hour=self.sunrise_hour, sunset_hour=self.sunset_hour,
            perturb_c=self.perturb_c, cloud_variability=self.cloud_variability)


@dataclass
class ControllerConfig:
    N: int = 32
    eta: float = 0.0
    cost_option: str = "exceedance"
    comfort_low_c: float = 19.0
    comfort_high_c: float = 24.0
    p_max_w: float = 15000.0
    slack_weight: float = 1e4
    baseline_day_limit_db: float = 60.0
    baseline_night_limit_db: float = 50.0
    day_start: float = 7.0
    day_end: float = 22.0

    def mpc(self) -> MpcConfig:
        return MpcConfig(
            horizon=self.N, eta=self.eta, cost_option=self.cost_option,
            comfort_low_c=self.comfort_low_c, comfort_high_c=self.comfort_high_c,
            p_max_w=self.p_max_w, slack_weight=self.slack_weight,
            baseline_day_limit_db=self.baseline_day_limit_db,
            baseline_night_limit_db=self.baseline_night_limit_db,
            day_start=self.day_start, day_end=self.day_end)


_SECTIONS = {
    "plant": PlantConfig,
    "occupancy": OccupancyConfig,
    "weather": WeatherConfig,
    "noise": NoiseConfig,
    "controller": ControllerConfig,
    "prices": PricesConfig,
    "sweep": SweepConfig,
    "io": IoConfig,
    "identification": IdentificationConfig,
}


@dataclass
class RunConfig:
    seed: int = 20260105
    plant: PlantConfig = field(default_factory=PlantConfig)
    occupancy: OccupancyConfig = field(default_factory=OccupancyConfig)
    weather: WeatherConfig = field(default_factory=WeatherConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    prices: PricesConfig = field(default_factory=PricesConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    io: IoConfig = field(default_factory=IoConfig)
    identification: IdentificationConfig = field(default_factory=IdentificationConfig)

    def validate(self) -> None:
        """Run the cross-module invariants by constructing every domain
        object once; errors name the offending value."""
        self.noise.curve()
        self.noise.ambient_params()
        self.plant.rc_params()
        self.occupancy.schedule()
        self.controller.mpc()
        self.io.start_time()
        if self.sweep.days < 1:
            raise ConfigError("sweep.days must be at least 1")
        if self.sweep.workers < 1:
            raise ConfigError("sweep.workers must be at least 1")
        if not self.sweep.eta_grid:
            raise ConfigError("sweep.eta_grid must be nonempty")
        if any(e < 0 for e in self.sweep.eta_grid):
            raise ConfigError("sweep.eta_grid values must be nonnegative")
        for opt in self.sweep.options:
            if opt not in ("ratio", "exceedance"):
                raise ConfigError(f"sweep.options contains unknown option {opt!r}")
        orders = self.identification.orders
        if len(orders) != 4 or any(int(o) < 1 for o in orders):
            raise ConfigError("identification.orders must be four positive integers")
        if self.prices.low_per_kwh <= 0 or self.prices.high_per_kwh <= 0:
            raise ConfigError("prices must be positive")


def _build_section(cls, data: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{where}.{key}'")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value in [{where}]: {exc}") from exc


def load_config(path=None, text: str = None) -> RunConfig:
    """Parse and validate a TOML config; missing keys take defaults."""
    if text is None:
        if path is None:
            doc = {}
        else:
            try:
                with open(path, "rb") as fh:
                    doc = tomllib.load(fh)
            except FileNotFoundError as exc:
                raise ConfigError(f"config file not found: {path}") from exc
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"config parse error in {path}: {exc}") from exc
    else:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc

    kwargs = {}
    for key, value in doc.items():
        if key == "seed":
            if not isinstance(value, int):
                raise ConfigError("seed must be an integer")
            kwargs["seed"] = value
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section [{key}] must be a table")
            kwargs[key] = _build_section(_SECTIONS[key], value, key)
        else:
            raise ConfigError(f"unknown key '{key}'")
    cfg = RunConfig(**kwargs)
    try:
        cfg.validate()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def price_series(cfg: RunConfig, hours: np.ndarray) -> np.ndarray:
    """Two-tier day-ahead tariff from clock hours."""
    p = cfg.prices
    if p.low_start <= p.low_end:
        low = (hours >= p.low_start) & (hours < p.low_end)
    else:
        low = (hours >= p.low_start) | (hours < p.low_end)
    return np.where(low, p.low_per_kwh, p.high_per_kwh)
