"""Closed-loop simulation, sweeps over the noise weight and metric rollups.

The loop runs at 900 s: measure, solve the receding-horizon problem, apply
the first input, advance the plant.  Forecasts handed to the controller are
the true future series (perfect foresight).  The plant is either the RC
surrogate or the identified linear model itself ("ARX as plant", zero
mismatch) for clean property checks.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime

import numpy as np

from . import acoustics
from .acoustics import AcousticTrace, NoiseCurve, eval_curve
from .arx import ArxModel, predict_one_step
from .controller import (
    OPTION_BASELINE,
    OPTION_RATIO,
    Histories,
    MpcConfig,
    SolverFailure,
    StepForecasts,
    solve_step,
)
from .milp import SolverSettings
from .plant import OccupancySchedule, RcPlant
from .timeseries import (
    STEPS_PER_DAY,
    fmt_float,
    parse_timestamp,
    read_csv,
    time_axis,
    validate_spacing,
    write_csv,
)

PLANT_RC = "rc"
PLANT_ARX = "arx"

TRACE_HEADER = [
    "step", "timestamp", "y_C", "u_frac", "L_hp_dB", "L_amb_dB", "L_mix_dB",
    "price_per_kWh", "energy_cost", "comfort_violation_C", "solve_ms", "status",
]
METRICS_HEADER = [
    "eta", "option", "energy_cost", "Jn", "real_noise_cost_dB", "Lden_dB",
    "Lquiet_dB", "domination_h", "mean_solve_ms",
]


class ArxSimulator:
    """The identified model run as the plant: zero model mismatch."""

    def __init__(self, model: ArxModel, y_init: float,
                 t_hist: np.ndarray, s_hist: np.ndarray):
        na, nb, nc, nd = model.orders
        self.model = model
        self._y = [float(y_init)] * na
        self._u = [0.0] * max(nb - 1, 0)
        self._t = list(t_hist[: max(nc - 1, 0)])
        self._s = list(s_hist[: max(nd - 1, 0)])

    @property
    def t_air(self) -> float:
        return self._y[0]

    def step(self, u: float, t_amb: float, s_sol: float,
             occupant_gain_w: float = 0.0) -> float:
        na, nb, nc, nd = self.model.orders
        u_full = [u] + self._u
        t_full = [t_amb] + self._t
        s_full = [s_sol] + self._s
        y_next = predict_one_step(self.model, self._y, u_full, t_full, s_full)
        self._y = [y_next] + self._y[: na - 1]
        self._u = u_full[: max(nb - 1, 0)]
        self._t = t_full[: max(nc - 1, 0)]
        self._s = s_full[: max(nd - 1, 0)]
        return y_next


@dataclass
class SimSeries:
    """All exogenous series for one run, with a history prefix.

    Arrays start `prefix` steps before `start` and extend at least
    days*96 + horizon steps past it, so every controller call finds both its
    histories and its forecasts.
    """

    start: datetime
    prefix: int
    t_amb: np.ndarray
    s_sol: np.ndarray
    l_amb: np.ndarray
    price: np.ndarray


@dataclass
class ClosedLoopTrace:
    start: datetime
    y_c: np.ndarray
    u_frac: np.ndarray
    l_hp: np.ndarray
    l_amb: np.ndarray
    l_mix: np.ndarray
    price: np.ndarray
    energy_cost: np.ndarray
    comfort_violation: np.ndarray
    solve_ms: np.ndarray
    status: list[str]

    def __len__(self) -> int:
        return len(self.y_c)

    def timestamps(self) -> list[datetime]:
        return time_axis(self.start, len(self))

    def acoustic(self) -> AcousticTrace:
        return AcousticTrace(start=self.start, l_hp=self.l_hp,
                             l_amb=self.l_amb, l_mix=self.l_mix)

    def to_csv(self, path) -> None:
        rows = (
            [str(i), ts.isoformat(), fmt_float(self.y_c[i]), fmt_float(self.u_frac[i]),
             fmt_float(self.l_hp[i]), fmt_float(self.l_amb[i]), fmt_float(self.l_mix[i]),
             fmt_float(self.price[i]), fmt_float(self.energy_cost[i]),
             fmt_float(self.comfort_violation[i]), fmt_float(self.solve_ms[i]),
             self.status[i]]
            for i, ts in enumerate(self.timestamps())
        )
        write_csv(path, TRACE_HEADER, rows)

    @classmethod
    def from_csv(cls, path) -> "ClosedLoopTrace":
        rows = read_csv(path, TRACE_HEADER)
        if not rows:
            raise ValueError(f"empty trace: {path}")
        stamps = [parse_timestamp(r[1]) for r in rows]
        validate_spacing(stamps)
        cols = list(zip(*rows))
        f = lambda i: np.array([float(v) for v in cols[i]])
        return cls(start=stamps[0], y_c=f(2), u_frac=f(3), l_hp=f(4),
                   l_amb=f(5), l_mix=f(6), price=f(7), energy_cost=f(8),
                   comfort_violation=f(9), solve_ms=f(10), status=list(cols[11]))


@dataclass
class MetricsRow:
    eta: float
    option: str
    energy_cost: float = np.nan
    jn: float = np.nan
    real_noise_cost_db: float = np.nan
    lden_db: float = np.nan
    lquiet_db: float = np.nan
    domination_h: float = np.nan
    mean_solve_ms: float = np.nan
    jn_ratio: float = np.nan
    jn_exceed: float = np.nan
    failed: bool = False
    error: str = ""


class ClosedLoopError(RuntimeError):
    """Controller failure mid-run; carries the partial trace."""

    def __init__(self, message: str, partial: ClosedLoopTrace):
        super().__init__(message)
        self.partial = partial


def run_closed_loop(plant_choice: str, model: ArxModel, curve: NoiseCurve,
                    cfg: MpcConfig, series: SimSeries, days: int,
                    occupancy: OccupancySchedule = None,
                    rc_plant: RcPlant = None,
                    settings: SolverSettings = None,
                    record_timing: bool = True,
                    hp_off_silent: bool = False,
                    y_init: float = 21.0) -> ClosedLoopTrace:
    """Simulate `days` of receding-horizon control against the chosen plant."""
    n_steps = days * STEPS_PER_DAY
    n = cfg.horizon
    pre = series.prefix
    if len(series.t_amb) < pre + n_steps + n:
        raise ValueError("series too short for the requested run")

    na, nb, nc, nd = model.orders
    if pre < model.max_order:
        raise ValueError("series prefix shorter than the model memory")

    t_hist0 = series.t_amb[:pre][::-1].copy()
    s_hist0 = series.s_sol[:pre][::-1].copy()

    if plant_choice == PLANT_ARX:
        plant = ArxSimulator(model, y_init, t_hist0, s_hist0)
    elif plant_choice == PLANT_RC:
        plant = rc_plant if rc_plant is not None else RcPlant(init_temp_c=y_init)
    else:
        raise ValueError(f"unknown plant choice {plant_choice!r}")
    occupancy = occupancy if occupancy is not None else OccupancySchedule()

    y_hist = [float(plant.t_air)] * na
    u_hist = [0.0] * max(nb - 1, 0)
    t_hist = list(t_hist0)
    s_hist = list(s_hist0)

    stamps = time_axis(series.start, n_steps)
    dt_h = model.sample_period / 3600.0
    y_c = np.empty(n_steps)
    u_frac = np.empty(n_steps)
    l_hp = np.empty(n_steps)
    l_amb = np.empty(n_steps)
    l_mix = np.empty(n_steps)
    price = np.empty(n_steps)
    energy = np.empty(n_steps)
    violation = np.empty(n_steps)
    solve_ms = np.empty(n_steps)
    status: list[str] = []

    def partial(k: int) -> ClosedLoopTrace:
        return ClosedLoopTrace(
            start=series.start, y_c=y_c[:k], u_frac=u_frac[:k], l_hp=l_hp[:k],
            l_amb=l_amb[:k], l_mix=l_mix[:k], price=price[:k],
            energy_cost=energy[:k], comfort_violation=violation[:k],
            solve_ms=solve_ms[:k], status=status[:k])

    for t in range(n_steps):
        i = pre + t
        y_now = float(plant.t_air)
        hists = Histories(y=np.array(y_hist), u=np.array(u_hist),
                          t_amb=np.array(t_hist), s_sol=np.array(s_hist))
        fc = StepForecasts(
            start=stamps[t],
            t_amb=series.t_amb[i:i + n], s_sol=series.s_sol[i:i + n],
            price=series.price[i:i + n], l_amb=series.l_amb[i:i + n])
        try:
            dec = solve_step(cfg, model, curve, hists, fc, settings)
        except (SolverFailure, ValueError) as exc:
            raise ClosedLoopError(f"controller failed at step {t}: {exc}",
                                  partial(t)) from exc
        u0 = dec.u0
        if hp_off_silent and u0 <= 1e-9:
            hp_level = -np.inf
        else:
            hp_level = eval_curve(curve, u0)

        gain = occupancy.gain_at(stamps[t]) if plant_choice == PLANT_RC else 0.0
        y_next = plant.step(u0, float(series.t_amb[i]), float(series.s_sol[i]), gain)

        y_c[t] = y_now
        u_frac[t] = u0
        l_hp[t] = hp_level
        l_amb[t] = series.l_amb[i]
        l_mix[t] = acoustics.mix(series.l_amb[i], hp_level)
        price[t] = series.price[i]
        energy[t] = dt_h * (cfg.p_max_w / 1000.0) * series.price[i] * u0
        violation[t] = max(0.0, cfg.comfort_low_c - y_now, y_now - cfg.comfort_high_c)
        solve_ms[t] = dec.wall_time * 1000.0 if record_timing else 0.0
        status.append(dec.status)

        y_hist = [y_next] + y_hist[: na - 1]
        u_hist = ([u0] + u_hist)[: max(nb - 1, 0)]
        t_hist = ([float(series.t_amb[i])] + t_hist)[: max(nc - 1, 0) + 1]
        s_hist = ([float(series.s_sol[i])] + s_hist)[: max(nd - 1, 0) + 1]

    return partial(n_steps)


def compute_metrics(trace: ClosedLoopTrace, eta: float, option: str) -> MetricsRow:
    """Roll a trace up into one summary row; all acoustic metrics are
    recomputed from the raw trace columns."""
    ac = trace.acoustic()
    finite_hp = np.where(np.isfinite(trace.l_hp), trace.l_hp, -np.inf)
    exceed = np.maximum(0.0, np.where(np.isfinite(finite_hp),
                                      finite_hp - trace.l_amb, -np.inf))
    exceed = np.where(np.isfinite(exceed), np.maximum(exceed, 0.0), 0.0)
    ratio_terms = np.where(np.isfinite(finite_hp),
                           finite_hp / np.maximum(trace.l_amb, 1.0), 0.0)
    jn_exceed = float(np.sum(exceed))
    jn_ratio = float(np.sum(ratio_terms))
    if option == OPTION_RATIO:
        jn = jn_ratio
    else:
        jn = jn_exceed
    return MetricsRow(
        eta=eta, option=option,
        energy_cost=float(np.sum(trace.energy_cost)),
        jn=jn,
        real_noise_cost_db=acoustics.real_noise_cost(ac),
        lden_db=acoustics.l_den(ac),
        lquiet_db=acoustics.l_quiet(ac),
        domination_h=acoustics.domination_time(ac),
        mean_solve_ms=float(np.mean(trace.solve_ms)),
        jn_ratio=jn_ratio, jn_exceed=jn_exceed,
    )


@dataclass
class SweepJob:
    """Everything one closed-loop run needs, in picklable form."""

    eta: float
    option: str
    plant_choice: str
    model: ArxModel
    curve: NoiseCurve
    cfg: MpcConfig
    series: SimSeries
    days: int
    occupancy: OccupancySchedule
    record_timing: bool = True
    hp_off_silent: bool = False
    y_init: float = 21.0
    settings: SolverSettings = None


def run_sweep_job(job: SweepJob) -> tuple[MetricsRow, ClosedLoopTrace | None]:
    eta_cfg = job.eta if np.isfinite(job.eta) else 0.0
    cfg = replace(job.cfg, eta=eta_cfg, cost_option=job.option)
    try:
        trace = run_closed_loop(
            job.plant_choice, job.model, job.curve, cfg, job.series, job.days,
            occupancy=job.occupancy, settings=job.settings,
            record_timing=job.record_timing,
            hp_off_silent=job.hp_off_silent, y_init=job.y_init)
    except ClosedLoopError as exc:
        row = MetricsRow(eta=job.eta, option=job.option, failed=True,
                         error=str(exc))
        return row, exc.partial
    return compute_metrics(trace, job.eta, job.option), trace


def pareto_sweep(jobs: list[SweepJob], workers: int = 1):
    """One independent closed-loop run per job; rows come back sorted by
    (option, eta).  Per-run failures are recorded on the row, not raised."""
    if not jobs:
        raise ValueError("empty sweep")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_sweep_job, jobs))
    else:
        results = [run_sweep_job(job) for job in jobs]
    order = sorted(range(len(jobs)), key=lambda i: (jobs[i].option, jobs[i].eta))
    rows = [results[i][0] for i in order]
    traces = [results[i][1] for i in order]
    return rows, traces


SUMMARY_LABELS = [
    "noise cost J_n reduction percentage (%)",
    "real noise cost reduction percentage (%)",
    "energy cost increase percentage (%)",
    "L_den reduction (dB)",
    "L_quiet reduction (dB)",
    "domination time reduction (h)",
    "average MPC computation time (s)",
]


def _pct_reduction(ref: float, val: float) -> float:
    if ref == 0.0:
        return 0.0
    return (ref - val) / ref * 100.0


def summarize(rows: list[MetricsRow], baseline_row: MetricsRow = None) -> dict:
    """Best-noise-row summary against the eta = 0 reference.

    Returns a dict with the seven standard labels, plus the eta achieving the
    best noise-cost reduction and, when a baseline row is given, the same
    deltas measured against the baseline controller.
    """
    rows = sorted((r for r in rows if not r.failed), key=lambda r: r.eta)
    ref = next((r for r in rows if r.eta == 0.0), None)
    if ref is None:
        raise ValueError("summary needs the eta = 0 reference row")
    reductions = [_pct_reduction(ref.jn, r.jn) for r in rows]
    best_i = int(np.argmax(reductions))
    best = rows[best_i]

    body = {
        SUMMARY_LABELS[0]: reductions[best_i],
        SUMMARY_LABELS[1]: _pct_reduction(ref.real_noise_cost_db,
                                          best.real_noise_cost_db),
        SUMMARY_LABELS[2]: -_pct_reduction(ref.energy_cost, best.energy_cost),
        SUMMARY_LABELS[3]: ref.lden_db - best.lden_db,
        SUMMARY_LABELS[4]: ref.lquiet_db - best.lquiet_db,
        SUMMARY_LABELS[5]: ref.domination_h - best.domination_h,
        SUMMARY_LABELS[6]: float(np.mean([r.mean_solve_ms for r in rows])) / 1000.0,
    }
    out = {"option": best.option, "best_eta": best.eta, "table": body}
    if baseline_row is not None and not baseline_row.failed:
        base_jn = (baseline_row.jn_ratio if best.option == OPTION_RATIO
                   else baseline_row.jn_exceed)
        out["vs_baseline"] = {
            "J_n reduction vs baseline (%)": _pct_reduction(base_jn, best.jn),
            "real noise cost reduction vs baseline (%)": _pct_reduction(
                baseline_row.real_noise_cost_db, best.real_noise_cost_db),
            "energy cost increase vs baseline (%)": -_pct_reduction(
                baseline_row.energy_cost, best.energy_cost),
            "L_den reduction vs baseline (dB)":
                baseline_row.lden_db - best.lden_db,
            "L_quiet reduction vs baseline (dB)":
                baseline_row.lquiet_db - best.lquiet_db,
            "domination time reduction vs baseline (h)":
                baseline_row.domination_h - best.domination_h,
        }
    return out


def render_summary_md(summaries: list[dict]) -> str:
    """Markdown table mirroring the per-option performance summary."""
    lines = ["# Performance summary", ""]
    header = "| metric | " + " | ".join(s["option"] for s in summaries) + " |"
    sep = "|---" * (len(summaries) + 1) + "|"
    lines += [header, sep]
    for label in SUMMARY_LABELS:
        cells = " | ".join(f"{s['table'][label]:.2f}" for s in summaries)
        lines.append(f"| {label} | {cells} |")
    lines.append("")
    for s in summaries:
        lines.append(f"- best eta for {s['option']}: {s['best_eta']:g}")
    for s in summaries:
        if "vs_baseline" in s:
            lines.append("")
            lines.append(f"## {s['option']} vs baseline")
            for k, v in s["vs_baseline"].items():
                lines.append(f"- {k}: {v:.2f}")
    return "\n".join(lines) + "\n"


def eta_slug(eta: float) -> str:
    return f"{eta:g}".replace("-", "m").replace(".", "p")


def write_metrics_csv(rows: list[MetricsRow], path) -> None:
    out = []
    for r in rows:
        out.append([
            fmt_float(r.eta), r.option, fmt_float(r.energy_cost), fmt_float(r.jn),
            fmt_float(r.real_noise_cost_db), fmt_float(r.lden_db),
            fmt_float(r.lquiet_db), fmt_float(r.domination_h),
            fmt_float(r.mean_solve_ms),
        ])
    write_csv(path, METRICS_HEADER, out)


def write_outputs(out_dir, rows: list[MetricsRow],
                  traces: list[ClosedLoopTrace | None],
                  summary_text: str = None) -> list[str]:
    """Persist one sweep: trace_<eta>.csv per run, metrics.csv, summary.md.

    Output is deterministic byte-for-byte given identical inputs.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for row, trace in zip(rows, traces):
        if trace is None:
            continue
        name = (f"trace_{eta_slug(row.eta)}.csv" if row.option != OPTION_BASELINE
                else "trace_baseline.csv")
        path = os.path.join(out_dir, name)
        trace.to_csv(path)
        written.append(path)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    write_metrics_csv(rows, metrics_path)
    written.append(metrics_path)
    if summary_text is not None:
        spath = os.path.join(out_dir, "summary.md")
        with open(spath, "w") as fh:
            fh.write(summary_text)
        written.append(spath)
    return written
