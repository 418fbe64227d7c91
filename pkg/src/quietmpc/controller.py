"""Receding-horizon controller: builds the noise-aware MILP and solves it.

Each step optimizes the input sequence u_0..u_{N-1} against lifted linear
thermal dynamics, the piecewise-affine noise encoding, soft comfort bounds
and one of two noise costs:

  * exceedance: eta * sum(delta_t) with L_hp_t <= L_amb_t + delta_t,
  * ratio:      eta * sum(L_hp_t / L_amb_t), no exceedance rows.

A regulation-limit baseline controller solves the eta = 0 economics with
per-step input caps derived from day/night noise limits instead of the
piecewise encoding (the limit is a pure upper bound on a monotone stretch of
the curve, so a cap is equivalent and faster).

The convex-combination weights lambda carry an explicit sum-to-one row.
Without it the encoding admits points strictly below the true curve on
interior segments, silently defeating the noise penalty; `build_problem`
keeps an `augment_lambda=False` escape hatch so the regression test can pin
that failure mode down.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from . import milp
from .acoustics import NoiseCurve, invert_curve_max_u
from .arx import ArxModel, lift_for_horizon
from .timeseries import hour_of_day

OPTION_RATIO = "ratio"
OPTION_EXCEEDANCE = "exceedance"
OPTION_BASELINE = "baseline"
_OPTIONS = (OPTION_RATIO, OPTION_EXCEEDANCE, OPTION_BASELINE)


class SolverFailure(RuntimeError):
    """Controller-level solver failure; carries the problem dump."""

    def __init__(self, message: str, lp_text: str = ""):
        super().__init__(message)
        self.lp_text = lp_text


@dataclass
class MpcConfig:
    horizon: int = 32
    eta: float = 0.0
    cost_option: str = OPTION_EXCEEDANCE
    comfort_low_c: float = 19.0
    comfort_high_c: float = 24.0
    u_min: float = 0.0
    u_max: float = 1.0
    p_max_w: float = 15000.0
    slack_weight: float = 1e4          # penalty per degC of comfort violation per step
    baseline_day_limit_db: float = 60.0
    baseline_night_limit_db: float = 50.0
    day_start: float = 7.0
    day_end: float = 22.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.cost_option not in _OPTIONS:
            raise ValueError(f"cost_option must be one of {_OPTIONS}")
        if self.comfort_low_c >= self.comfort_high_c:
            raise ValueError("comfort bounds must satisfy low < high")
        if self.u_min >= self.u_max:
            raise ValueError("input bounds must satisfy min < max")


@dataclass
class Histories:
    """Newest-first measurement histories available to the controller."""

    y: np.ndarray
    u: np.ndarray
    t_amb: np.ndarray
    s_sol: np.ndarray


@dataclass
class StepForecasts:
    """Per-step forecasts over (at least) the horizon, aligned with the
    decision steps: index 0 is the step about to be applied."""

    start: datetime
    t_amb: np.ndarray
    s_sol: np.ndarray
    price: np.ndarray
    l_amb: np.ndarray

    def hours(self, n: int, step_s: float = 900.0) -> np.ndarray:
        return np.array([
            hour_of_day(self.start + timedelta(seconds=step_s * t))
            for t in range(n)
        ])


@dataclass
class StepDecision:
    u0: float
    u_seq: np.ndarray
    y_pred: np.ndarray
    l_hp_pred: np.ndarray
    j_energy: float
    j_noise: float
    objective: float
    status: str
    node_count: int
    iterations: int
    wall_time: float
    mip_gap: float
    warning: bool = False


def _check_lengths(cfg: MpcConfig, fc: StepForecasts) -> None:
    n = cfg.horizon
    for name in ("t_amb", "s_sol", "price", "l_amb"):
        if len(getattr(fc, name)) < n:
            raise ValueError(f"forecast '{name}' shorter than the horizon ({n})")


def _lower_convex_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Lower hull of points sorted by x (monotone chain)."""
    hull: list[tuple[float, float]] = []
    for p in points:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (p[0] - x1) * (y2 - y1) <= 0.0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def exceedance_envelope(curve: NoiseCurve, l_amb: float) -> list[tuple[float, float]]:
    """Supporting lines (slope, intercept) of the convex lower envelope of
    max(0, curve(u) - l_amb) over u in [0, 1].

    Every point the piecewise encoding admits with integral segment choices
    satisfies delta >= slope*u + intercept for each returned line, so adding
    these rows never cuts a true solution; they only tighten the LP bound,
    which keeps branch-and-bound trees small.
    """
    alpha, beta = curve.alpha, curve.beta
    pts: list[tuple[float, float]] = []
    for i in range(len(alpha)):
        pts.append((float(alpha[i]), max(0.0, float(beta[i]) - l_amb)))
        if i + 1 < len(alpha):
            b0, b1 = beta[i] - l_amb, beta[i + 1] - l_amb
            if (b0 < 0.0 < b1) or (b1 < 0.0 < b0):
                ux = alpha[i] + (0.0 - b0) * (alpha[i + 1] - alpha[i]) / (b1 - b0)
                pts.append((float(ux), 0.0))
    pts.sort()
    hull = _lower_convex_hull(pts)
    lines = []
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        slope = (y2 - y1) / (x2 - x1)
        if abs(slope) < 1e-12:
            continue
        lines.append((slope, y1 - slope * x1))
    return lines


def build_problem(cfg: MpcConfig, model: ArxModel, curve: NoiseCurve,
                  hists: Histories, fc: StepForecasts,
                  augment_lambda: bool = True):
    """Assemble the horizon problem as a LinearProgram.

    Returns (lp, index map).  For the ratio option the exceedance rows and
    delta variables are omitted and the noise weight lands on the predicted
    noise level directly.  Ambient levels must be positive under the ratio
    option; values below 1 dB are clamped to 1 for the division.
    """
    _check_lengths(cfg, fc)
    n = cfg.horizon
    k = curve.n_segments
    dt_h = model.sample_period / 3600.0
    phi, gamma = lift_for_horizon(
        model, n, hists.y, hists.u, hists.t_amb, hists.s_sol, fc.t_amb, fc.s_sol)

    if cfg.cost_option == OPTION_RATIO and np.any(fc.l_amb[:n] <= 0.0):
        raise ValueError("ratio noise cost needs positive ambient levels")

    lp = milp.LinearProgram(name=f"mpc_{cfg.cost_option}")
    iu = np.empty(n, dtype=int)
    ilam = np.empty((n, k + 1), dtype=int)
    iz = np.empty((n, k), dtype=int)
    ilhat = np.empty(n, dtype=int)
    islack = np.empty(n, dtype=int)
    idelta = np.empty(n, dtype=int) if cfg.cost_option == OPTION_EXCEEDANCE else None

    lmin, lmax = curve.min_level(), curve.max_level()
    for t in range(n):
        iu[t] = lp.add_var(f"u[{t}]", cfg.u_min, cfg.u_max)
        for i in range(k + 1):
            ilam[t, i] = lp.add_var(f"lam[{i},{t}]", 0.0, 1.0)
        for i in range(1, k + 1):
            iz[t, i - 1] = lp.add_var(f"z[{i},{t}]", 0.0, 1.0, binary=True)
        ilhat[t] = lp.add_var(f"Lhat[{t}]", lmin, lmax)
        islack[t] = lp.add_var(f"s[{t}]", 0.0, np.inf)
        if idelta is not None:
            idelta[t] = lp.add_var(f"delta[{t}]", 0.0, np.inf)

    for t in range(n):
        dyn = [(int(iu[j]), phi[t, j]) for j in range(n) if phi[t, j] != 0.0]
        lp.add_con(dyn + [(int(islack[t]), 1.0)], ">=",
                   cfg.comfort_low_c - gamma[t], name=f"comfort_lo[{t}]")
        lp.add_con(dyn + [(int(islack[t]), -1.0)], "<=",
                   cfg.comfort_high_c - gamma[t], name=f"comfort_hi[{t}]")
        lp.add_con([(int(iu[t]), 1.0)]
                   + [(int(ilam[t, i]), -curve.alpha[i]) for i in range(k + 1)],
                   "==", 0.0, name=f"u_link[{t}]")
        lp.add_con([(int(ilhat[t]), 1.0)]
                   + [(int(ilam[t, i]), -curve.beta[i]) for i in range(k + 1)],
                   "==", 0.0, name=f"level_link[{t}]")
        # each weight may be nonzero only when one of its adjacent segments
        # is selected: lam_j <= z_j + z_{j+1}, with the boundary weights
        # covered by their single segment
        for i in range(k + 1):
            cover = [(int(ilam[t, i]), 1.0)]
            if i >= 1:
                cover.append((int(iz[t, i - 1]), -1.0))
            if i <= k - 1:
                cover.append((int(iz[t, i]), -1.0))
            lp.add_con(cover, "<=", 0.0, name=f"adjacency[{i},{t}]")
        lp.add_con([(int(iz[t, i]), 1.0) for i in range(k)], "==", 1.0,
                   name=f"segment_pick[{t}]")
        if augment_lambda:
            lp.add_con([(int(ilam[t, i]), 1.0) for i in range(k + 1)], "==", 1.0,
                       name=f"lambda_sum[{t}]")
        if idelta is not None:
            lp.add_con([(int(ilhat[t]), 1.0), (int(idelta[t]), -1.0)], "<=",
                       float(fc.l_amb[t]), name=f"exceed[{t}]")
            # valid envelope rows tightening the relaxation (never binding
            # on integral solutions beyond the true exceedance)
            for ci, (slope, intercept) in enumerate(
                    exceedance_envelope(curve, float(fc.l_amb[t]))):
                lp.add_con([(int(iu[t]), slope), (int(idelta[t]), -1.0)],
                           "<=", -intercept, name=f"exceed_env[{ci},{t}]")

    energy_coef = dt_h * (cfg.p_max_w / 1000.0) * np.asarray(fc.price[:n], dtype=float)
    obj = [(int(iu[t]), float(energy_coef[t])) for t in range(n)]
    obj += [(int(islack[t]), cfg.slack_weight) for t in range(n)]
    if cfg.cost_option == OPTION_EXCEEDANCE:
        obj += [(int(idelta[t]), cfg.eta) for t in range(n)]
    elif cfg.cost_option == OPTION_RATIO:
        amb = np.maximum(np.asarray(fc.l_amb[:n], dtype=float), 1.0)
        obj += [(int(ilhat[t]), cfg.eta / float(amb[t])) for t in range(n)]
    lp.set_objective(obj)

    index = {"u": iu, "lam": ilam, "z": iz, "lhat": ilhat, "slack": islack,
             "delta": idelta, "phi": phi, "gamma": gamma,
             "energy_coef": energy_coef}
    return lp, index


def build_baseline_problem(cfg: MpcConfig, model: ArxModel, curve: NoiseCurve,
                           hists: Histories, fc: StepForecasts):
    """Economic LP with day/night regulation caps folded into the input
    bounds.  No piecewise encoding is needed: the limit is an upper bound."""
    _check_lengths(cfg, fc)
    n = cfg.horizon
    dt_h = model.sample_period / 3600.0
    phi, gamma = lift_for_horizon(
        model, n, hists.y, hists.u, hists.t_amb, hists.s_sol, fc.t_amb, fc.s_sol)
    hours = fc.hours(n, model.sample_period)

    lp = milp.LinearProgram(name="mpc_baseline")
    iu = np.empty(n, dtype=int)
    islack = np.empty(n, dtype=int)
    caps = np.empty(n)
    for t in range(n):
        day = cfg.day_start <= hours[t] < cfg.day_end
        limit = cfg.baseline_day_limit_db if day else cfg.baseline_night_limit_db
        caps[t] = min(cfg.u_max, invert_curve_max_u(curve, limit))
        iu[t] = lp.add_var(f"u[{t}]", cfg.u_min, caps[t])
        islack[t] = lp.add_var(f"s[{t}]", 0.0, np.inf)
    for t in range(n):
        dyn = [(int(iu[j]), phi[t, j]) for j in range(n) if phi[t, j] != 0.0]
        lp.add_con(dyn + [(int(islack[t]), 1.0)], ">=",
                   cfg.comfort_low_c - gamma[t], name=f"comfort_lo[{t}]")
        lp.add_con(dyn + [(int(islack[t]), -1.0)], "<=",
                   cfg.comfort_high_c - gamma[t], name=f"comfort_hi[{t}]")
    energy_coef = dt_h * (cfg.p_max_w / 1000.0) * np.asarray(fc.price[:n], dtype=float)
    obj = [(int(iu[t]), float(energy_coef[t])) for t in range(n)]
    obj += [(int(islack[t]), cfg.slack_weight) for t in range(n)]
    lp.set_objective(obj)
    index = {"u": iu, "slack": islack, "phi": phi, "gamma": gamma,
             "energy_coef": energy_coef, "caps": caps}
    return lp, index


def _decision_from_solution(cfg: MpcConfig, curve: NoiseCurve, lp, index,
                            sol: milp.Solution) -> StepDecision:
    n = cfg.horizon
    x = sol.x
    u_seq = np.array([x[index["u"][t]] for t in range(n)])
    u_seq = np.clip(u_seq, cfg.u_min, cfg.u_max)
    y_pred = index["phi"] @ u_seq + index["gamma"]
    if index.get("lhat") is not None:
        l_hp = np.array([x[index["lhat"][t]] for t in range(n)])
    else:
        l_hp = np.array([np.interp(u, curve.alpha, curve.beta) for u in u_seq])
    j_energy = float(index["energy_coef"] @ u_seq)
    if cfg.cost_option == OPTION_EXCEEDANCE and index.get("delta") is not None:
        j_noise = float(sum(x[index["delta"][t]] for t in range(n)))
    elif cfg.cost_option == OPTION_RATIO:
        amb = np.maximum(index["ratio_amb"], 1.0)
        j_noise = float(np.sum(l_hp / amb))
    else:
        j_noise = 0.0
    return StepDecision(
        u0=float(u_seq[0]), u_seq=u_seq, y_pred=y_pred, l_hp_pred=l_hp,
        j_energy=j_energy, j_noise=j_noise, objective=float(sol.objective),
        status=sol.status.value, node_count=sol.node_count,
        iterations=sol.iterations, wall_time=sol.wall_time,
        mip_gap=sol.mip_gap,
        warning=sol.status is milp.Status.ITERATION_LIMIT,
    )


def segment_dive_hint(curve: NoiseCurve, index) -> callable:
    """Rounding hint for the solver's dive: fix each step's segment choice to
    the segment containing the relaxed input value.  The dived LP can then
    reproduce the relaxation's input sequence exactly, which yields an
    optimal incumbent immediately whenever the noise term is slack."""
    alpha = curve.alpha
    k = curve.n_segments
    iu = index["u"]
    iz = index["z"]

    def hint(x):
        fixes = []
        for t in range(len(iu)):
            u = min(max(float(x[iu[t]]), alpha[0]), alpha[-1])
            seg = int(np.searchsorted(alpha, u, side="right")) - 1
            seg = min(max(seg, 0), k - 1)
            for i in range(k):
                v = 1.0 if i == seg else 0.0
                fixes.append((int(iz[t, i]), v, v))
        return fixes

    return hint


def solve_step(cfg: MpcConfig, model: ArxModel, curve: NoiseCurve,
               hists: Histories, fc: StepForecasts,
               settings: milp.SolverSettings = None) -> StepDecision:
    """Solve one receding-horizon step and return the first input.

    Raises SolverFailure (with the problem dump attached) when the problem
    comes back infeasible, which the comfort slacks should rule out.  An
    iteration/node-capped solve returns the best incumbent with the warning
    flag set.
    """
    if cfg.cost_option == OPTION_BASELINE:
        return baseline_step(cfg, model, curve, hists, fc, settings)
    lp, index = build_problem(cfg, model, curve, hists, fc)
    index["ratio_amb"] = np.asarray(fc.l_amb[: cfg.horizon], dtype=float)
    sol = milp.solve_milp(lp, settings,
                          dive_hint=segment_dive_hint(curve, index))
    if sol.x is None:
        raise SolverFailure(
            f"MPC step came back {sol.status.value} with no usable point",
            lp_text=lp.to_lp_text())
    return _decision_from_solution(cfg, curve, lp, index, sol)


def baseline_step(cfg: MpcConfig, model: ArxModel, curve: NoiseCurve,
                  hists: Histories, fc: StepForecasts,
                  settings: milp.SolverSettings = None) -> StepDecision:
    """Day/night regulation-limit controller: eta = 0 economics under caps."""
    lp, index = build_baseline_problem(cfg, model, curve, hists, fc)
    sol = milp.solve_lp(lp, settings)
    if sol.x is None:
        raise SolverFailure(
            f"baseline step came back {sol.status.value} with no usable point",
            lp_text=lp.to_lp_text())
    index["lhat"] = None
    return _decision_from_solution(cfg, curve, lp, index, sol)
