"""Command-line entry point.

Subcommands:

    quietmpc identify --config cfg.toml --out out/
    quietmpc simulate --config cfg.toml --out out/ --eta 32 --option exceedance
    quietmpc sweep    --config cfg.toml --out out/

Flags override the config file (flag beats file).  Exit codes: 0 success,
2 config error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness, pipeline
from .arx import ArxModel
from .config import ConfigError, RunConfig, load_config
from .controller import SolverFailure
from .harness import (
    ClosedLoopError,
    pareto_sweep,
    render_summary_md,
    summarize,
    write_metrics_csv,
    write_outputs,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

MODEL_FILE = "model.json"


def _load_and_override(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.io.out_dir = args.out
    if args.days is not None:
        if args.days < 1:
            raise ConfigError("--days must be at least 1")
        cfg.sweep.days = args.days
    eta = getattr(args, "eta", None)
    if eta is not None:
        cfg.controller.eta = eta
    option = getattr(args, "option", None)
    if option is not None:
        cfg.controller.cost_option = option
    cfg.validate()
    return cfg


def _model_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.io.out_dir, MODEL_FILE)


def _load_model(cfg: RunConfig) -> ArxModel:
    path = _model_path(cfg)
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"model file {path} not found; run 'quietmpc identify' first")
    return ArxModel.load(path)


def cmd_identify(cfg: RunConfig) -> int:
    """Excite the surrogate plant, fit the thermal model, write model + report."""
    model, train, test, report = pipeline.run_identification(cfg)
    out = cfg.io.out_dir
    os.makedirs(out, exist_ok=True)
    model.save(_model_path(cfg))
    train.to_csv(os.path.join(out, "ident_train.csv"))
    test.to_csv(os.path.join(out, "ident_test.csv"))
    pipeline.write_fit_report(os.path.join(out, "fit_report.md"), report)
    print(f"model written to {_model_path(cfg)}")
    print(f"train open-loop MAE: {report['train_open_loop_mae_C']:.3f} C, "
          f"test open-loop MAE: {report['test_open_loop_mae_C']:.3f} C")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    """One closed-loop run at the configured eta and cost option."""
    model = _load_model(cfg)
    days = cfg.sweep.days
    option = cfg.controller.cost_option
    eta = cfg.controller.eta if option != "baseline" else float("nan")
    jobs = pipeline.make_sweep_jobs(
        cfg, model, days, include_baseline=(option == "baseline"),
        options=[] if option == "baseline" else [option],
        eta_grid=[] if option == "baseline" else [eta])
    row, trace = harness.run_sweep_job(jobs[0])
    out = cfg.io.out_dir
    os.makedirs(out, exist_ok=True)
    if trace is not None:
        name = ("trace_baseline.csv" if option == "baseline"
                else f"trace_{harness.eta_slug(row.eta)}.csv")
        trace.to_csv(os.path.join(out, name))
    write_metrics_csv([row], os.path.join(out, "metrics.csv"))
    if row.failed:
        print(f"run failed: {row.error}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"energy cost {row.energy_cost:.3f}, Jn {row.jn:.3f}, "
          f"Lden {row.lden_db:.2f} dB, domination {row.domination_h:.2f} h/day")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    """Full Pareto sweep for the configured options plus the baseline."""
    model = _load_model(cfg)
    days = cfg.sweep.days
    jobs = pipeline.make_sweep_jobs(cfg, model, days,
                                    plant_choice=cfg_plant_choice(cfg))
    rows, traces = pareto_sweep(jobs, workers=cfg.sweep.workers)

    out = cfg.io.out_dir
    os.makedirs(out, exist_ok=True)
    baseline_row = next((r for r in rows if r.option == "baseline"), None)
    summaries = []
    for option in cfg.sweep.options:
        opt_rows = [r for r in rows if r.option == option]
        opt_traces = [t for r, t in zip(rows, traces) if r.option == option]
        write_outputs(os.path.join(out, option), opt_rows, opt_traces)
        try:
            summaries.append(summarize(opt_rows, baseline_row))
        except ValueError as exc:
            print(f"summary skipped for {option}: {exc}", file=sys.stderr)
    if baseline_row is not None:
        bl_trace = traces[rows.index(baseline_row)]
        write_outputs(os.path.join(out, "baseline"), [baseline_row], [bl_trace])

    write_metrics_csv(rows, os.path.join(out, "metrics.csv"))
    if summaries:
        with open(os.path.join(out, "summary.md"), "w") as fh:
            fh.write(render_summary_md(summaries))

    failed = [r for r in rows if r.failed]
    for r in failed:
        print(f"run failed (option={r.option}, eta={r.eta}): {r.error}",
              file=sys.stderr)
    print(f"metrics for {len(rows)} runs written to {out}/metrics.csv")
    return EXIT_SOLVER if failed else EXIT_OK


def cfg_plant_choice(cfg: RunConfig) -> str:
    return harness.PLANT_RC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quietmpc",
        description="Noise-aware heat-pump MPC: identification, closed-loop "
                    "simulation and Pareto sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", default=None,
                       help="TOML config file (defaults apply when omitted)")
        p.add_argument("--out", metavar="DIR", default=None,
                       help="output directory (overrides io.out_dir)")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides the config)")
        p.add_argument("--days", type=int, default=None,
                       help="simulation days (overrides sweep.days)")

    p_id = sub.add_parser("identify", help="fit the thermal model from "
                                           "excitation runs on the surrogate plant")
    common(p_id)

    p_sim = sub.add_parser("simulate", help="one closed-loop run")
    common(p_sim)
    p_sim.add_argument("--eta", type=float, default=None,
                       help="noise weight (overrides controller.eta)")
    p_sim.add_argument("--option", choices=["ratio", "exceedance", "baseline"],
                       default=None, help="noise cost option")

    p_sw = sub.add_parser("sweep", help="Pareto sweep over eta for both "
                                        "options plus the baseline")
    common(p_sw)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_and_override(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "identify":
            return cmd_identify(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        raise AssertionError(f"unhandled command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, ClosedLoopError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
