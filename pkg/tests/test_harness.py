"""Closed-loop simulation, metric rollups, sweeps and persistence."""

from dataclasses import replace
from datetime import datetime

import numpy as np
import pytest

from quietmpc import acoustics
from quietmpc.acoustics import default_curve
from quietmpc.arx import ArxModel
from quietmpc.controller import MpcConfig
from quietmpc.harness import (
    PLANT_ARX,
    PLANT_RC,
    ClosedLoopTrace,
    MetricsRow,
    SimSeries,
    SweepJob,
    compute_metrics,
    pareto_sweep,
    render_summary_md,
    run_closed_loop,
    run_sweep_job,
    summarize,
    write_outputs,
    SUMMARY_LABELS,
)
from quietmpc.plant import OccupancySchedule
from quietmpc.timeseries import STEPS_PER_DAY

START = datetime(2026, 1, 5)


def small_model():
    # steady state 100*u + 0.95*T_amb: winter comfort sits near u = 0.15,
    # comfortably inside the quiet region of the default noise curve
    return ArxModel(coeff_a=[0.98], coeff_b=[2.0], coeff_c=[0.019],
                    coeff_d=[1e-4])


def small_series(days, horizon, prefix=1):
    n = prefix + days * STEPS_PER_DAY + horizon
    hours = (np.arange(n) - prefix) * 0.25 % 24.0
    night = (hours >= 22.0) | (hours < 7.0)
    price = np.where(night, 0.10, 0.20)
    l_amb = np.where(night, 40.0, 55.0)
    t_amb = 4.0 + 3.0 * np.cos(2 * np.pi * (hours - 14.0) / 24.0)
    return SimSeries(start=START, prefix=prefix, t_amb=t_amb,
                     s_sol=np.zeros(n), l_amb=l_amb, price=price)


def small_cfg(**kw):
    defaults = dict(horizon=8, eta=0.0, cost_option="exceedance")
    defaults.update(kw)
    return MpcConfig(**defaults)


@pytest.fixture(scope="module")
def one_day_trace():
    cfg = small_cfg()
    series = small_series(1, cfg.horizon)
    return run_closed_loop(PLANT_ARX, small_model(), default_curve(), cfg,
                           series, days=1, occupancy=OccupancySchedule())


class TestClosedLoop:
    def test_trace_length(self, one_day_trace):
        assert len(one_day_trace) == 96

    def test_arx_plant_zero_violations(self, one_day_trace):
        assert np.all(one_day_trace.comfort_violation <= 1e-6)

    def test_mix_column_consistent(self, one_day_trace):
        tr = one_day_trace
        for i in range(len(tr)):
            assert tr.l_mix[i] == pytest.approx(
                acoustics.mix(tr.l_amb[i], tr.l_hp[i]), abs=1e-9)

    def test_u_in_bounds(self, one_day_trace):
        assert np.all((one_day_trace.u_frac >= 0) & (one_day_trace.u_frac <= 1))

    def test_energy_cost_recomputation(self, one_day_trace):
        tr = one_day_trace
        dt_h = 0.25
        expected = dt_h * 15.0 * tr.price * tr.u_frac
        assert np.allclose(tr.energy_cost, expected, atol=1e-9)

    def test_determinism(self):
        cfg = small_cfg(eta=2.0)
        series = small_series(1, cfg.horizon)
        kw = dict(occupancy=OccupancySchedule(), record_timing=False)
        a = run_closed_loop(PLANT_ARX, small_model(), default_curve(), cfg,
                            series, days=1, **kw)
        b = run_closed_loop(PLANT_ARX, small_model(), default_curve(), cfg,
                            series, days=1, **kw)
        assert np.array_equal(a.u_frac, b.u_frac)
        assert np.array_equal(a.y_c, b.y_c)

    def test_rc_plant_runs_with_moderate_mismatch(self):
        cfg = small_cfg()
        series = small_series(1, cfg.horizon)
        tr = run_closed_loop(PLANT_RC, small_model(), default_curve(), cfg,
                             series, days=1, occupancy=OccupancySchedule())
        assert len(tr) == 96
        assert np.isfinite(tr.y_c).all()

    def test_silent_off_sentinel(self):
        cfg = small_cfg()
        series = small_series(1, cfg.horizon)
        tr = run_closed_loop(PLANT_ARX, small_model(), default_curve(), cfg,
                             series, days=1, occupancy=OccupancySchedule(),
                             hp_off_silent=True)
        off = tr.u_frac <= 1e-9
        assert np.any(off)
        assert np.all(np.isneginf(tr.l_hp[off]))
        assert np.allclose(tr.l_mix[off], tr.l_amb[off], atol=1e-9)


class TestTraceCsv:
    def test_round_trip_exact(self, one_day_trace, tmp_path):
        path = tmp_path / "trace.csv"
        one_day_trace.to_csv(path)
        back = ClosedLoopTrace.from_csv(path)
        for field in ("y_c", "u_frac", "l_hp", "l_amb", "l_mix", "price",
                      "energy_cost", "comfort_violation", "solve_ms"):
            assert np.array_equal(getattr(back, field),
                                  getattr(one_day_trace, field)), field
        assert back.status == one_day_trace.status
        assert back.start == one_day_trace.start


class TestMetrics:
    def test_recomputation_matches(self, one_day_trace):
        row = compute_metrics(one_day_trace, 0.0, "exceedance")
        ac = one_day_trace.acoustic()
        assert row.real_noise_cost_db == pytest.approx(
            acoustics.real_noise_cost(ac), abs=1e-9)
        assert row.lden_db == pytest.approx(acoustics.l_den(ac), abs=1e-9)
        assert row.lquiet_db == pytest.approx(acoustics.l_quiet(ac), abs=1e-9)
        assert row.domination_h == pytest.approx(
            acoustics.domination_time(ac), abs=1e-9)
        assert row.energy_cost == pytest.approx(
            float(np.sum(one_day_trace.energy_cost)), abs=1e-9)
        assert 0.0 <= row.domination_h <= 24.0
        assert row.real_noise_cost_db >= 0.0

    def test_jn_forms(self, one_day_trace):
        row = compute_metrics(one_day_trace, 0.0, "ratio")
        assert row.jn == pytest.approx(row.jn_ratio)
        row2 = compute_metrics(one_day_trace, 0.0, "exceedance")
        assert row2.jn == pytest.approx(row2.jn_exceed)


def make_jobs(etas, option="exceedance", days=1):
    cfg = small_cfg()
    series = small_series(days, cfg.horizon)
    jobs = [SweepJob(eta=e, option=option, plant_choice=PLANT_ARX,
                     model=small_model(), curve=default_curve(), cfg=cfg,
                     series=series, days=days, occupancy=OccupancySchedule(),
                     record_timing=False)
            for e in etas]
    return jobs


class TestSweep:
    def test_rows_sorted_and_complete(self):
        rows, traces = pareto_sweep(make_jobs([4.0, 0.0, 1.0]), workers=1)
        assert [r.eta for r in rows] == [0.0, 1.0, 4.0]
        assert all(t is not None for t in traces)
        assert not any(r.failed for r in rows)

    def test_single_point_grid_matches_plain_run(self):
        rows, _ = pareto_sweep(make_jobs([0.0]), workers=1)
        job = make_jobs([0.0])[0]
        row_direct, _ = run_sweep_job(job)
        assert rows[0].energy_cost == pytest.approx(row_direct.energy_cost)
        assert rows[0].jn == pytest.approx(row_direct.jn)

    def test_parallel_matches_serial(self):
        jobs = make_jobs([0.0, 2.0])
        serial_rows, _ = pareto_sweep(jobs, workers=1)
        parallel_rows, _ = pareto_sweep(jobs, workers=2)
        for a, b in zip(serial_rows, parallel_rows):
            assert a.energy_cost == b.energy_cost
            assert a.jn == b.jn

    def test_options_agree_at_eta_zero(self):
        er, _ = pareto_sweep(make_jobs([0.0], "exceedance"), workers=1)
        rr, _ = pareto_sweep(make_jobs([0.0], "ratio"), workers=1)
        assert er[0].energy_cost == pytest.approx(rr[0].energy_cost, abs=1e-6)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            pareto_sweep([], workers=1)


class TestSummarize:
    def rows(self):
        mk = lambda eta, jn, e, rnc, lden, lq, dom: MetricsRow(
            eta=eta, option="exceedance", energy_cost=e, jn=jn,
            real_noise_cost_db=rnc, lden_db=lden, lquiet_db=lq,
            domination_h=dom, mean_solve_ms=100.0,
            jn_ratio=jn, jn_exceed=jn)
        return [
            mk(0.0, 100.0, 1000.0, 200.0, 56.0, 48.0, 4.0),
            mk(1.0, 15.52, 1035.0, 150.0, 54.0, 45.0, 2.0),
        ]

    def test_reduction_arithmetic(self):
        out = summarize(self.rows())
        table = out["table"]
        assert table[SUMMARY_LABELS[0]] == pytest.approx(84.48)
        assert table[SUMMARY_LABELS[2]] == pytest.approx(3.50)
        assert table[SUMMARY_LABELS[3]] == pytest.approx(2.0)
        assert table[SUMMARY_LABELS[5]] == pytest.approx(2.0)
        assert out["best_eta"] == 1.0

    def test_identical_row_gives_zero_reductions(self):
        rows = self.rows()[:1] * 2
        rows = [rows[0], replace(rows[1], eta=1.0)]
        out = summarize(rows)
        assert out["table"][SUMMARY_LABELS[0]] == pytest.approx(0.0)
        assert out["table"][SUMMARY_LABELS[2]] == pytest.approx(0.0)

    def test_missing_reference_rejected(self):
        with pytest.raises(ValueError, match="reference"):
            summarize([replace(self.rows()[1], eta=2.0)])

    def test_summary_md_has_all_labels(self):
        out = summarize(self.rows())
        text = render_summary_md([out])
        for label in SUMMARY_LABELS:
            assert label in text


class TestWriteOutputs:
    def test_files_and_determinism(self, tmp_path):
        jobs = make_jobs([0.0, 2.0])
        rows, traces = pareto_sweep(jobs, workers=1)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        write_outputs(out1, rows, traces)
        write_outputs(out2, rows, traces)
        m1 = (out1 / "metrics.csv").read_bytes()
        m2 = (out2 / "metrics.csv").read_bytes()
        assert m1 == m2
        assert (out1 / "trace_0.csv").exists()
        assert (out1 / "trace_2.csv").exists()
        lines = m1.decode().splitlines()
        assert lines[0] == ("eta,option,energy_cost,Jn,real_noise_cost_dB,"
                            "Lden_dB,Lquiet_dB,domination_h,mean_solve_ms")
        assert len(lines) == 3

    def test_trace_round_trip_through_outputs(self, tmp_path):
        jobs = make_jobs([0.0])
        rows, traces = pareto_sweep(jobs, workers=1)
        write_outputs(tmp_path, rows, traces)
        back = ClosedLoopTrace.from_csv(tmp_path / "trace_0.csv")
        assert np.array_equal(back.u_frac, traces[0].u_frac)
