"""Receding-horizon problem construction and solving.

The piecewise-encoding checks sample the block directly and cross-check the
solver against enumeration; the regression test pins down why the
convex-combination weights need an explicit sum-to-one row.
"""

from dataclasses import replace
from datetime import datetime

import numpy as np
import pytest

from quietmpc import milp
from quietmpc.acoustics import NoiseCurve, default_curve, eval_curve
from quietmpc.arx import ArxModel
from quietmpc.controller import (
    Histories,
    MpcConfig,
    SolverFailure,
    StepForecasts,
    baseline_step,
    build_baseline_problem,
    build_problem,
    exceedance_envelope,
    solve_step,
)

START = datetime(2026, 1, 5)


def warm_model():
    # slow, stable single-lag dynamics; steady state is 25*u + 0.95*T_amb,
    # so ordinary winter comfort needs u well inside [0, 1]
    return ArxModel(coeff_a=[0.98], coeff_b=[0.5], coeff_c=[0.019],
                    coeff_d=[1e-4])


def make_forecasts(n, t_amb=4.0, s_sol=0.0, price=0.15, l_amb=45.0,
                   start=START):
    return StepForecasts(
        start=start,
        t_amb=np.full(n, t_amb), s_sol=np.full(n, s_sol),
        price=np.full(n, price), l_amb=np.full(n, l_amb))


def make_hists(model, y0=21.0):
    na, nb, nc, nd = model.orders
    return Histories(y=np.full(na, y0), u=np.zeros(max(nb - 1, 0)),
                     t_amb=np.full(max(nc - 1, 0), 4.0),
                     s_sol=np.zeros(max(nd - 1, 0)))


class TestBuildProblem:
    def test_variable_count(self):
        # per step: u, k+1 weights, k segment binaries, level, slack, delta
        model = warm_model()
        cfg = MpcConfig(horizon=4, eta=1.0, cost_option="exceedance")
        lp, _ = build_problem(cfg, model, default_curve(), make_hists(model),
                              make_forecasts(4))
        k = 3
        assert lp.n_vars == 4 * (2 * k + 4) + 4 == 44

    def test_eta_zero_objective_has_no_noise_terms(self):
        model = warm_model()
        cfg = MpcConfig(horizon=3, eta=0.0, cost_option="exceedance")
        lp, index = build_problem(cfg, model, default_curve(),
                                  make_hists(model), make_forecasts(3))
        for t in range(3):
            assert lp.obj.get(int(index["delta"][t]), 0.0) == 0.0
            assert lp.obj.get(int(index["lhat"][t]), 0.0) == 0.0
            assert lp.obj.get(int(index["u"][t]), 0.0) > 0.0

    def test_ratio_requires_positive_ambient(self):
        model = warm_model()
        cfg = MpcConfig(horizon=2, eta=1.0, cost_option="ratio")
        with pytest.raises(ValueError, match="positive ambient"):
            build_problem(cfg, model, default_curve(), make_hists(model),
                          make_forecasts(2, l_amb=-1.0))

    def test_forecast_shortfall(self):
        model = warm_model()
        cfg = MpcConfig(horizon=8)
        with pytest.raises(ValueError, match="shorter than the horizon"):
            build_problem(cfg, model, default_curve(), make_hists(model),
                          make_forecasts(4))


class TestEncodingExactness:
    def test_random_feasible_points_lie_on_curve(self):
        """Sample the piecewise block (with the sum-to-one row): every
        feasible (u, level) pair lies on the curve."""
        curve = default_curve()
        rng = np.random.default_rng(12)
        k = curve.n_segments
        for _ in range(1000):
            seg = int(rng.integers(0, k))
            lam = np.zeros(k + 1)
            w = rng.uniform(0.0, 1.0)
            lam[seg], lam[seg + 1] = 1.0 - w, w
            u = float(lam @ curve.alpha)
            level = float(lam @ curve.beta)
            assert abs(level - eval_curve(curve, u)) <= 1e-6

    def test_solver_solutions_lie_on_curve(self):
        model = warm_model()
        curve = default_curve()
        rng = np.random.default_rng(13)
        for trial in range(6):
            n = 4
            cfg = MpcConfig(horizon=n, eta=float(rng.uniform(0, 50)),
                            cost_option="exceedance")
            fc = StepForecasts(
                start=START,
                t_amb=rng.uniform(-2, 8, n), s_sol=rng.uniform(0, 200, n),
                price=rng.uniform(0.05, 0.3, n), l_amb=rng.uniform(38, 62, n))
            hists = make_hists(model, y0=float(rng.uniform(18.5, 21.0)))
            lp, index = build_problem(cfg, model, curve, hists, fc)
            sol = milp.solve_milp(lp)
            assert sol.status is milp.Status.OPTIMAL
            for t in range(n):
                u = sol.x[index["u"][t]]
                lhat = sol.x[index["lhat"][t]]
                assert abs(lhat - eval_curve(curve, min(max(u, 0.0), 1.0))) <= 1e-6
                lam = sol.x[index["lam"][t]]
                z = sol.x[index["z"][t]]
                assert np.all(lam >= -1e-9) and np.all(lam <= 1 + 1e-9)
                assert np.sum(np.abs(z - np.round(z)) <= 1e-6) == len(z)
                assert np.sum(np.round(z)) == 1

    def test_unaugmented_encoding_underestimates(self):
        """Without the sum-to-one row the optimizer can place the level below
        the true curve: at u = 0.35 the encoding admits 30 dB (true: 46)."""
        model = warm_model()
        curve = default_curve()
        cfg = MpcConfig(horizon=1, eta=0.0)
        fc = make_forecasts(1)
        lp, index = build_problem(cfg, model, curve, make_hists(model), fc,
                                  augment_lambda=False)
        iu, ilhat = int(index["u"][0]), int(index["lhat"][0])
        lp.add_con([(iu, 1.0)], "==", 0.35)
        lp.set_objective([(ilhat, 1.0)])
        sol = milp.solve_milp(lp)
        assert sol.status is milp.Status.OPTIMAL
        assert sol.objective <= 30.0 + 1e-6          # admits 30 dB
        assert sol.objective < 46.0 - 1.0            # well below the truth
        # the (u, level) = (0.35, 30) point itself is feasible
        lp2, index2 = build_problem(cfg, model, curve, make_hists(model), fc,
                                    augment_lambda=False)
        lp2.add_con([(int(index2["u"][0]), 1.0)], "==", 0.35)
        lp2.add_con([(int(index2["lhat"][0]), 1.0)], "==", 30.0)
        lp2.set_objective([])
        assert milp.solve_milp(lp2).status is milp.Status.OPTIMAL

    def test_unaugmented_floor_example(self):
        """Minimizing the level with u >= 0.45 dips below 50 dB without the
        sum-to-one row; with it, 50 dB is exact."""
        model = warm_model()
        curve = default_curve()
        cfg = MpcConfig(horizon=1, eta=0.0)
        fc = make_forecasts(1)
        for augment, expect_fifty in ((False, False), (True, True)):
            lp, index = build_problem(cfg, model, curve, make_hists(model),
                                      fc, augment_lambda=augment)
            lp.add_con([(int(index["u"][0]), 1.0)], ">=", 0.45)
            lp.set_objective([(int(index["lhat"][0]), 1.0)])
            sol = milp.solve_milp(lp)
            assert sol.status is milp.Status.OPTIMAL
            if expect_fifty:
                assert sol.objective == pytest.approx(50.0, abs=1e-6)
            else:
                assert sol.objective < 50.0 - 1.0


class TestExceedanceEnvelope:
    def test_lines_underestimate_true_exceedance(self):
        curve = default_curve()
        rng = np.random.default_rng(3)
        for l_amb in (35.0, 40.0, 47.0, 55.0, 61.0):
            lines = exceedance_envelope(curve, l_amb)
            for u in rng.uniform(0, 1, 200):
                true = max(0.0, eval_curve(curve, float(u)) - l_amb)
                for slope, intercept in lines:
                    assert slope * u + intercept <= true + 1e-9

    def test_no_lines_when_ambient_covers_curve(self):
        assert exceedance_envelope(default_curve(), 60.0) == []


class TestSolveStep:
    def test_warm_building_stays_off(self):
        """One-step horizon, comfortable building, any positive noise weight:
        no heating and no exceedance.  Enumeration over the segment binaries
        confirms the solver's answer."""
        model = warm_model()
        curve = default_curve()
        cfg = MpcConfig(horizon=1, eta=5.0, cost_option="exceedance")
        hists = make_hists(model, y0=22.0)
        fc = make_forecasts(1, t_amb=10.0, l_amb=45.0)
        dec = solve_step(cfg, model, curve, hists, fc)
        assert dec.u0 == pytest.approx(0.0, abs=1e-7)
        assert dec.j_noise == pytest.approx(0.0, abs=1e-7)
        lp, _ = build_problem(cfg, model, curve, hists, fc)
        ref = milp.brute_force_milp(lp)
        assert ref.objective == pytest.approx(dec.objective, abs=1e-6)

    def test_determinism(self):
        model = warm_model()
        cfg = MpcConfig(horizon=8, eta=3.0, cost_option="exceedance")
        hists = make_hists(model, y0=19.1)
        fc = make_forecasts(8, t_amb=0.0, l_amb=41.0)
        a = solve_step(cfg, model, default_curve(), hists, fc)
        b = solve_step(cfg, model, default_curve(), hists, fc)
        assert a.u0 == b.u0
        assert np.array_equal(a.u_seq, b.u_seq)

    def test_noise_bookkeeping_consistent(self):
        model = warm_model()
        cfg = MpcConfig(horizon=6, eta=2.0, cost_option="exceedance")
        hists = make_hists(model, y0=19.0)
        fc = make_forecasts(6, t_amb=-3.0, l_amb=42.0)
        dec = solve_step(cfg, model, default_curve(), hists, fc)
        recomputed = sum(max(0.0, l - a) for l, a in
                         zip(dec.l_hp_pred, fc.l_amb))
        assert dec.j_noise == pytest.approx(recomputed, abs=1e-8)

    def test_ratio_bookkeeping_consistent(self):
        model = warm_model()
        cfg = MpcConfig(horizon=6, eta=2.0, cost_option="ratio")
        hists = make_hists(model, y0=19.0)
        fc = make_forecasts(6, t_amb=-3.0, l_amb=42.0)
        dec = solve_step(cfg, model, default_curve(), hists, fc)
        recomputed = sum(l / max(a, 1.0) for l, a in zip(dec.l_hp_pred, fc.l_amb))
        assert dec.j_noise == pytest.approx(recomputed, abs=1e-8)

    def test_large_eta_respects_ambient(self):
        """With a large exceedance weight, predicted noise stays at or below
        the ambient wherever comfort allows."""
        model = warm_model()
        cfg = MpcConfig(horizon=8, eta=500.0, cost_option="exceedance")
        hists = make_hists(model, y0=20.0)
        # comfort is holdable within the 43 dB cap at this ambient temperature
        fc = make_forecasts(8, t_amb=15.0, l_amb=43.0)
        dec = solve_step(cfg, model, default_curve(), hists, fc)
        assert np.all(dec.l_hp_pred <= 43.0 + 1e-6)

    def test_options_agree_at_eta_zero(self):
        """With no noise weight and a strictly varying price (unique optimum)
        both options return the same input sequence."""
        model = warm_model()
        n = 8
        price = 0.15 + 0.001 * np.arange(n)
        fc = StepForecasts(start=START, t_amb=np.full(n, -2.0),
                           s_sol=np.zeros(n), price=price,
                           l_amb=np.full(n, 45.0))
        hists = make_hists(model, y0=19.0)
        dec_e = solve_step(MpcConfig(horizon=n, eta=0.0, cost_option="exceedance"),
                           model, default_curve(), hists, fc)
        dec_r = solve_step(MpcConfig(horizon=n, eta=0.0, cost_option="ratio"),
                           model, default_curve(), hists, fc)
        assert np.allclose(dec_e.u_seq, dec_r.u_seq, atol=1e-6)

    def test_monotone_tradeoff_in_eta(self):
        """Single-problem scalarization: noise cost non-increasing and energy
        cost non-decreasing in the weight."""
        model = warm_model()
        hists = make_hists(model, y0=19.0)
        fc = make_forecasts(8, t_amb=-4.0, l_amb=41.0, price=0.2)
        jn, je = [], []
        for eta in (0.0, 0.5, 2.0, 10.0, 100.0):
            cfg = MpcConfig(horizon=8, eta=eta, cost_option="exceedance")
            dec = solve_step(cfg, model, default_curve(), hists, fc)
            jn.append(dec.j_noise)
            je.append(dec.j_energy)
        assert all(b <= a + 1e-6 for a, b in zip(jn, jn[1:]))
        assert all(b >= a - 1e-6 for a, b in zip(je, je[1:]))


class TestBaseline:
    def test_night_cap(self):
        model = warm_model()
        cfg = MpcConfig(horizon=4)
        # 02:00 start: all four steps are night
        fc = make_forecasts(4, start=datetime(2026, 1, 5, 2, 0))
        lp, index = build_baseline_problem(cfg, model, default_curve(),
                                           make_hists(model), fc)
        assert np.allclose(index["caps"], 0.45)

    def test_day_cap(self):
        model = warm_model()
        cfg = MpcConfig(horizon=4)
        fc = make_forecasts(4, start=datetime(2026, 1, 5, 10, 0))
        lp, index = build_baseline_problem(cfg, model, default_curve(),
                                           make_hists(model), fc)
        assert np.allclose(index["caps"], 1.0)

    def test_ambient_is_ignored(self):
        model = warm_model()
        cfg = MpcConfig(horizon=6, cost_option="baseline")
        hists = make_hists(model, y0=19.0)
        fc1 = make_forecasts(6, t_amb=-4.0, l_amb=45.0)
        fc2 = make_forecasts(6, t_amb=-4.0, l_amb=58.0)
        a = baseline_step(cfg, model, default_curve(), hists, fc1)
        b = baseline_step(cfg, model, default_curve(), hists, fc2)
        assert np.array_equal(a.u_seq, b.u_seq)

    def test_night_input_never_exceeds_cap(self):
        model = warm_model()
        cfg = MpcConfig(horizon=8, cost_option="baseline")
        hists = make_hists(model, y0=19.0)
        fc = make_forecasts(8, t_amb=-10.0, start=datetime(2026, 1, 5, 23, 0))
        dec = baseline_step(cfg, model, default_curve(), hists, fc)
        assert np.all(dec.u_seq <= 0.45 + 1e-6)


class TestSolveStepFailure:
    def test_infeasible_raises_with_dump(self):
        model = warm_model()
        curve = default_curve()
        cfg = MpcConfig(horizon=2, eta=0.0)
        fc = make_forecasts(2)
        lp, index = build_problem(cfg, model, curve, make_hists(model), fc)
        # force infeasibility the slacks cannot absorb
        lp.add_con([(int(index["u"][0]), 1.0)], ">=", 2.0)
        sol = milp.solve_milp(lp)
        assert sol.status is milp.Status.INFEASIBLE
        failure = SolverFailure("boom", lp_text=lp.to_lp_text())
        assert "minimize" in failure.lp_text
