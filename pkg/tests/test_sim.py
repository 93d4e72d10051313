"""Monte Carlo engine: oracles, determinism, ruin semantics, objective."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

import lqdiv as lq

from .conftest import L1


def annuity_discrete(c: float, dt: float, h: float, n: int) -> float:
    """PV of payments c*h at nodes h, 2h, ..., nh (geometric sum oracle)."""
    q = math.exp(-dt * h)
    return c * h * q * (1.0 - q**n) / (1.0 - q)


class TestDeterministicOracle:
    def test_full_barrier_annuity(self):
        # no noise, start at the barrier: every step pays exactly c*h
        model = lq.ModelParams(c=1.0, sigma=0.0, intensity=0.0, jumps=lq.JumpLaw.none(),
                               delta=0.05, delta_tilde=0.05, horizon=200.0)
        cfg = lq.SimConfig(n_paths=1, step=1 / 400, seed=0)
        res = lq.simulate(model, lq.Barrier(1.0), 1.0, cfg)
        pv = res.records[0].pv_dividends
        assert pv == pytest.approx(annuity_discrete(1.0, 0.05, 1 / 400, 80000), abs=1e-9)
        # continuous annuity differs by the rectangle-rule gap O(dt*h)
        assert pv == pytest.approx((1.0 / 0.05) * (1.0 - math.exp(-0.05 * 200.0)), abs=3e-3)
        assert res.sd == 0.0 and res.ruin_count == 0

    def test_single_path_statistics(self):
        model = lq.ModelParams(c=1.0, sigma=0.0, intensity=0.0, jumps=lq.JumpLaw.none(),
                               delta=0.05, delta_tilde=0.05, horizon=10.0)
        cfg = lq.SimConfig(n_paths=1, step=1 / 400, seed=5)
        res = lq.simulate(model, lq.Barrier(1.0), 1.0, cfg)
        assert res.mean == res.records[0].pv_dividends


@pytest.fixture(scope="module")
def small_model():
    return lq.ModelParams(c=1.0, sigma=0.5, intensity=0.0, jumps=lq.JumpLaw.none(),
                          delta=0.05, delta_tilde=0.05, horizon=20.0)


class TestDeterminism:
    def test_same_seed_same_paths(self, small_model):
        cfg = lq.SimConfig(n_paths=64, step=1 / 400, seed=31)
        a = lq.simulate(small_model, lq.MeanReverting(0.0, L1), 0.63, cfg)
        b = lq.simulate(small_model, lq.MeanReverting(0.0, L1), 0.63, cfg)
        assert np.array_equal(a.pv, b.pv)

    def test_worker_count_is_invisible(self, small_model):
        base = lq.SimConfig(n_paths=128, step=1 / 400, seed=77, workers=1)
        many = lq.SimConfig(n_paths=128, step=1 / 400, seed=77, workers=8)
        a = lq.simulate(small_model, lq.Barrier(1.2), 0.63, base)
        b = lq.simulate(small_model, lq.Barrier(1.2), 0.63, many)
        assert np.array_equal(a.pv, b.pv)
        assert a.config_hash == b.config_hash

    def test_different_seed_differs(self, small_model):
        a = lq.simulate(small_model, lq.Barrier(1.2), 0.63,
                        lq.SimConfig(n_paths=16, step=1 / 400, seed=1))
        b = lq.simulate(small_model, lq.Barrier(1.2), 0.63,
                        lq.SimConfig(n_paths=16, step=1 / 400, seed=2))
        assert not np.array_equal(a.pv, b.pv)


class TestRuinSemantics:
    def test_certain_ruin_stops_accrual(self):
        # deterministic decline: x = 0.5 - t hits 0 at t = 0.5 exactly
        model = lq.ModelParams(c=-1.0, sigma=0.0, intensity=0.0, jumps=lq.JumpLaw.none(),
                               delta=0.05, delta_tilde=0.05, horizon=2.0)
        cfg = lq.SimConfig(n_paths=1, step=1 / 512, seed=0)
        res = lq.simulate(model, lq.Barrier(5.0), 0.5, cfg)
        rec = res.records[0]
        assert rec.ruin_time == pytest.approx(0.5, abs=1e-12)
        assert rec.pv_dividends == 0.0
        assert res.ruin_count == 1

    def test_non_stopping_strategy_keeps_paying(self):
        model = lq.ModelParams(c=-1.0, sigma=0.0, intensity=0.0, jumps=lq.JumpLaw.none(),
                               delta=0.05, delta_tilde=0.05, horizon=2.0)
        cfg = lq.SimConfig(n_paths=1, step=1 / 512, seed=0)
        mr = lq.MeanReverting(0.0, L1)
        stopped = lq.simulate(model, mr, 0.5, cfg, stop_at_ruin=True)
        running = lq.simulate(model, mr, 0.5, cfg, stop_at_ruin=False)
        assert stopped.records[0].ruin_time == running.records[0].ruin_time
        # once below zero the proportional rate turns negative: injections
        assert running.records[0].n_injections > 0
        assert running.records[0].pv_dividends < stopped.records[0].pv_dividends

    def test_stopping_strategies_never_pay_negative(self, base_model):
        cfg = lq.SimConfig(n_paths=128, step=1 / 200, seed=3)
        small = replace(base_model, horizon=20.0)
        for s in (lq.MeanReverting(0.0, L1), lq.Barrier(1.2562829593917342)):
            res = lq.simulate(small, s, 0.2, cfg)
            assert all(rec.injected == 0.0 and rec.n_injections == 0 for rec in res.records)


class TestSimResultInvariants:
    def test_statistics_match_records(self, base_model):
        small = replace(base_model, horizon=10.0)
        cfg = lq.SimConfig(n_paths=100, step=1 / 100, seed=11)
        res = lq.simulate(small, lq.MeanReverting(0.0, L1), 0.63, cfg)
        pvs = np.array([rec.pv_dividends for rec in res.records])
        assert res.mean == pytest.approx(float(pvs.mean()), rel=1e-14)
        assert res.sd == pytest.approx(float(pvs.std(ddof=1)), rel=1e-14)
        assert res.ruin_count == sum(rec.ruin_time is not None for rec in res.records)
        assert res.ruin_count <= res.n_paths
        assert np.all(np.isfinite(pvs))
        for rec in res.records:
            if rec.ruin_time is not None:
                assert 0.0 < rec.ruin_time <= 10.0


class TestLQObjectiveEstimate:
    def test_zero_penalty_objective_is_exactly_zero(self, base_model, zero_objective):
        small = replace(base_model, horizon=5.0)
        grid = lq.TimeGrid.from_step(5.0, 1 / 100)
        sol = lq.solve_riccati(small, zero_objective, grid)
        cfg = lq.SimConfig(n_paths=32, step=1 / 100, seed=9)
        mean, se = lq.estimate_lq_objective(small, zero_objective, lq.LQAffine(sol), 0.63, cfg)
        assert mean == 0.0 and se == 0.0

    def test_objective_nonnegative(self, base_model, base_objective):
        small = replace(base_model, horizon=10.0)
        grid = lq.TimeGrid.from_step(10.0, 1 / 100)
        sol = lq.solve_riccati(small, base_objective, grid)
        cfg = lq.SimConfig(n_paths=64, step=1 / 100, seed=13)
        for s in (lq.LQAffine(sol), lq.MeanReverting(0.0, L1)):
            mean, _ = lq.estimate_lq_objective(small, base_objective, s, 0.63, cfg)
            assert mean >= 0.0

    def test_estimate_concentrates_on_value_function(self, base_model, base_objective):
        small = replace(base_model, horizon=20.0)
        grid = lq.TimeGrid.from_step(20.0, 1 / 200)
        sol = lq.solve_riccati(small, base_objective, grid)
        cfg = lq.SimConfig(n_paths=1500, step=1 / 200, seed=17)
        mean, se = lq.estimate_lq_objective(small, base_objective, lq.LQAffine(sol), 0.63, cfg)
        assert abs(mean - sol.value(0.0, 0.63)) <= 4.0 * se

    @pytest.mark.slow
    def test_perturbed_strategy_is_dominated(self, base_model, base_objective, base_solution):
        # +-10% on the quadratic coefficient under common random numbers
        cfg = lq.SimConfig(n_paths=1000, step=1 / 400, seed=23, workers=4)
        x0 = 0.6281414796958671
        base_mean, base_se = lq.estimate_lq_objective(
            base_model, base_objective, lq.LQAffine(base_solution), x0, cfg
        )
        for factor in (0.9, 1.1):
            bumped = replace(base_solution, q=base_solution.q * factor)
            mean, se = lq.estimate_lq_objective(
                base_model, base_objective, lq.LQAffine(bumped), x0, cfg
            )
            combined = math.hypot(base_se, se)
            assert mean - base_mean > 2.0 * combined


class TestJumpSampling:
    def test_step_mass_guard(self, base_objective):
        model = lq.ModelParams(c=1.0, sigma=0.5, intensity=30.0,
                               jumps=lq.JumpLaw.exponential(2.0, 1),
                               delta=0.05, delta_tilde=0.05, horizon=10.0)
        grid = lq.TimeGrid.from_step(10.0, 1 / 400)
        sol = lq.solve_riccati(model, base_objective, grid)
        cfg = lq.SimConfig(n_paths=4, step=1 / 400, seed=1)
        with pytest.raises(ValueError, match="sampler"):
            lq.simulate(model, lq.LQAffine(sol), 0.63, cfg)

    def test_absorb_jumps_requires_jump_model(self, base_model, base_solution):
        cfg = lq.SimConfig(n_paths=4, step=1 / 400, seed=1)
        with pytest.raises(ValueError, match="jump"):
            lq.simulate(base_model, lq.LQAffine(base_solution), 0.63, cfg, absorb_jumps=True)


class TestPairedCompare:
    def test_identical_strategies_identical_columns(self, base_model):
        small = replace(base_model, horizon=10.0)
        cfg = lq.SimConfig(n_paths=50, step=1 / 100, seed=21)
        paired = lq.paired_compare(small, [lq.Barrier(1.2), lq.Barrier(1.2)], 0.63, cfg)
        assert np.array_equal(paired.pv[:, 0], paired.pv[:, 1])

    def test_requires_common_noise(self, base_model):
        cfg = lq.SimConfig(n_paths=4, step=1 / 100, seed=21, common_noise=False)
        with pytest.raises(ValueError, match="common_noise"):
            lq.paired_compare(base_model, [lq.Barrier(1.2)], 0.63, cfg)

    def test_ruin_flags_shape(self, base_model):
        small = replace(base_model, horizon=10.0)
        cfg = lq.SimConfig(n_paths=50, step=1 / 100, seed=2)
        paired = lq.paired_compare(small, [lq.MeanReverting(0.0, L1), lq.Barrier(1.2)], 0.1, cfg)
        assert paired.pv.shape == (50, 2)
        assert paired.ruin_times.shape == (50, 2)
        assert paired.tags == ["mean_reverting", "barrier"]


class TestStepHalvingPair:
    def test_shared_brownian_path_without_noise(self):
        # sigma = 0: both discretisations are deterministic and nearly equal
        model = lq.ModelParams(c=1.0, sigma=0.0, intensity=0.0, jumps=lq.JumpLaw.none(),
                               delta=0.05, delta_tilde=0.05, horizon=10.0)
        cfg = lq.SimConfig(n_paths=2, step=1 / 100, seed=3)
        fine, coarse = lq.step_halving_pair(model, lq.Barrier(1.0), 1.0, cfg)
        assert abs(fine.mean - coarse.mean) < 1e-3

    def test_coupling_reduces_spread(self, base_model):
        small = replace(base_model, horizon=20.0)
        cfg = lq.SimConfig(n_paths=400, step=1 / 200, seed=4)
        fine, coarse = lq.step_halving_pair(small, lq.Barrier(1.2562829593917342), 0.63, cfg)
        # coupled runs differ far less than independent MC error
        assert abs(fine.mean - coarse.mean) < coarse.sd / math.sqrt(400)
