"""End-to-end acceptance criteria, one printed pass/fail line per check.

Two checks are known to fail against their pinned reference values and are
kept as stated rather than loosened:

* the optimal barrier for delta_tilde = 0.01 -- the closed form (which
  reproduces the four other pinned levels to 1e-3 and satisfies both the
  stationarity identity and a brute-force grid search) yields 1.6676, not
  the pinned 5.175;
* the mean-reverting ruin fraction -- a continuous-monitoring first-passage
  PDE oracle puts the true probability at 9.96% from x = 0.5 b*, and Euler
  simulation at h = 1/400 lands at 8-10% across seeds, so the pinned band
  5.5% +- 2pp is not attainable by a faithful simulation of these dynamics.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

import lqdiv as lq
from lqdiv.cli import main
from lqdiv.model import TimeFunction
from lqdiv.riccati import equivalence_deviation
from lqdiv.strategy import hjb_residual_grid

from .conftest import L1, X0_TARGET

pytestmark = pytest.mark.acceptance

SEED = 20260810
X_HALF = 0.6281414796958671  # 0.5 b* for the base parameters


def report(tag: str, ok: bool, detail: str) -> str:
    line = f"ACCEPTANCE {tag}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    return line


# --------------------------------------------------------------------------
# 1. optimal barrier levels
# --------------------------------------------------------------------------


@pytest.mark.parametrize(
    "c,sigma,dt,expected",
    [
        (1.0, 0.5, 0.05, 1.256),
        (1.0, 0.1, 0.05, 0.083),
        (1.0, 1.0, 0.05, 3.563),
        (1.0, 0.5, 0.01, 5.175),
        (1.0, 0.5, 0.1, 1.075),
    ],
    ids=["base", "sigma=0.1", "sigma=1", "dtilde=0.01", "dtilde=0.1"],
)
def test_criterion_1_optimal_barrier(c, sigma, dt, expected):
    t0 = time.perf_counter()
    b = lq.optimal_barrier(lq.barrier_roots(c, sigma, dt))
    elapsed = time.perf_counter() - t0
    ok = abs(b - expected) <= 1e-3 and elapsed < 1e-3
    line = report(
        "1",
        ok,
        f"optimal_barrier({c}, {sigma}, {dt}) = {b:.6f} (expected {expected} +- 0.001, "
        f"{elapsed * 1e6:.0f}us)",
    )
    assert ok, line


# --------------------------------------------------------------------------
# 2. base-table reproduction at x = 0.5 b*
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def table_row(base_model, base_solution, b_star):
    cfg = lq.SimConfig(n_paths=2500, step=1 / 400, seed=SEED, workers=4)
    strategies = [
        lq.LQAffine(base_solution),
        lq.MeanReverting(0.0, L1),
        lq.Barrier(b_star),
    ]
    t0 = time.perf_counter()
    paired = lq.paired_compare(base_model, strategies, 0.5 * b_star, cfg)
    elapsed = time.perf_counter() - t0
    return paired, elapsed


@pytest.mark.slow
@pytest.mark.parametrize(
    "tag,mean_target,mean_tol,sd_target",
    [
        ("lq", 18.727, 0.2, 1.522),
        ("mean_reverting", 18.279, 0.4, 3.231),
        ("barrier", 19.179, 0.3, 2.381),
    ],
)
def test_criterion_2_means_and_sds(table_row, tag, mean_target, mean_tol, sd_target):
    paired, elapsed = table_row
    res = paired.results[paired.tags.index(tag)]
    ok_mean = abs(res.mean - mean_target) <= mean_tol
    ok_sd = abs(res.sd - sd_target) <= 0.25 * sd_target
    ok_time = elapsed < 300.0
    ok = ok_mean and ok_sd and ok_time
    line = report(
        "2",
        ok,
        f"{tag}: mean={res.mean:.3f} (target {mean_target}+-{mean_tol}), "
        f"sd={res.sd:.3f} (target {sd_target}+-25%), runtime {elapsed:.0f}s < 300s",
    )
    assert ok, line


@pytest.mark.slow
def test_criterion_2_mr_ruin_fraction(table_row):
    paired, _ = table_row
    res = paired.results[paired.tags.index("mean_reverting")]
    frac = res.ruin_count / res.n_paths
    ok = abs(frac - 0.055) <= 0.02
    line = report(
        "2",
        ok,
        f"mean-reverting ruin fraction {frac:.4f} (pinned band 0.055 +- 0.02; "
        f"continuous-monitoring oracle puts the true probability at 0.0996, "
        f"so the band is not attainable by a faithful simulation)",
    )
    assert ok, line


# --------------------------------------------------------------------------
# 3. Monte Carlo vs closed-form PV across the surplus ladder
# --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_3_closed_form_cross_check(base_model, base_solution, base_pv, b_star):
    cfg = lq.SimConfig(n_paths=2500, step=1 / 400, seed=SEED, workers=4)
    s = lq.LQAffine(base_solution)
    details = []
    ok = True
    for mult in (0.1, 0.5, 1.0, 1.5, 2.0):
        x0 = mult * b_star
        res = lq.simulate(base_model, s, x0, cfg, stop_at_ruin=False)
        target = lq.pv_affine(base_pv, 0.0, x0)
        band = 3.0 * res.sd / math.sqrt(cfg.n_paths)
        good = abs(res.mean - target) <= band
        ok = ok and good
        details.append(f"x={mult:g}b*: |{res.mean:.4f}-{target:.4f}|<={band:.4f} {'ok' if good else 'BAD'}")
    line = report("3", ok, "; ".join(details))
    assert ok, line


# --------------------------------------------------------------------------
# 4. HJB residual suite
# --------------------------------------------------------------------------


def test_criterion_4_residual_suite(base_model, base_objective, base_solution, zero_objective):
    scale = max(1.0, X0_TARGET)
    xs = np.array([-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 5.0]) * scale
    res = hjb_residual_grid(base_solution, base_model, base_objective, xs)
    v = (base_solution.q[:-1, None] * xs + base_solution.p[:-1, None]) * xs + base_solution.r[:-1, None]
    worst = float(np.max(np.abs(res) / (1.0 + np.abs(v))))
    ok_table = worst <= 1e-4

    zero_sol = lq.solve_riccati(base_model, zero_objective, base_solution.grid)
    zero_res = hjb_residual_grid(zero_sol, base_model, zero_objective, xs)
    ok_zero = bool(np.all(zero_res == 0.0))

    ok = ok_table and ok_zero
    line = report(
        "4",
        ok,
        f"max |residual|/(1+|V|) = {worst:.2e} <= 1e-4; zero-penalty residual exactly 0: {ok_zero}",
    )
    assert ok, line


# --------------------------------------------------------------------------
# 5. jump / equivalent-diffusion agreement
# --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_5_jump_equivalence(jump_model, base_objective, grid400):
    _, _, dev = equivalence_deviation(jump_model, base_objective, grid400)
    ok_ode = max(dev) <= 1e-6

    sol = lq.solve_riccati(jump_model, base_objective, grid400)
    cfg = lq.SimConfig(n_paths=2500, step=1 / 400, seed=42, workers=4)
    s = lq.LQAffine(sol)
    m_jump, se_jump = lq.estimate_lq_objective(jump_model, base_objective, s, X_HALF, cfg)
    m_diff, se_diff = lq.estimate_lq_objective(
        jump_model, base_objective, s, X_HALF, cfg, absorb_jumps=True
    )
    combined = math.hypot(se_jump, se_diff)
    ok_mc = abs(m_jump - m_diff) <= 3.0 * combined

    ok = ok_ode and ok_mc
    line = report(
        "5",
        ok,
        f"max |dq,dp,dr| = {max(dev):.2e} <= 1e-6; objective jump {m_jump:.4f} vs "
        f"absorbed {m_diff:.4f}, |diff| {abs(m_jump - m_diff):.4f} <= {3 * combined:.4f}",
    )
    assert ok, line


# --------------------------------------------------------------------------
# 6. convergence orders
# --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_convergence(base_model, base_objective, b_star):
    sols = {
        n: lq.solve_riccati(base_model, base_objective, lq.TimeGrid(200.0, n))
        for n in (20000, 40000, 80000)
    }
    ref = sols[80000]
    e_h = float(np.max(np.abs(sols[20000].q - ref.q[::4])))
    e_h2 = float(np.max(np.abs(sols[40000].q - ref.q[::2])))
    ratio = e_h / e_h2
    ok_ode = ratio >= 12.0

    cfg = lq.SimConfig(n_paths=10000, step=1 / 400, seed=2024, workers=4)
    fine, coarse = lq.step_halving_pair(base_model, lq.Barrier(b_star), 0.5 * b_star, cfg)
    se = coarse.sd / math.sqrt(cfg.n_paths)
    shift = abs(fine.mean - coarse.mean)
    ok_mc = shift < se

    ok = ok_ode and ok_mc
    line = report(
        "6",
        ok,
        f"RK4 error ratio {ratio:.1f} >= 12; barrier mean shift under step halving "
        f"{shift:.4f} < SE {se:.4f} at 1e4 paths",
    )
    assert ok, line


# --------------------------------------------------------------------------
# 7. benchmark-sweep monotonicity
# --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_sweep_monotonicity(base_model, base_objective):
    grid = lq.TimeGrid.from_step(200.0, 1 / 100)

    def pv_at(obj):
        sol = lq.solve_riccati(base_model, obj, grid)
        pv = lq.solve_pv_coefficients(base_model, sol, grid)
        return lq.pv_affine(pv, 0.0, X_HALF)

    checks = []
    ok = True
    for param, lo, hi, direction in (
        ("x0", 0.5, 4.0, -1.0),
        ("l1", 0.2, 2.0, +1.0),
        ("l0", 0.0, 2.0, +1.0),
    ):
        vals = [
            pv_at(replace(base_objective, **{param: TimeFunction.constant(float(v))}))
            for v in np.linspace(lo, hi, 8)
        ]
        good = bool(np.all(direction * np.diff(vals) > 0.0))
        ok = ok and good
        word = "decreasing" if direction < 0 else "increasing"
        checks.append(f"{param} strictly {word} on [{lo},{hi}]: {good}")
    line = report("7", ok, "; ".join(checks))
    assert ok, line


# --------------------------------------------------------------------------
# 8. cost-of-smoothing curve
# --------------------------------------------------------------------------


def test_criterion_8_cost_curve(base_pv, base_roots, b_star):
    small = [lq.cost_of_smoothing(base_pv, base_roots, b_star, 0.0, f * b_star)
             for f in (0.05, 0.10, 0.15)]
    ok_neg = all(v < 0.0 for v in small)

    ladder = np.linspace(0.3 * b_star, b_star, 15)
    xis = [lq.cost_of_smoothing(base_pv, base_roots, b_star, 0.0, float(x)) for x in ladder]
    ok_mono = bool(np.all(np.diff(xis) > 0.0))

    ok = ok_neg and ok_mono
    line = report(
        "8",
        ok,
        f"xi < 0 for x <= 0.15 b* (max {max(small):.3f}); strictly increasing on "
        f"[0.3 b*, b*] ({xis[0]:.3f} .. {xis[-1]:.3f})",
    )
    assert ok, line


# --------------------------------------------------------------------------
# 9. byte-identical CLI output across worker counts
# --------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path):
    config = {
        "model": {"c": 1.0, "sigma": 0.5, "lambda": 0.0, "jumps": {"kind": "none"},
                  "delta": 0.05, "delta_tilde": 0.05, "T": 200.0},
        "objective": {"l0": 0.0, "l1": L1, "x0": X0_TARGET, "gamma": 1.0,
                      "delta_gamma_T": 0.0, "gamma_i": 0.0, "kappa": 0.0, "tau": 0, "x_T": 0.0},
        "strategies": [
            {"kind": "lq", "stop_at_ruin": False},
            {"kind": "mean_reverting", "l0": 0.0, "l1": L1, "stop_at_ruin": True},
            {"kind": "barrier", "b": "optimal", "stop_at_ruin": True},
        ],
        "simulation": {"n_paths": 300, "step": 1 / 400, "seed": SEED,
                       "x0_initial": [X_HALF], "workers": 1, "common_noise": True},
        "output": {"directory": "out", "formats": ["csv"]},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))

    outputs: dict[tuple[int, int], bytes] = {}
    for workers in (1, 8):
        for attempt in (0, 1):
            out = tmp_path / f"w{workers}_{attempt}"
            code = main([
                "simulate", "--config", str(cfg_path), "--out", str(out),
                "--workers", str(workers),
            ])
            assert code == 0
            blob = b""
            for name in sorted(p.name for p in out.iterdir()):
                blob += name.encode() + (out / name).read_bytes()
            outputs[(workers, attempt)] = blob

    same_w1 = outputs[(1, 0)] == outputs[(1, 1)]
    same_w8 = outputs[(8, 0)] == outputs[(8, 1)]
    across = outputs[(1, 0)] == outputs[(8, 0)]
    ok = same_w1 and same_w8 and across
    line = report(
        "9",
        ok,
        f"byte-identical reruns: workers=1 {same_w1}, workers=8 {same_w8}, "
        f"1-vs-8 workers {across}",
    )
    assert ok, line
