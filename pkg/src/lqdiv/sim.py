"""Monte Carlo engine: controlled surplus paths, ruin, discounted dividends.

Paths evolve by an Euler scheme on a uniform grid aligned with the ODE grid
of the strategy being simulated.  Per step: the dividend rate is paid and
discounted at the left endpoint (rectangle rule); the surplus diffuses; jumps
sampled per step land together with the strategy's lump payment; a barrier
strategy pays the overflow above its level; ruin is the first node with
x <= 0 and stops the path when the strategy is of the stop-at-ruin kind.

Randomness is reproducible and order-independent: every path owns a Philox
counter-based stream keyed by (seed, path index), normals come from the
inverse normal CDF applied to that stream's uniforms, and results are reduced
in path order, so output is bit-identical for any worker count and for both
kernel backends.

Jump epochs are sampled per step as exact Poisson counts with the left-node
intensity (equivalent in law to thinning a dominating Poisson process, but
with a fixed per-step draw budget so streams stay aligned across backends).
Counts are capped at 2 per step and ``max(lam) * h`` must stay below 0.02,
which bounds the probability of a truncated third jump below 1.4e-6 per step.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from . import _kernels
from .model import LQObjective, ModelParams, model_violations
from .riccati import TimeGrid
from .strategy import Barrier, LQAffine, MeanReverting, Strategy, strategy_tag

__all__ = [
    "SimConfig",
    "PathRecord",
    "SimResult",
    "PairedResult",
    "simulate",
    "estimate_lq_objective",
    "paired_compare",
    "step_halving_pair",
    "default_stop_at_ruin",
]

BLOCK_STEPS = 2048
MAX_CHUNK_PATHS = 2048
# cap on lam*h for the per-step jump sampler (counts truncated at 2)
MAX_JUMP_STEP_MASS = 0.02
_U_FLOOR = 1e-300
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls; ``step`` must divide the model horizon."""

    n_paths: int
    step: float
    seed: int
    workers: int = 1
    common_noise: bool = True

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not self.step > 0.0:
            raise ValueError("step must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class PathRecord:
    pv_dividends: float
    ruin_time: float | None
    injected: float
    n_injections: int


@dataclass(frozen=True)
class SimResult:
    records: list[PathRecord]
    pv: np.ndarray
    mean: float
    sd: float
    ruin_count: int
    strategy: str
    config_hash: str

    @property
    def n_paths(self) -> int:
        return len(self.records)

    @property
    def std_error(self) -> float:
        return self.sd / math.sqrt(self.n_paths)


@dataclass(frozen=True)
class PairedResult:
    """Per-path PVs of several strategies driven by common random numbers."""

    tags: list[str]
    pv: np.ndarray          # [n_paths, n_strategies]
    ruin_times: np.ndarray  # [n_paths, n_strategies]; nan = no ruin
    results: list[SimResult]


def default_stop_at_ruin(s: Strategy) -> bool:
    """Barrier and mean-reverting payouts stop at ruin; the smooth one does not."""
    return not isinstance(s, LQAffine)


def strategy_json(s: Strategy) -> dict:
    if isinstance(s, LQAffine):
        return {
            "kind": "lq",
            "model": s.sol.model_hash,
            "objective": s.sol.objective_hash,
            "n_steps": s.sol.grid.n_steps,
        }
    if isinstance(s, MeanReverting):
        return {"kind": "mean_reverting", "l0": s.l0, "l1": s.l1}
    return {"kind": "barrier", "b": s.b}


@dataclass
class _NodeData:
    """Per-node coefficient arrays consumed by the stepping kernel."""

    grid: TimeGrid
    rate_a0: np.ndarray
    rate_a1: np.ndarray
    lump_a0: np.ndarray
    lump_a1: np.ndarray
    drift_c: np.ndarray
    extra0: np.ndarray
    extra1: np.ndarray
    const_vol: bool
    volh: np.ndarray
    var0: np.ndarray
    var1: np.ndarray
    var2: np.ndarray
    disc_pv: np.ndarray
    disc_obj: np.ndarray
    bench_a0: np.ndarray
    bench_a1: np.ndarray
    run_w: np.ndarray
    run_target: np.ndarray
    lump_w: np.ndarray
    lam_pen: np.ndarray
    barrier_level: float
    jump_mode: bool
    absorbed_pen: bool
    lam_nodes: np.ndarray


def _build_node_data(
    model: ModelParams,
    s: Strategy,
    grid: TimeGrid,
    absorb_jumps: bool,
    objective: LQObjective | None,
) -> _NodeData:
    times = grid.times
    n1 = grid.n_steps + 1
    zeros = np.zeros(n1)
    rate_a0 = zeros.copy()
    rate_a1 = zeros.copy()
    lump_a0 = zeros.copy()
    lump_a1 = zeros.copy()
    extra0 = zeros.copy()
    extra1 = zeros.copy()
    var0 = np.full(n1, model.sigma * model.sigma)
    var1 = zeros.copy()
    var2 = zeros.copy()
    barrier_level = math.inf
    lam_nodes = model.intensity.values(times)
    jump_mode = model.has_jumps and not absorb_jumps

    if isinstance(s, LQAffine):
        sol = s.sol
        if sol.grid != grid:
            raise ValueError("strategy ODE grid does not match the simulation grid")
        obj = sol.objective
        rate_a0 = obj.l0.values(times) + sol.p
        rate_a1 = obj.l1.values(times) + 2.0 * sol.q
        if model.has_jumps:
            p1 = model.jumps.p1
            a = obj.gamma_i.values(times) + 2.0 * sol.q
            interior_bad = (a <= 0.0) & (lam_nodes > 0.0)
            interior_bad[-1] = False
            if np.any(interior_bad):
                t_bad = times[np.argmax(interior_bad)]
                raise ValueError(
                    f"second-order condition gamma_i + 2q <= 0 at t={t_bad:.6g}"
                )
            with np.errstate(divide="ignore", invalid="ignore"):
                lump_a1 = np.where(a > 0.0, 2.0 * sol.q / a, 0.0)
                lump_a0 = np.where(a > 0.0, (2.0 * sol.q * p1 + sol.p) / a, 0.0)
        if absorb_jumps:
            p1, p2 = model.jumps.p1, model.jumps.p2
            extra0 = lam_nodes * (p1 - lump_a0)
            extra1 = -lam_nodes * lump_a1
            var0 = var0 + lam_nodes * (p2 - 2.0 * p1 * lump_a0 + lump_a0 * lump_a0)
            var1 = lam_nodes * 2.0 * lump_a1 * (lump_a0 - p1)
            var2 = lam_nodes * lump_a1 * lump_a1
    elif isinstance(s, MeanReverting):
        rate_a0 = np.full(n1, s.l0)
        rate_a1 = np.full(n1, s.l1)
    elif isinstance(s, Barrier):
        barrier_level = s.b
    else:  # pragma: no cover
        raise TypeError(f"unknown strategy type {type(s)!r}")

    const_vol = bool(np.all(var1 == 0.0) and np.all(var2 == 0.0))
    sqrt_h = math.sqrt(grid.h)
    volh = np.sqrt(var0) * sqrt_h

    if objective is not None:
        bench_a0 = objective.l0.values(times)
        bench_a1 = objective.l1.values(times)
        run_w = objective.gamma.values(times)
        run_target = objective.x0.values(times)
        lump_w = objective.gamma_i.values(times)
    else:
        bench_a0 = bench_a1 = run_w = run_target = lump_w = zeros

    return _NodeData(
        grid=grid,
        rate_a0=np.ascontiguousarray(rate_a0, dtype=np.float64),
        rate_a1=np.ascontiguousarray(rate_a1, dtype=np.float64),
        lump_a0=np.ascontiguousarray(lump_a0, dtype=np.float64),
        lump_a1=np.ascontiguousarray(lump_a1, dtype=np.float64),
        drift_c=np.ascontiguousarray(model.c.values(times), dtype=np.float64),
        extra0=np.ascontiguousarray(extra0, dtype=np.float64),
        extra1=np.ascontiguousarray(extra1, dtype=np.float64),
        const_vol=const_vol,
        volh=np.ascontiguousarray(volh, dtype=np.float64),
        var0=np.ascontiguousarray(var0, dtype=np.float64),
        var1=np.ascontiguousarray(var1, dtype=np.float64),
        var2=np.ascontiguousarray(var2, dtype=np.float64),
        disc_pv=np.exp(-model.delta_tilde * times),
        disc_obj=np.exp(-model.delta * times),
        bench_a0=np.ascontiguousarray(bench_a0, dtype=np.float64),
        bench_a1=np.ascontiguousarray(bench_a1, dtype=np.float64),
        run_w=np.ascontiguousarray(run_w, dtype=np.float64),
        run_target=np.ascontiguousarray(run_target, dtype=np.float64),
        lump_w=np.ascontiguousarray(lump_w, dtype=np.float64),
        lam_pen=np.ascontiguousarray(lam_nodes, dtype=np.float64),
        barrier_level=barrier_level,
        jump_mode=jump_mode,
        absorbed_pen=absorb_jumps and objective is not None,
        lam_nodes=lam_nodes,
    )


def _path_generators(seed: int, lo: int, hi: int) -> list[np.random.Generator]:
    masked = seed & 0xFFFFFFFFFFFFFFFF
    return [
        np.random.Generator(np.random.Philox(key=np.array([masked, pid], dtype=np.uint64)))
        for pid in range(lo, hi)
    ]


@dataclass
class _RunOutput:
    pv: np.ndarray
    ruin_time: np.ndarray  # nan = none
    injected: np.ndarray
    n_inj: np.ndarray
    x_final: np.ndarray
    obj: np.ndarray


def _run_chunk(
    lo: int,
    hi: int,
    x0: float,
    seed: int,
    nd: _NodeData,
    law,
    want_obj: bool,
    stop_at_ruin: bool,
    halve_normals: bool,
    out: _RunOutput,
) -> None:
    m = hi - lo
    n_steps = nd.grid.n_steps
    h = nd.grid.h
    sqrt_h = math.sqrt(h)
    gens = _path_generators(seed, lo, hi)

    x = np.full(m, float(x0))
    pv = np.zeros(m)
    obj_acc = np.zeros(m)
    injected = np.zeros(m)
    n_inj = np.zeros(m, dtype=np.int64)
    ruin_step = np.full(m, -1, dtype=np.int64)

    dummy_i8 = np.zeros((1, 1), dtype=np.int8)
    dummy_f8 = np.zeros((1, 1))

    if nd.jump_mode:
        # cumulative Poisson thresholds per step, from the left-node intensity
        mass = nd.lam_nodes[:-1] * h
        thr0 = np.exp(-mass)
        thr1 = thr0 * (1.0 + mass)

    u_buf = np.empty((m, BLOCK_STEPS))
    for b0 in range(0, n_steps, BLOCK_STEPS):
        bs = min(BLOCK_STEPS, n_steps - b0)
        u = u_buf[:, :bs]
        if halve_normals:
            for i, g in enumerate(gens):
                fine = g.random(2 * bs)
                np.maximum(fine, _U_FLOOR, out=fine)
                z = ndtri(fine)
                u[i] = (z[0::2] + z[1::2]) * _INV_SQRT2
            normals = np.ascontiguousarray(u)
        else:
            for i, g in enumerate(gens):
                u[i] = g.random(bs)
            np.maximum(u, _U_FLOOR, out=u)
            normals = np.ascontiguousarray(ndtri(u))

        if nd.jump_mode:
            for i, g in enumerate(gens):
                u[i] = g.random(bs)
            counts = ((u >= thr0[b0 : b0 + bs]).astype(np.int8)
                      + (u >= thr1[b0 : b0 + bs]).astype(np.int8))
            counts = np.ascontiguousarray(counts)
            for i, g in enumerate(gens):
                u[i] = g.random(bs)
            y1 = np.ascontiguousarray(law.quantile(u))
            for i, g in enumerate(gens):
                u[i] = g.random(bs)
            y2 = np.ascontiguousarray(law.quantile(u))
        else:
            counts, y1, y2 = dummy_i8, dummy_f8, dummy_f8

        _kernels.step_block(
            b0, bs, h, sqrt_h,
            nd.rate_a0, nd.rate_a1, nd.lump_a0, nd.lump_a1,
            nd.drift_c, nd.extra0, nd.extra1,
            int(nd.const_vol), nd.volh, nd.var0, nd.var1, nd.var2,
            nd.disc_pv, nd.disc_obj,
            int(want_obj), int(nd.absorbed_pen),
            nd.bench_a0, nd.bench_a1, nd.run_w, nd.run_target, nd.lump_w, nd.lam_pen,
            nd.barrier_level, int(stop_at_ruin), int(nd.jump_mode),
            normals, counts, y1, y2,
            x, pv, obj_acc, injected, n_inj, ruin_step,
        )

    times = nd.grid.times
    ruin_time = np.where(ruin_step >= 0, times[np.maximum(ruin_step, 0)], np.nan)
    out.pv[lo:hi] = pv
    out.ruin_time[lo:hi] = ruin_time
    out.injected[lo:hi] = injected
    out.n_inj[lo:hi] = n_inj
    out.x_final[lo:hi] = x
    out.obj[lo:hi] = obj_acc


def _chunk_ranges(n_paths: int, workers: int) -> list[tuple[int, int]]:
    per = max(1, min(MAX_CHUNK_PATHS, -(-n_paths // workers)))
    return [(lo, min(lo + per, n_paths)) for lo in range(0, n_paths, per)]


def _run(
    model: ModelParams,
    s: Strategy,
    x0: float,
    cfg: SimConfig,
    stop_at_ruin: bool,
    absorb_jumps: bool,
    objective: LQObjective | None,
    halve_normals: bool = False,
) -> _RunOutput:
    bad = model_violations(model)
    if bad:
        raise ValueError("invalid model: " + "; ".join(bad))
    if absorb_jumps:
        if not model.has_jumps:
            raise ValueError("absorb_jumps requires a jump model")
        if not isinstance(s, LQAffine):
            raise ValueError("jump absorption is defined for the LQ-affine strategy")
    grid = TimeGrid.from_step(model.horizon, cfg.step)
    nd = _build_node_data(model, s, grid, absorb_jumps, objective)
    if nd.jump_mode:
        mass = nd.lam_nodes.max() * grid.h
        if mass > MAX_JUMP_STEP_MASS:
            raise ValueError(
                f"max(lambda)*h = {mass:.3g} too large for the per-step jump "
                f"sampler (limit {MAX_JUMP_STEP_MASS}); reduce the step"
            )
        if halve_normals:
            raise ValueError("step-halving coupling is diffusion-only")
        law = model.jumps
    else:
        law = None

    n = cfg.n_paths
    out = _RunOutput(
        pv=np.empty(n),
        ruin_time=np.empty(n),
        injected=np.empty(n),
        n_inj=np.empty(n, dtype=np.int64),
        x_final=np.empty(n),
        obj=np.zeros(n),
    )
    ranges = _chunk_ranges(n, cfg.workers)
    if cfg.workers == 1 or len(ranges) == 1:
        for lo, hi in ranges:
            _run_chunk(lo, hi, x0, cfg.seed, nd, law, objective is not None,
                       stop_at_ruin, halve_normals, out)
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [
                pool.submit(_run_chunk, lo, hi, x0, cfg.seed, nd, law,
                            objective is not None, stop_at_ruin, halve_normals, out)
                for lo, hi in ranges
            ]
            for fut in futures:
                fut.result()
    return out


def _config_hash(
    model: ModelParams,
    s: Strategy,
    x0: float,
    cfg: SimConfig,
    stop_at_ruin: bool,
    absorb_jumps: bool,
) -> str:
    payload = {
        "model": model.to_json(),
        "strategy": strategy_json(s),
        "x0": x0,
        "n_paths": cfg.n_paths,
        "step": cfg.step,
        "seed": cfg.seed,
        "stop_at_ruin": stop_at_ruin,
        "absorb_jumps": absorb_jumps,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def simulate(
    model: ModelParams,
    s: Strategy,
    x0: float,
    cfg: SimConfig,
    stop_at_ruin: bool | None = None,
    absorb_jumps: bool = False,
) -> SimResult:
    """Simulate ``cfg.n_paths`` controlled paths and summarise dividend PVs."""
    if stop_at_ruin is None:
        stop_at_ruin = default_stop_at_ruin(s)
    run = _run(model, s, x0, cfg, stop_at_ruin, absorb_jumps, objective=None)
    records = [
        PathRecord(
            pv_dividends=float(run.pv[i]),
            ruin_time=None if math.isnan(run.ruin_time[i]) else float(run.ruin_time[i]),
            injected=float(run.injected[i]),
            n_injections=int(run.n_inj[i]),
        )
        for i in range(cfg.n_paths)
    ]
    sd = float(np.std(run.pv, ddof=1)) if cfg.n_paths > 1 else 0.0
    return SimResult(
        records=records,
        pv=run.pv,
        mean=float(np.mean(run.pv)),
        sd=sd,
        ruin_count=int(np.sum(~np.isnan(run.ruin_time))),
        strategy=strategy_tag(s),
        config_hash=_config_hash(model, s, x0, cfg, stop_at_ruin, absorb_jumps),
    )


def estimate_lq_objective(
    model: ModelParams,
    obj: LQObjective,
    s: Strategy,
    x0: float,
    cfg: SimConfig,
    stop_at_ruin: bool = False,
    absorb_jumps: bool = False,
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of the quadratic objective.

    Accrues the discounted rate-tracking and surplus penalties step by step,
    the lump penalty at jump epochs (or continuously, intensity-weighted, when
    jumps are absorbed), and the terminal terms at T.
    """
    run = _run(model, s, x0, cfg, stop_at_ruin, absorb_jumps, objective=obj)
    disc_T = math.exp(-model.delta * model.horizon)
    x0_T = obj.x0.value(model.horizon)
    vals = run.obj + disc_T * (
        obj.kappa * (run.x_final - obj.x_T) ** obj.tau
        + obj.delta_gamma_T * (run.x_final - x0_T) ** 2
    )
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(cfg.n_paths)) if cfg.n_paths > 1 else 0.0
    return mean, se


def paired_compare(
    model: ModelParams,
    strategies: Sequence[Strategy],
    x0: float,
    cfg: SimConfig,
    stop_at_ruin: Sequence[bool] | None = None,
) -> PairedResult:
    """Run several strategies on identical noise and collect per-path PVs.

    Streams are keyed by (seed, path index) only, so every strategy sees the
    same Brownian increments and jump marks per path.
    """
    if not cfg.common_noise:
        raise ValueError("paired_compare requires cfg.common_noise = True")
    if stop_at_ruin is None:
        stops = [default_stop_at_ruin(s) for s in strategies]
    else:
        stops = list(stop_at_ruin)
    results = [
        simulate(model, s, x0, cfg, stop_at_ruin=stop)
        for s, stop in zip(strategies, stops)
    ]
    pv = np.column_stack([res.pv for res in results])
    ruin = np.column_stack(
        [
            np.array([rec.ruin_time if rec.ruin_time is not None else np.nan
                      for rec in res.records])
            for res in results
        ]
    )
    return PairedResult(
        tags=[strategy_tag(s) for s in strategies],
        pv=pv,
        ruin_times=ruin,
        results=results,
    )


def step_halving_pair(
    model: ModelParams,
    s: Strategy,
    x0: float,
    cfg: SimConfig,
    stop_at_ruin: bool | None = None,
) -> tuple[SimResult, SimResult]:
    """Simulate at step h and h/2 on the same Brownian paths (diffusion only).

    The h/2 run consumes each path's normal stream directly; the h run sums
    consecutive pairs, (z1 + z2)/sqrt(2), so both discretisations see the same
    underlying Brownian motion and the difference of means isolates the
    discretisation effect.
    """
    if stop_at_ruin is None:
        stop_at_ruin = default_stop_at_ruin(s)
    fine_cfg = SimConfig(
        n_paths=cfg.n_paths, step=cfg.step / 2.0, seed=cfg.seed,
        workers=cfg.workers, common_noise=cfg.common_noise,
    )
    fine = simulate(model, s, x0, fine_cfg, stop_at_ruin=stop_at_ruin)

    run = _run(model, s, x0, cfg, stop_at_ruin, absorb_jumps=False,
               objective=None, halve_normals=True)
    records = [
        PathRecord(
            pv_dividends=float(run.pv[i]),
            ruin_time=None if math.isnan(run.ruin_time[i]) else float(run.ruin_time[i]),
            injected=float(run.injected[i]),
            n_injections=int(run.n_inj[i]),
        )
        for i in range(cfg.n_paths)
    ]
    sd = float(np.std(run.pv, ddof=1)) if cfg.n_paths > 1 else 0.0
    coarse = SimResult(
        records=records,
        pv=run.pv,
        mean=float(np.mean(run.pv)),
        sd=sd,
        ruin_count=int(np.sum(~np.isnan(run.ruin_time))),
        strategy=strategy_tag(s),
        config_hash=_config_hash(model, s, x0, cfg, stop_at_ruin, False),
    )
    return fine, coarse
