"""Experiment configuration and the command-line interface.

One JSON document fully determines an experiment: model dynamics, objective
weights, the strategies to compare, the simulation controls, and the output
location.  Unknown keys anywhere are rejected.  Commands re-emit all numeric
output with 12 significant digits and LF line endings; re-running a command
with the same config and seed reproduces every file byte for byte.

Subcommands: solve, simulate, sweep, cost, verify.  Exit codes: 0 ok,
1 validation error, 2 solver failure, 3 simulation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .model import JumpLaw, LQObjective, ModelParams, TimeFunction, validate
from .riccati import (
    RiccatiSolution,
    SolverError,
    TimeGrid,
    equivalence_deviation,
    solve_pv_coefficients,
    solve_riccati,
)
from .sim import SimConfig, paired_compare
from .strategy import Barrier, LQAffine, MeanReverting, Strategy, hjb_residual_grid
from .tables import format_number, write_table
from .valuation import barrier_roots, barrier_value, cost_of_smoothing, optimal_barrier, pv_affine

__all__ = ["ConfigError", "ExperimentConfig", "StrategySpec", "main"]

RESIDUAL_TOL = 1e-4
EQUIVALENCE_TOL = 1e-6
RESIDUAL_MULTIPLIERS = (-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 5.0)


class ConfigError(ValueError):
    pass


def _pop(d: dict, key: str, where: str, required: bool = True, default=None):
    if key in d:
        return d.pop(key)
    if required:
        raise ConfigError(f"missing key {key!r} in {where}")
    return default


def _reject_unknown(d: dict, where: str) -> None:
    if d:
        raise ConfigError(f"unknown keys in {where}: {sorted(d)}")


def _time_function(raw, where: str) -> TimeFunction:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return TimeFunction.constant(float(raw))
    if isinstance(raw, dict):
        d = dict(raw)
        breaks = _pop(d, "breakpoints", where)
        values = _pop(d, "values", where)
        _reject_unknown(d, where)
        return TimeFunction.piecewise(breaks, values)
    raise ConfigError(f"{where} must be a number or a breakpoints/values table")


def _jump_law(raw, where: str) -> JumpLaw:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object with a 'kind'")
    d = dict(raw)
    kind = _pop(d, "kind", where)
    if kind == "none":
        _reject_unknown(d, where)
        return JumpLaw.none()
    if kind == "normal":
        law = JumpLaw.normal(float(_pop(d, "mean", where)), float(_pop(d, "sd", where)))
        _reject_unknown(d, where)
        return law
    sign_raw = _pop(d, "sign", where, required=False, default="+")
    sign = {"+": 1, "-": -1, 1: 1, -1: -1}.get(sign_raw)
    if sign is None:
        raise ConfigError(f"{where}.sign must be '+' or '-'")
    if kind == "exponential":
        law = JumpLaw.exponential(float(_pop(d, "rate", where)), sign)
        _reject_unknown(d, where)
        return law
    if kind == "shifted_exponential":
        law = JumpLaw.shifted_exponential(
            float(_pop(d, "rate", where)), float(_pop(d, "shift", where)), sign
        )
        _reject_unknown(d, where)
        return law
    raise ConfigError(f"unknown jump law kind {kind!r}")


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    l0: float = 0.0
    l1: float = 0.0
    b: float | str = 0.0
    stop_at_ruin: bool = True

    def to_json(self) -> dict:
        if self.kind == "lq":
            return {"kind": "lq", "stop_at_ruin": self.stop_at_ruin}
        if self.kind == "mean_reverting":
            return {
                "kind": "mean_reverting",
                "l0": self.l0,
                "l1": self.l1,
                "stop_at_ruin": self.stop_at_ruin,
            }
        return {"kind": "barrier", "b": self.b, "stop_at_ruin": self.stop_at_ruin}


def _strategy_spec(raw, where: str) -> StrategySpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object with a 'kind'")
    d = dict(raw)
    kind = _pop(d, "kind", where)
    if kind == "lq":
        stop = bool(_pop(d, "stop_at_ruin", where, required=False, default=False))
        _reject_unknown(d, where)
        return StrategySpec(kind="lq", stop_at_ruin=stop)
    if kind == "mean_reverting":
        l0 = float(_pop(d, "l0", where, required=False, default=0.0))
        l1 = float(_pop(d, "l1", where))
        stop = bool(_pop(d, "stop_at_ruin", where, required=False, default=True))
        _reject_unknown(d, where)
        return StrategySpec(kind="mean_reverting", l0=l0, l1=l1, stop_at_ruin=stop)
    if kind == "barrier":
        b = _pop(d, "b", where)
        if b != "optimal":
            b = float(b)
        stop = bool(_pop(d, "stop_at_ruin", where, required=False, default=True))
        _reject_unknown(d, where)
        return StrategySpec(kind="barrier", b=b, stop_at_ruin=stop)
    raise ConfigError(f"unknown strategy kind {kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    objective: LQObjective
    strategies: tuple[StrategySpec, ...]
    n_paths: int
    step: float
    seed: int
    x0_initial: tuple[float, ...]
    workers: int
    common_noise: bool
    out_dir: str
    formats: tuple[str, ...]

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(raw)
        m = dict(_pop(d, "model", "config"))
        o = dict(_pop(d, "objective", "config"))
        strategies_raw = _pop(d, "strategies", "config")
        s = dict(_pop(d, "simulation", "config"))
        out = dict(_pop(d, "output", "config", required=False, default={}))
        _reject_unknown(d, "config")

        model = ModelParams(
            c=_time_function(_pop(m, "c", "model"), "model.c"),
            sigma=float(_pop(m, "sigma", "model")),
            intensity=_time_function(
                _pop(m, "lambda", "model", required=False, default=0.0), "model.lambda"
            ),
            jumps=_jump_law(
                _pop(m, "jumps", "model", required=False, default={"kind": "none"}),
                "model.jumps",
            ),
            delta=float(_pop(m, "delta", "model")),
            delta_tilde=float(_pop(m, "delta_tilde", "model")),
            horizon=float(_pop(m, "T", "model")),
        )
        _reject_unknown(m, "model")

        objective = LQObjective(
            l0=_time_function(_pop(o, "l0", "objective"), "objective.l0"),
            l1=_time_function(_pop(o, "l1", "objective"), "objective.l1"),
            x0=_time_function(_pop(o, "x0", "objective"), "objective.x0"),
            gamma=_time_function(_pop(o, "gamma", "objective"), "objective.gamma"),
            delta_gamma_T=float(_pop(o, "delta_gamma_T", "objective", required=False, default=0.0)),
            gamma_i=_time_function(
                _pop(o, "gamma_i", "objective", required=False, default=0.0), "objective.gamma_i"
            ),
            kappa=float(_pop(o, "kappa", "objective", required=False, default=0.0)),
            tau=int(_pop(o, "tau", "objective", required=False, default=0)),
            x_T=float(_pop(o, "x_T", "objective", required=False, default=0.0)),
        )
        _reject_unknown(o, "objective")

        if not isinstance(strategies_raw, list) or not strategies_raw:
            raise ConfigError("strategies must be a non-empty list")
        strategies = tuple(
            _strategy_spec(entry, f"strategies[{i}]") for i, entry in enumerate(strategies_raw)
        )

        x0_raw = _pop(s, "x0_initial", "simulation")
        if isinstance(x0_raw, (int, float)) and not isinstance(x0_raw, bool):
            x0_list = (float(x0_raw),)
        elif isinstance(x0_raw, list) and x0_raw:
            x0_list = tuple(float(v) for v in x0_raw)
        else:
            raise ConfigError("simulation.x0_initial must be a number or non-empty list")

        cfg = cls(
            model=model,
            objective=objective,
            strategies=strategies,
            n_paths=int(_pop(s, "n_paths", "simulation")),
            step=float(_pop(s, "step", "simulation")),
            seed=int(_pop(s, "seed", "simulation")),
            x0_initial=x0_list,
            workers=int(_pop(s, "workers", "simulation", required=False, default=1)),
            common_noise=bool(_pop(s, "common_noise", "simulation", required=False, default=True)),
            out_dir=str(_pop(out, "directory", "output", required=False, default="out")),
            formats=tuple(_pop(out, "formats", "output", required=False, default=["csv"])),
        )
        _reject_unknown(s, "simulation")
        _reject_unknown(out, "output")
        for fmt in cfg.formats:
            if fmt != "csv":
                raise ConfigError(f"unsupported output format {fmt!r}")

        problems = validate(cfg.model, cfg.objective)
        if problems:
            raise ConfigError("invalid model/objective: " + "; ".join(problems))
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def to_json_dict(self) -> dict:
        return {
            "model": self.model.to_json(),
            "objective": self.objective.to_json(),
            "strategies": [s.to_json() for s in self.strategies],
            "simulation": {
                "n_paths": self.n_paths,
                "step": self.step,
                "seed": self.seed,
                "x0_initial": list(self.x0_initial),
                "workers": self.workers,
                "common_noise": self.common_noise,
            },
            "output": {"directory": self.out_dir, "formats": list(self.formats)},
        }

    def experiment_hash(self) -> str:
        """Identity of the experiment: everything except execution details."""
        payload = self.to_json_dict()
        payload["simulation"].pop("workers")
        payload.pop("output")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def sim_config(self) -> SimConfig:
        return SimConfig(
            n_paths=self.n_paths,
            step=self.step,
            seed=self.seed,
            workers=self.workers,
            common_noise=self.common_noise,
        )


def resolve_barrier_level(cfg: ExperimentConfig, spec: StrategySpec) -> float:
    if spec.b == "optimal":
        if not cfg.model.c.is_constant:
            raise ConfigError("b='optimal' needs a constant drift c")
        roots = barrier_roots(cfg.model.c.value(0.0), cfg.model.sigma, cfg.model.delta_tilde)
        return optimal_barrier(roots)
    return float(spec.b)


def resolve_strategies(
    cfg: ExperimentConfig, sol: RiccatiSolution | None
) -> tuple[list[Strategy], list[bool], float | None]:
    """Turn strategy specs into runnable strategies; returns (list, stops, b*)."""
    out: list[Strategy] = []
    stops: list[bool] = []
    b_star: float | None = None
    for spec in cfg.strategies:
        if spec.kind == "lq":
            if sol is None:
                raise ConfigError("an 'lq' strategy needs a Riccati solve")
            out.append(LQAffine(sol))
        elif spec.kind == "mean_reverting":
            out.append(MeanReverting(l0=spec.l0, l1=spec.l1))
        else:
            level = resolve_barrier_level(cfg, spec)
            b_star = level
            out.append(Barrier(b=level))
        stops.append(spec.stop_at_ruin)
    return out, stops, b_star


def _comment(cfg: ExperimentConfig) -> str:
    return f"config_hash={cfg.experiment_hash()} seed={cfg.seed}"


def _solve(cfg: ExperimentConfig) -> tuple[TimeGrid, RiccatiSolution]:
    grid = TimeGrid.from_step(cfg.model.horizon, cfg.step)
    return grid, solve_riccati(cfg.model, cfg.objective, grid)


def cmd_solve(cfg: ExperimentConfig, out_dir: Path) -> int:
    grid, sol = _solve(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    times = grid.times
    write_table(
        out_dir / "riccati_qpr.csv",
        ["t", "q", "p", "r"],
        zip(times, sol.q, sol.p, sol.r),
        comment=_comment(cfg),
    )
    q_T, p_T, r_T = sol.terminal_triple()
    print(f"terminal conditions: q(T)={q_T:.9g} p(T)={p_T:.9g} r(T)={r_T:.9g}")

    lam_nodes = cfg.model.intensity.values(times)
    if np.any(lam_nodes > 0.0):
        margin = (cfg.objective.gamma_i.values(times) + 2.0 * sol.q)[:-1]
        margin = margin[lam_nodes[:-1] > 0.0]
        print(f"second-order condition: ok (min gamma_i + 2q = {margin.min():.9g})")
    else:
        print("second-order condition: not binding (no jumps)")

    l1_0 = cfg.objective.l1.value(0.0)
    l0_0 = cfg.objective.l0.value(0.0)
    print(f"rate slope at t=0: l1 + 2q(0) = {l1_0 + 2.0 * sol.q[0]:.9g} (benchmark l1 = {l1_0:.9g})")
    print(f"rate intercept at t=0: l0 + p(0) = {l0_0 + sol.p[0]:.9g}")

    if not cfg.model.has_jumps:
        pv = solve_pv_coefficients(cfg.model, sol, grid)
        write_table(
            out_dir / "pv_fg.csv",
            ["t", "f", "g"],
            zip(times, pv.f, pv.g),
            comment=_comment(cfg),
        )
        print(f"present value at t=0: f(0)={pv.f[0]:.9g} g(0)={pv.g[0]:.9g}")
    else:
        print("present-value coefficients skipped (jump model; absorb jumps first)")
    return 0


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path) -> int:
    sol = None
    if any(s.kind == "lq" for s in cfg.strategies):
        _, sol = _solve(cfg)
    strategies, stops, b_star = resolve_strategies(cfg, sol)

    out_dir.mkdir(parents=True, exist_ok=True)
    sim_cfg = cfg.sim_config()
    summary_rows: list[tuple] = []
    for x0 in cfg.x0_initial:
        paired = paired_compare(cfg.model, strategies, x0, sim_cfg, stop_at_ruin=stops)
        path_rows: list[tuple] = []
        for tag, res in zip(paired.tags, paired.results):
            for pid, rec in enumerate(res.records):
                path_rows.append((pid, tag, rec.pv_dividends, rec.ruin_time, rec.n_injections))
            params = _strategy_params_string(cfg, tag)
            summary_rows.append((x0, tag, res.mean, res.sd, b_star, params))
            ruin_frac = res.ruin_count / res.n_paths
            print(
                f"x0={x0:.6g} strategy={tag} mean={res.mean:.6g} sd={res.sd:.6g} "
                f"ruin_fraction={ruin_frac:.4f}"
            )
        write_table(
            out_dir / f"paths_x{x0:.6g}.csv",
            ["path_id", "strategy", "pv", "ruin_time", "n_injections"],
            path_rows,
            comment=_comment(cfg),
        )
    write_table(
        out_dir / "summary.csv",
        ["x", "strategy", "mean", "sd", "b_star", "params"],
        summary_rows,
        comment=_comment(cfg),
    )
    return 0


def _strategy_params_string(cfg: ExperimentConfig, tag: str) -> str:
    for spec in cfg.strategies:
        if spec.kind == tag:
            if tag == "mean_reverting":
                return f"l0={format_number(spec.l0)};l1={format_number(spec.l1)}"
            if tag == "barrier":
                return f"b={spec.b}"
            return f"l1={format_number(cfg.objective.l1.value(0.0))};x0={format_number(cfg.objective.x0.value(0.0))}"
    return ""


SWEEP_PARAMS = ("l0", "l1", "x0")


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path, param: str, lo: float, hi: float, points: int) -> int:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    if cfg.model.has_jumps:
        raise ConfigError("sweeps are defined for diffusion-only models")
    grid = TimeGrid.from_step(cfg.model.horizon, cfg.step)
    x_init = cfg.x0_initial[0]
    rows: list[tuple] = []
    for v in np.linspace(lo, hi, points):
        obj_v = replace(cfg.objective, **{param: TimeFunction.constant(float(v))})
        try:
            sol = solve_riccati(cfg.model, obj_v, grid)
            pv = solve_pv_coefficients(cfg.model, sol, grid)
            value = pv_affine(pv, 0.0, x_init)
            rows.append((param, float(v), value, "ok"))
        except (SolverError, ValueError) as exc:
            rows.append((param, float(v), None, f"error: {exc}"))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_table(
        out_dir / f"sweep_{param}.csv",
        ["parameter", "value", "pv", "status"],
        rows,
        comment=_comment(cfg),
    )
    ok_vals = [r[2] for r in rows if r[3] == "ok"]
    if ok_vals:
        print(f"sweep {param}: {len(ok_vals)}/{len(rows)} points solved; "
              f"pv range [{min(ok_vals):.6g}, {max(ok_vals):.6g}]")
    else:
        print(f"sweep {param}: no points solved")
    return 0


def cmd_cost(
    cfg: ExperimentConfig,
    out_dir: Path,
    lo: float | None,
    hi: float | None,
    points: int,
) -> int:
    if cfg.model.has_jumps:
        raise ConfigError("the cost curve is defined for diffusion-only models")
    if not cfg.model.c.is_constant:
        raise ConfigError("the cost curve needs a constant drift c")
    roots = barrier_roots(cfg.model.c.value(0.0), cfg.model.sigma, cfg.model.delta_tilde)
    b_star = optimal_barrier(roots)
    if lo is None:
        lo = 0.05 * b_star
    if hi is None:
        hi = b_star
    grid, sol = _solve(cfg)
    pv = solve_pv_coefficients(cfg.model, sol, grid)

    rows: list[tuple] = []
    prev = None
    for x in np.linspace(lo, hi, points):
        vb = barrier_value(float(x), b_star, roots)
        vlq = pv_affine(pv, 0.0, float(x))
        xi = cost_of_smoothing(pv, roots, b_star, 0.0, float(x))
        rows.append((float(x), vb, vlq, xi))
        if prev is not None and prev[1] * xi < 0.0:
            x_est = prev[0] + (0.0 - prev[1]) * (x - prev[0]) / (xi - prev[1])
            print(f"xi crosses 0 between x={prev[0]:.6g} and x={x:.6g} (~{x_est:.6g})")
        prev = (float(x), xi)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_table(
        out_dir / "cost_of_smoothing.csv",
        ["x", "vb", "vlq", "xi"],
        rows,
        comment=_comment(cfg),
    )
    print(f"cost curve written for x in [{lo:.6g}, {hi:.6g}] with b*={b_star:.6g}")
    return 0


def cmd_verify(cfg: ExperimentConfig) -> int:
    grid, sol = _solve(cfg)
    scale = max(1.0, cfg.objective.x0.value(0.0))
    xs = np.array(RESIDUAL_MULTIPLIERS) * scale
    res = hjb_residual_grid(sol, cfg.model, cfg.objective, xs)
    times = grid.times[:-1]
    v = (
        (sol.q[:-1, None] * xs[None, :] + sol.p[:-1, None]) * xs[None, :]
        + sol.r[:-1, None]
    )
    norm = np.abs(res) / (1.0 + np.abs(v))
    worst = float(norm.max())
    k, j = np.unravel_index(int(norm.argmax()), norm.shape)
    ok_res = worst <= RESIDUAL_TOL
    print(
        f"HJB residual: max |res|/(1+|V|) = {worst:.3e} at t={times[k]:.6g}, "
        f"x={xs[j]:.6g} -> {'pass' if ok_res else 'FAIL'} (tol {RESIDUAL_TOL:.0e})"
    )

    ok_eq = True
    if cfg.model.has_jumps:
        _, _, dev = equivalence_deviation(cfg.model, cfg.objective, grid)
        worst_dev = max(dev)
        ok_eq = worst_dev <= EQUIVALENCE_TOL
        print(
            f"jump/diffusion equivalence: max |dq|={dev[0]:.3e} |dp|={dev[1]:.3e} "
            f"|dr|={dev[2]:.3e} -> {'pass' if ok_eq else 'FAIL'} (tol {EQUIVALENCE_TOL:.0e})"
        )
    else:
        print("jump/diffusion equivalence: skipped (no jumps)")

    return 0 if (ok_res and ok_eq) else 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lqdiv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="experiment JSON")
        p.add_argument("--out", default=None, help="output directory (default: config)")
        p.add_argument("--seed", type=int, default=None, help="override simulation.seed")
        p.add_argument("--paths", type=int, default=None, help="override simulation.n_paths")
        p.add_argument("--step", type=float, default=None, help="override simulation.step")
        p.add_argument("--workers", type=int, default=None, help="override simulation.workers")

    common(sub.add_parser("solve", help="solve the coefficient ODEs and export them"))
    common(sub.add_parser("simulate", help="Monte Carlo comparison of the strategies"))

    p_sweep = sub.add_parser("sweep", help="present value vs a benchmark parameter")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p_sweep.add_argument("--min", type=float, required=True, dest="lo")
    p_sweep.add_argument("--max", type=float, required=True, dest="hi")
    p_sweep.add_argument("--points", type=int, default=9)

    p_cost = sub.add_parser("cost", help="cost-of-smoothing curve vs initial surplus")
    common(p_cost)
    p_cost.add_argument("--min", type=float, default=None, dest="lo")
    p_cost.add_argument("--max", type=float, default=None, dest="hi")
    p_cost.add_argument("--points", type=int, default=24)

    common(sub.add_parser("verify", help="HJB residual and jump-equivalence report"))
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    updates: dict = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.paths is not None:
        updates["n_paths"] = args.paths
    if args.step is not None:
        updates["step"] = args.step
    if args.workers is not None:
        updates["workers"] = args.workers
    if updates:
        cfg = replace(cfg, **updates)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(args.out if args.out is not None else cfg.out_dir)
    try:
        if args.command == "solve":
            return cmd_solve(cfg, out_dir)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "sweep":
            return cmd_sweep(cfg, out_dir, args.param, args.lo, args.hi, args.points)
        if args.command == "cost":
            return cmd_cost(cfg, out_dir, args.lo, args.hi, args.points)
        if args.command == "verify":
            return cmd_verify(cfg)
        raise AssertionError(args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # simulation-phase failures
        if args.command in ("simulate",):
            print(f"simulation failure: {exc}", file=sys.stderr)
            return 3
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
