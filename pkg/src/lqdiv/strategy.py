"""Dividend strategies and the HJB-residual verification probe.

Three strategy families are compared throughout:

* ``LQAffine`` -- the optimal policy of the quadratic objective: a rate
  l0 + p(t) + (l1 + 2 q(t)) x (negative values are capital injections) and,
  at jump epochs only, a lump (2 q x + 2 q p1 + p) / (gamma_i + 2 q).
* ``MeanReverting`` -- a fixed affine rate paid until ruin; the controlled
  surplus is an Ornstein-Uhlenbeck process reverting around c / l1.
* ``Barrier`` -- pay out everything above a level b, nothing below, stop at
  ruin.  Its singular payout is realised by the simulator as the overflow
  above b after each Euler step, so ``rate`` is identically zero here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import LQObjective, ModelParams
from .riccati import RiccatiSolution, eval_qpr

__all__ = [
    "LQAffine",
    "MeanReverting",
    "Barrier",
    "Strategy",
    "strategy_tag",
    "rate",
    "lump",
    "hjb_residual",
    "hjb_residual_grid",
    "mean_reversion_level",
    "mr_benchmark_from_level",
]


@dataclass(frozen=True)
class LQAffine:
    sol: RiccatiSolution

    @property
    def objective(self) -> LQObjective:
        return self.sol.objective

    @property
    def model(self) -> ModelParams:
        return self.sol.model


@dataclass(frozen=True)
class MeanReverting:
    l0: float
    l1: float

    def __post_init__(self) -> None:
        if self.l0 < 0.0:
            raise ValueError("mean-reverting intercept must be >= 0")
        if not self.l1 > 0.0:
            raise ValueError("mean-reverting slope must be > 0")


@dataclass(frozen=True)
class Barrier:
    b: float

    def __post_init__(self) -> None:
        if not self.b > 0.0:
            raise ValueError("barrier level must be > 0")


Strategy = Union[LQAffine, MeanReverting, Barrier]


def strategy_tag(s: Strategy) -> str:
    if isinstance(s, LQAffine):
        return "lq"
    if isinstance(s, MeanReverting):
        return "mean_reverting"
    return "barrier"


def rate(s: Strategy, t: float, x: float) -> float:
    """Continuous dividend rate at (t, x); may be negative for LQAffine."""
    if isinstance(s, LQAffine):
        q, p, _ = eval_qpr(s.sol, t)
        obj = s.objective
        return obj.l0.value(t) + p + (obj.l1.value(t) + 2.0 * q) * x
    if isinstance(s, MeanReverting):
        return s.l0 + s.l1 * x
    return 0.0


def lump(s: Strategy, t: float, x_pre_jump: float) -> float:
    """Lump payment triggered by a jump at time t with pre-jump surplus x."""
    if not isinstance(s, LQAffine):
        return 0.0
    q, p, _ = eval_qpr(s.sol, t)
    gami = s.objective.gamma_i.value(t)
    a = gami + 2.0 * q
    if a <= 0.0:
        raise ValueError(
            f"lump undefined at t={t:.6g}: second-order condition gamma_i + 2q = {a:.6g} <= 0"
        )
    p1 = s.model.jumps.p1
    return (2.0 * q * x_pre_jump + 2.0 * q * p1 + p) / a


def _fd_backward(arr: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order finite-difference time derivative of node values."""
    n = len(arr) - 1
    if n < 4:
        raise ValueError("need at least 5 nodes for the residual derivative")
    d = np.empty_like(arr)
    d[2:-2] = (arr[:-4] - 8.0 * arr[1:-3] + 8.0 * arr[3:-1] - arr[4:]) / (12.0 * h)
    d[0] = (-25.0 * arr[0] + 48.0 * arr[1] - 36.0 * arr[2] + 16.0 * arr[3] - 3.0 * arr[4]) / (12.0 * h)
    d[1] = (-3.0 * arr[0] - 10.0 * arr[1] + 18.0 * arr[2] - 6.0 * arr[3] + arr[4]) / (12.0 * h)
    d[-2] = (3.0 * arr[-1] + 10.0 * arr[-2] - 18.0 * arr[-3] + 6.0 * arr[-4] - arr[-5]) / (12.0 * h)
    d[-1] = (25.0 * arr[-1] - 48.0 * arr[-2] + 36.0 * arr[-3] - 16.0 * arr[-4] + 3.0 * arr[-5]) / (12.0 * h)
    return d


def _residual_at_nodes(
    sol: RiccatiSolution,
    model: ModelParams,
    obj: LQObjective,
    xs: np.ndarray,
) -> np.ndarray:
    """Residual of the dynamic programming equation at all nodes t < T.

    V_t comes from a fourth-order finite difference of the stored q, p, r, so
    the residual actually measures how well the integrated trajectory solves
    the equation (an analytically evaluated V_t would be zero for any node
    values whatsoever, by construction of the coefficient matching).
    """
    h = sol.grid.h
    times = sol.grid.times[:-1]
    q = sol.q[:-1]
    p = sol.p[:-1]
    r = sol.r[:-1]
    qd = _fd_backward(sol.q, h)[:-1]
    pd = _fd_backward(sol.p, h)[:-1]
    rd = _fd_backward(sol.r, h)[:-1]

    c = model.c.values(times)
    lam = model.intensity.values(times)
    l0 = obj.l0.values(times)
    l1 = obj.l1.values(times)
    x0 = obj.x0.values(times)
    gam = obj.gamma.values(times)
    gami = obj.gamma_i.values(times)
    p1, p2 = model.jumps.p1, model.jumps.p2
    sig2 = model.sigma * model.sigma
    delta = model.delta

    col = lambda a: a[:, None]  # noqa: E731 - broadcasting shorthand
    x = xs[None, :]
    v = (col(q) * x + col(p)) * x + col(r)
    vx = 2.0 * col(q) * x + col(p)
    vt = (col(qd) * x + col(pd)) * x + col(rd)

    res = (
        vt
        - delta * v
        + vx * (col(c) - col(l0) - col(l1) * x)
        - 0.5 * vx * vx
        + 0.5 * col(gam) * (x - col(x0)) ** 2
        + col(q) * sig2
    )

    if np.any(lam > 0.0):
        a = gami + 2.0 * q
        bad = (lam > 0.0) & (a <= 0.0)
        if np.any(bad):
            t_bad = times[np.argmax(bad)]
            raise ValueError(
                f"second-order condition gamma_i + 2q <= 0 at t={t_bad:.6g}"
            )
        with np.errstate(invalid="ignore", divide="ignore"):
            lump_i = (vx + 2.0 * col(q) * p1) / col(a)
        lump_i = np.where(col(lam) > 0.0, lump_i, 0.0)
        jump = col(lam) * (
            0.5 * col(gami) * lump_i * lump_i
            + vx * (p1 - lump_i)
            + col(q) * (p2 + lump_i * lump_i - 2.0 * p1 * lump_i)
        )
        res = res + jump

    return res


def hjb_residual_grid(
    sol: RiccatiSolution,
    model: ModelParams,
    obj: LQObjective,
    xs: np.ndarray,
) -> np.ndarray:
    """Residual matrix over (all nodes t < T) x (probe surpluses xs)."""
    return _residual_at_nodes(sol, model, obj, np.asarray(xs, dtype=float))


def hjb_residual(
    sol: RiccatiSolution,
    model: ModelParams,
    obj: LQObjective,
    t: float,
    x: float,
) -> float:
    """Scalar residual at (t, x), t in [0, T); linear between nodes."""
    T = sol.grid.horizon
    if not 0.0 <= t < T:
        raise ValueError(f"t={t} outside [0, T)")
    grid_res = _residual_at_nodes(sol, model, obj, np.array([float(x)]))[:, 0]
    pos = t / sol.grid.h
    k = min(int(pos), len(grid_res) - 1)
    w = pos - k
    if w == 0.0 or k + 1 >= len(grid_res):
        return float(grid_res[k])
    return float(grid_res[k] + w * (grid_res[k + 1] - grid_res[k]))


def mean_reversion_level(sol: RiccatiSolution, t: float) -> float:
    """Surplus level where the optimally controlled drift changes sign.

    The controlled drift is c - l0 - p(t) - (l1 + 2 q(t)) x: positive below
    the returned level, negative above it, provided l1 + 2q > 0.
    """
    q, p, _ = eval_qpr(sol, t)
    obj = sol.objective
    slope = obj.l1.value(t) + 2.0 * q
    if slope <= 0.0:
        raise ValueError(
            f"mean-reversion level undefined at t={t:.6g}: l1 + 2q = {slope:.6g} <= 0"
        )
    return (sol.model.c.value(t) - obj.l0.value(t) - p) / slope


def mr_benchmark_from_level(c: float, level: float) -> float:
    """Proportional payout rate that reverts the surplus around ``level``."""
    if not level > 0.0:
        raise ValueError("reversion level must be > 0")
    return c / level
