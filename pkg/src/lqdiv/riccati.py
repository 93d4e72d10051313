"""Backward ODE systems for the quadratic value function and affine valuations.

The value function of the dividend-control problem is quadratic in the
surplus, V(t, x) = q(t) x^2 + p(t) x + r(t).  Substituting this ansatz into
the dynamic programming equation together with the minimising controls

    rate*(t, x) = l0 + l1 x + 2 q x + p,
    lump*(t, x) = (2 q x + 2 q p1 + p) / (gamma_i + 2 q),

and matching coefficients of x^2, x, 1 yields the system integrated here
(backwards from the terminal conditions, classical fixed-step RK4):

    q' = delta q + 2 q^2 + 2 q l1 - gamma/2 + 2 lam q^2 / A
    p' = delta p + (2 q + l1) p - 2 q (c - l0) + gamma x0
         - 2 lam q p1 + 2 lam q (p + 2 q p1) / A
    r' = delta r + p^2/2 - p (c - l0) - gamma x0^2 / 2 - q sigma^2
         + lam (p + 2 q p1)^2 / (2 A) - lam p p1 - lam q p2

with A = gamma_i + 2 q.  The jump terms require the second-order condition
A > 0 wherever lam > 0; a violation in the interior aborts the solve.

The same module integrates the affine coefficients of the expected present
value of dividends paid by the optimal strategy on a diffusion-only model,
PV(t, x) = f(t) x + g(t):

    f' = f (delta_tilde + l1 + 2 q) - (l1 + 2 q),        f(T) = 0
    g' = g delta_tilde + f (l0 + p - c) - (l0 + p),      g(T) = 0

f and g are integrated jointly with q, p, r so their accuracy is not capped
by interpolation of the Riccati solution at the RK4 stage points.

A lump policy can also be frozen to a given affine function i(t, x) =
alpha(t) + beta(t) x instead of being optimised.  Re-solving with the frozen
policy taken from a previous solve reproduces that solve: this is the
executable check that absorbing jumps into the drift and volatility of a
controlled diffusion leaves the value function and controls unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .model import JumpLaw, LQObjective, ModelParams, TimeFunction, validate

__all__ = [
    "TimeGrid",
    "RiccatiSolution",
    "PVCoefficients",
    "SolverError",
    "SecondOrderConditionError",
    "BlowupError",
    "terminal_conditions",
    "solve_riccati",
    "eval_qpr",
    "solve_pv_coefficients",
    "equivalence_deviation",
    "equivalent_diffusion",
]


class SolverError(RuntimeError):
    """Base class for ODE solver aborts; carries the offending time."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t


class SecondOrderConditionError(SolverError):
    def __init__(self, t: float, value: float):
        super().__init__(
            f"second-order condition violated: gamma_i + 2q = {value:.6g} <= 0", t
        )
        self.value = value


class BlowupError(SolverError):
    def __init__(self, t: float):
        super().__init__("non-finite state encountered", t)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with N steps of size h, N*h = T."""

    horizon: float
    n_steps: int

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError("grid needs at least one step")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")

    @classmethod
    def from_step(cls, horizon: float, step: float) -> "TimeGrid":
        n = round(horizon / step)
        if n < 1 or abs(n * step - horizon) > 1e-12 * max(1.0, horizon):
            raise ValueError(f"step {step} does not divide horizon {horizon}")
        return cls(horizon, n)

    @property
    def h(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


@dataclass(frozen=True)
class RiccatiSolution:
    """Node values of the value-function coefficients q, p, r on a grid."""

    grid: TimeGrid
    q: np.ndarray
    p: np.ndarray
    r: np.ndarray
    model: ModelParams
    objective: LQObjective
    model_hash: str
    objective_hash: str

    def terminal_triple(self) -> tuple[float, float, float]:
        return float(self.q[-1]), float(self.p[-1]), float(self.r[-1])

    def value(self, t: float, x: float) -> float:
        q, p, r = eval_qpr(self, t)
        return (q * x + p) * x + r


@dataclass(frozen=True)
class PVCoefficients:
    """Affine coefficients of the dividend present value: PV = f(t) x + g(t)."""

    grid: TimeGrid
    f: np.ndarray
    g: np.ndarray
    model_hash: str
    objective_hash: str


def terminal_conditions(obj: LQObjective, horizon: float) -> tuple[float, float, float]:
    """Terminal (q, p, r) implied by the terminal penalty, by tau.

    The terminal value is kappa (x - x_T)^tau + delta_gamma_T (x - x0(T))^2;
    expanding in x gives the assignments below.  They are assigned exactly,
    never integrated.
    """
    x0_T = obj.x0.value(horizon)
    q_T = obj.delta_gamma_T
    p_T = -2.0 * obj.delta_gamma_T * x0_T
    r_T = obj.delta_gamma_T * x0_T * x0_T
    if obj.tau == 1:
        p_T += obj.kappa
        r_T -= obj.kappa * obj.x_T
    elif obj.tau == 2:
        q_T += obj.kappa
        p_T += -2.0 * obj.kappa * obj.x_T
        r_T += obj.kappa * obj.x_T * obj.x_T
    # + 0.0 turns a -0.0 from vanishing weights into +0.0
    return q_T + 0.0, p_T + 0.0, r_T + 0.0


LumpPolicy = tuple[Callable[[float], float], Callable[[float], float]]


def _make_qpr_rhs(
    model: ModelParams,
    obj: LQObjective,
    lump_policy: LumpPolicy | None,
) -> Callable[[float, float, float, float], tuple[float, float, float]]:
    """Build the coefficient-matched right-hand side (q', p', r')(t, q, p, r).

    With ``lump_policy=None`` the lump control is the optimiser (jump terms
    carry 1/A factors); with a policy (alpha, beta) the lump is frozen to
    alpha(t) + beta(t) x and the jump terms are division-free.
    """
    p1 = model.jumps.p1
    p2 = model.jumps.p2
    sig2 = model.sigma * model.sigma

    c_f, lam_f = model.c.value, model.intensity.value
    l0_f, l1_f = obj.l0.value, obj.l1.value
    x0_f, gam_f, gami_f = obj.x0.value, obj.gamma.value, obj.gamma_i.value
    delta = model.delta

    def rhs(t: float, q: float, p: float, r: float) -> tuple[float, float, float]:
        c = c_f(t)
        lam = lam_f(t)
        l0 = l0_f(t)
        l1 = l1_f(t)
        x0 = x0_f(t)
        gam = gam_f(t)
        gami = gami_f(t)

        jq = jp = jr = 0.0
        if lam != 0.0:
            a = gami + 2.0 * q
            if lump_policy is None:
                m = p + 2.0 * q * p1
                # Zero numerators are taken to their (zero) limits so that
                # all-zero terminal states integrate cleanly; a genuine
                # division by a <= 0 is a second-order-condition failure.
                if q != 0.0 or m != 0.0:
                    if a <= 0.0:
                        raise SecondOrderConditionError(t, a)
                    jq = 2.0 * lam * q * q / a
                    jp = 2.0 * lam * q * m / a
                    jr = lam * m * m / (2.0 * a)
                jp -= 2.0 * lam * q * p1
                jr -= lam * (p * p1 + q * p2)
            else:
                alpha = lump_policy[0](t)
                beta = lump_policy[1](t)
                jq = lam * (2.0 * q * beta - 0.5 * beta * beta * a)
                jp = lam * (
                    -2.0 * q * (p1 - alpha)
                    + p * beta
                    - gami * alpha * beta
                    - 2.0 * q * beta * (alpha - p1)
                )
                jr = -lam * (
                    q * (p2 + alpha * alpha - 2.0 * p1 * alpha)
                    + p * (p1 - alpha)
                    + 0.5 * gami * alpha * alpha
                )

        qd = delta * q + 2.0 * q * q + 2.0 * q * l1 - 0.5 * gam + jq
        pd = delta * p + (2.0 * q + l1) * p - 2.0 * q * (c - l0) + gam * x0 + jp
        rd = (
            delta * r
            + 0.5 * p * p
            - p * (c - l0)
            - 0.5 * gam * x0 * x0
            - q * sig2
            + jr
        )
        return qd, pd, rd

    return rhs


def _node_checks(model: ModelParams, obj: LQObjective, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    times = grid.times
    lam_nodes = model.intensity.values(times)
    gami_nodes = obj.gamma_i.values(times)
    return lam_nodes, gami_nodes


def solve_riccati(
    model: ModelParams,
    obj: LQObjective,
    grid: TimeGrid,
    lump_policy: LumpPolicy | None = None,
) -> RiccatiSolution:
    """Integrate the value-function coefficients backward from T with RK4.

    Terminal conditions are assigned exactly (see :func:`terminal_conditions`).
    Aborts with :class:`SecondOrderConditionError` if gamma_i + 2q <= 0 is met
    at an interior node where lam > 0, and with :class:`BlowupError` on a
    non-finite state.
    """
    violations = validate(model, obj)
    if violations:
        raise ValueError("invalid model/objective: " + "; ".join(violations))
    if abs(grid.horizon - model.horizon) > 1e-12 * max(1.0, model.horizon):
        raise ValueError("grid horizon does not match the model horizon")

    rhs = _make_qpr_rhs(model, obj, lump_policy)
    n = grid.n_steps
    h = grid.h
    times = grid.times
    lam_nodes, gami_nodes = _node_checks(model, obj, grid)

    q_arr = np.empty(n + 1)
    p_arr = np.empty(n + 1)
    r_arr = np.empty(n + 1)
    q, p, r = terminal_conditions(obj, model.horizon)
    q_arr[n], p_arr[n], r_arr[n] = q, p, r

    for k in range(n - 1, -1, -1):
        t1 = times[k + 1]
        t0 = times[k]
        tm = t1 - 0.5 * h
        k1 = rhs(t1, q, p, r)
        k2 = rhs(tm, q - 0.5 * h * k1[0], p - 0.5 * h * k1[1], r - 0.5 * h * k1[2])
        k3 = rhs(tm, q - 0.5 * h * k2[0], p - 0.5 * h * k2[1], r - 0.5 * h * k2[2])
        k4 = rhs(t0, q - h * k3[0], p - h * k3[1], r - h * k3[2])
        q -= h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        p -= h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        r -= h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        if not (math.isfinite(q) and math.isfinite(p) and math.isfinite(r)):
            raise BlowupError(t0)
        if lam_nodes[k] > 0.0 and gami_nodes[k] + 2.0 * q <= 0.0:
            raise SecondOrderConditionError(t0, gami_nodes[k] + 2.0 * q)
        q_arr[k], p_arr[k], r_arr[k] = q, p, r

    return RiccatiSolution(
        grid=grid,
        q=q_arr,
        p=p_arr,
        r=r_arr,
        model=model,
        objective=obj,
        model_hash=model.content_hash(),
        objective_hash=obj.content_hash(),
    )


def eval_qpr(sol: RiccatiSolution, t: float) -> tuple[float, float, float]:
    """Linear interpolation of (q, p, r) at t in [0, T]; exact at grid nodes."""
    T = sol.grid.horizon
    if not 0.0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    pos = t / sol.grid.h
    k = min(int(pos), sol.grid.n_steps - 1)
    w = pos - k
    if w == 0.0:
        return float(sol.q[k]), float(sol.p[k]), float(sol.r[k])
    return (
        float(sol.q[k] + w * (sol.q[k + 1] - sol.q[k])),
        float(sol.p[k] + w * (sol.p[k + 1] - sol.p[k])),
        float(sol.r[k] + w * (sol.r[k + 1] - sol.r[k])),
    )


def solve_pv_coefficients(
    model: ModelParams,
    sol: RiccatiSolution,
    grid: TimeGrid,
) -> PVCoefficients:
    """Integrate PV(t,x) = f(t) x + g(t) backward from f(T) = g(T) = 0.

    Requires a diffusion-only model (reduce a jump model first).  q and p are
    re-integrated jointly from the solution's terminal conditions so the RK4
    stages see exact values; the node values reproduce ``sol`` bit for bit.
    """
    if model.has_jumps:
        raise ValueError("PV coefficients are defined for diffusion-only models; "
                         "absorb jumps into an equivalent diffusion first")
    if grid != sol.grid:
        raise ValueError("grid mismatch between the PV solve and the Riccati solution")

    obj = sol.objective
    rhs = _make_qpr_rhs(model, obj, None)
    l0_f, l1_f = obj.l0.value, obj.l1.value
    c_f = model.c.value
    dtilde = model.delta_tilde

    def rhs5(t: float, y: tuple[float, float, float, float, float]):
        q, p, r, f, g = y
        qd, pd, rd = rhs(t, q, p, r)
        l0 = l0_f(t)
        l1 = l1_f(t)
        slope = l1 + 2.0 * q
        fd = f * (dtilde + slope) - slope
        gd = g * dtilde + f * (l0 + p - c_f(t)) - (l0 + p)
        return qd, pd, rd, fd, gd

    n = grid.n_steps
    h = grid.h
    times = grid.times
    q, p, r = terminal_conditions(obj, model.horizon)
    y = (q, p, r, 0.0, 0.0)

    f_arr = np.empty(n + 1)
    g_arr = np.empty(n + 1)
    f_arr[n] = 0.0
    g_arr[n] = 0.0

    for k in range(n - 1, -1, -1):
        t1 = times[k + 1]
        t0 = times[k]
        tm = t1 - 0.5 * h
        k1 = rhs5(t1, y)
        k2 = rhs5(tm, tuple(y[i] - 0.5 * h * k1[i] for i in range(5)))
        k3 = rhs5(tm, tuple(y[i] - 0.5 * h * k2[i] for i in range(5)))
        k4 = rhs5(t0, tuple(y[i] - h * k3[i] for i in range(5)))
        y = tuple(
            y[i] - h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(5)
        )
        if not all(math.isfinite(v) for v in y):
            raise BlowupError(t0)
        f_arr[k], g_arr[k] = y[3], y[4]

    return PVCoefficients(
        grid=grid,
        f=f_arr,
        g=g_arr,
        model_hash=sol.model_hash,
        objective_hash=sol.objective_hash,
    )


def equivalence_deviation(
    model: ModelParams,
    obj: LQObjective,
    grid: TimeGrid,
) -> tuple[RiccatiSolution, RiccatiSolution, tuple[float, float, float]]:
    """Deviation between the jump solve and its equivalent-diffusion solve.

    The jump model is solved once at half the grid step; the optimal lump
    policy i(t, x) = alpha(t) + beta(t) x extracted from that solve is frozen
    and the controlled-diffusion system (jumps absorbed into drift, volatility
    and a continuous lump penalty) is re-solved on ``grid``.  If the absorbed
    formulation is exactly equivalent, the two solves agree to integration
    accuracy; the returned triple is the max absolute deviation in (q, p, r)
    over the nodes of ``grid``.
    """
    fine = TimeGrid(grid.horizon, 2 * grid.n_steps)
    sol_fine = solve_riccati(model, obj, fine)

    p1 = model.jumps.p1
    a = obj.gamma_i.values(fine.times) + 2.0 * sol_fine.q
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = 2.0 * sol_fine.q / a
        alpha = (2.0 * sol_fine.q * p1 + sol_fine.p) / a
    # The terminal node may be 0/0 when all terminal weights vanish; any
    # finite value works there because every jump term carries a factor of
    # the (zero) terminal state.
    for arr in (alpha, beta):
        if not math.isfinite(arr[-1]):
            arr[-1] = arr[-2]

    h_fine = fine.h

    def lookup(arr: np.ndarray):
        def f(t: float) -> float:
            return float(arr[int(round(t / h_fine))])

        return f

    sol_frozen = solve_riccati(model, obj, grid, lump_policy=(lookup(alpha), lookup(beta)))

    ref_q = sol_fine.q[::2]
    ref_p = sol_fine.p[::2]
    ref_r = sol_fine.r[::2]
    dev = (
        float(np.max(np.abs(sol_frozen.q - ref_q))),
        float(np.max(np.abs(sol_frozen.p - ref_p))),
        float(np.max(np.abs(sol_frozen.r - ref_r))),
    )
    return sol_fine, sol_frozen, dev


def equivalent_diffusion(model: ModelParams, lump: float | TimeFunction = 0.0) -> ModelParams:
    """Absorb compound-Poisson jumps into drift and volatility.

    Against a fixed lump payment i per jump, the jump model behaves (for this
    quadratic objective) like a diffusion whose drift gains lam (p1 - i) and
    whose squared volatility gains lam (p2 + i^2 - 2 p1 i).  A jump-free model
    is returned unchanged.  The returned volatility is a single constant, so
    lam and i must be constant in time when jumps are present.
    """
    if not model.has_jumps:
        return model

    lump_tf = TimeFunction.coerce(lump)
    if not (model.intensity.is_constant and lump_tf.is_constant):
        raise ValueError("jump absorption with a scalar volatility needs "
                         "constant intensity and constant lump")
    lam = model.intensity.value(0.0)
    i = lump_tf.value(0.0)
    p1, p2 = model.jumps.p1, model.jumps.p2

    drift_gain = lam * (p1 - i)
    var_gain = lam * (p2 + i * i - 2.0 * p1 * i)
    sigma_hat = math.sqrt(model.sigma * model.sigma + var_gain)

    return ModelParams(
        c=model.c.shifted(drift_gain),
        sigma=sigma_hat,
        intensity=TimeFunction.constant(0.0),
        jumps=JumpLaw.none(),
        delta=model.delta,
        delta_tilde=model.delta_tilde,
        horizon=model.horizon,
    )
