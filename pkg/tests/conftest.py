"""Shared fixtures: the base parameter set used throughout the numerical study."""

from __future__ import annotations

import numpy as np
import pytest

import lqdiv as lq

# base configuration: unit drift, sigma = 0.5, both discount rates 5%,
# dividend benchmark slope 1/1.884 toward the surplus target 1.884
L1 = 1.0 / 1.884
X0_TARGET = 1.884


@pytest.fixture(scope="session")
def base_model() -> lq.ModelParams:
    return lq.ModelParams(
        c=1.0,
        sigma=0.5,
        intensity=0.0,
        jumps=lq.JumpLaw.none(),
        delta=0.05,
        delta_tilde=0.05,
        horizon=200.0,
    )


@pytest.fixture(scope="session")
def base_objective() -> lq.LQObjective:
    return lq.LQObjective(l0=0.0, l1=L1, x0=X0_TARGET, gamma=1.0, gamma_i=0.0)


@pytest.fixture(scope="session")
def zero_objective() -> lq.LQObjective:
    return lq.LQObjective(l0=0.0, l1=L1, x0=X0_TARGET, gamma=0.0, gamma_i=0.0)


@pytest.fixture(scope="session")
def grid400() -> lq.TimeGrid:
    return lq.TimeGrid.from_step(200.0, 1.0 / 400.0)


@pytest.fixture(scope="session")
def base_solution(base_model, base_objective, grid400) -> lq.RiccatiSolution:
    return lq.solve_riccati(base_model, base_objective, grid400)


@pytest.fixture(scope="session")
def base_pv(base_model, base_solution, grid400) -> lq.PVCoefficients:
    return lq.solve_pv_coefficients(base_model, base_solution, grid400)


@pytest.fixture(scope="session")
def base_roots() -> lq.BarrierRoots:
    return lq.barrier_roots(1.0, 0.5, 0.05)


@pytest.fixture(scope="session")
def b_star(base_roots) -> float:
    return lq.optimal_barrier(base_roots)


@pytest.fixture(scope="session")
def jump_model() -> lq.ModelParams:
    return lq.ModelParams(
        c=1.0,
        sigma=0.5,
        intensity=1.0,
        jumps=lq.JumpLaw.exponential(2.0, 1),
        delta=0.05,
        delta_tilde=0.05,
        horizon=200.0,
    )


def make_constant_solution(
    grid: lq.TimeGrid,
    q: float,
    p: float,
    r: float,
    model: lq.ModelParams,
    objective: lq.LQObjective,
) -> lq.RiccatiSolution:
    """Hand-built solution object with constant coefficient arrays."""
    n1 = grid.n_steps + 1
    return lq.RiccatiSolution(
        grid=grid,
        q=np.full(n1, q),
        p=np.full(n1, p),
        r=np.full(n1, r),
        model=model,
        objective=objective,
        model_hash=model.content_hash(),
        objective_hash=objective.content_hash(),
    )
