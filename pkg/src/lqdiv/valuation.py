"""Closed-form valuations: barrier strategy value, optimal barrier, affine PV.

For a diffusion surplus dX = c dt + sigma dW stopped at ruin, the expected
discounted dividends of a barrier strategy at level b are

    V_b(x) = (e^{rho x} - e^{nu x}) / (rho e^{rho b} - nu e^{nu b}),

where rho > 0 > nu are the roots of (sigma^2 / 2) z^2 + c z - delta_tilde = 0.
Every x shares the same denominator, so the value-maximising barrier is the
denominator's stationary point

    b* = ln(nu^2 / rho^2) / (rho - nu).

The affine PV of the quadratic-objective strategy, PV(t,x) = f(t) x + g(t),
comes from the integrated coefficients; the cost of smoothing is the extra
initial surplus that makes the smooth strategy's PV match the barrier PV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .riccati import PVCoefficients

__all__ = [
    "BarrierRoots",
    "barrier_roots",
    "barrier_value",
    "optimal_barrier",
    "pv_affine",
    "cost_of_smoothing",
]


@dataclass(frozen=True)
class BarrierRoots:
    """Roots of the discounted-drift quadratic; pos > 0 > neg."""

    pos: float
    neg: float
    c: float
    sigma: float
    delta_tilde: float


def barrier_roots(c: float, sigma: float, delta_tilde: float) -> BarrierRoots:
    """Solve (sigma^2/2) z^2 + c z - delta_tilde = 0 for both roots."""
    if not sigma > 0.0:
        raise ValueError("sigma must be > 0 (degenerate diffusion has no barrier value)")
    if not delta_tilde > 0.0:
        raise ValueError("delta_tilde must be > 0")
    s2 = sigma * sigma
    disc = math.sqrt(c * c + 2.0 * delta_tilde * s2)
    return BarrierRoots(
        pos=(-c + disc) / s2,
        neg=(-c - disc) / s2,
        c=c,
        sigma=sigma,
        delta_tilde=delta_tilde,
    )


def barrier_value(x: float, b: float, roots: BarrierRoots) -> float:
    """Expected discounted dividends until ruin under a barrier at b, from x."""
    if not 0.0 <= x <= b:
        raise ValueError(f"x={x} outside [0, b={b}]")
    r, s = roots.pos, roots.neg
    num = math.exp(r * x) - math.exp(s * x)
    den = r * math.exp(r * b) - s * math.exp(s * b)
    return num / den


def optimal_barrier(roots: BarrierRoots) -> float:
    """Barrier level maximising the barrier value for every initial surplus."""
    r, s = roots.pos, roots.neg
    return math.log((s * s) / (r * r)) / (r - s)


def pv_affine(pv: PVCoefficients, t: float, x: float) -> float:
    """PV(t, x) = f(t) x + g(t); linear interpolation between nodes."""
    T = pv.grid.horizon
    if not 0.0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    pos = t / pv.grid.h
    k = min(int(pos), pv.grid.n_steps - 1)
    w = pos - k
    f = pv.f[k] + w * (pv.f[k + 1] - pv.f[k])
    g = pv.g[k] + w * (pv.g[k + 1] - pv.g[k])
    return float(f * x + g)


def cost_of_smoothing(
    pv: PVCoefficients,
    roots: BarrierRoots,
    b_star: float,
    t: float,
    x: float,
) -> float:
    """Extra initial surplus equating the smooth strategy's PV to the barrier PV.

    Solves f(t) (x + xi) + g(t) = V_b(x), i.e.
    xi = (V_b(x) - g(t) - f(t) x) / f(t).  Undefined where f(t) is ~0 (near T).
    """
    pos = t / pv.grid.h
    k = min(int(pos), pv.grid.n_steps - 1)
    w = pos - k
    f = float(pv.f[k] + w * (pv.f[k + 1] - pv.f[k]))
    if abs(f) <= 1e-8:
        raise ValueError(f"cost of smoothing undefined at t={t:.6g}: f(t)={f:.3g} is ~0")
    vb = barrier_value(x, b_star, roots)
    return (vb - pv_affine(pv, t, x)) / f
