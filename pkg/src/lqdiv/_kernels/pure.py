"""Numpy fallback of the path-stepping kernel.

This module defines the arithmetic contract both backends implement.  The
compiled twin (``native.pyx``) runs the same operations per path in the same
order, so for identical inputs the two backends produce bit-identical state;
``x + 0.0`` style no-ops on masked-out paths are avoided by construction
(masked updates write back the untouched value).

One call advances a chunk of paths through ``nsteps`` Euler steps:

* pay the strategy rate (left-endpoint discounting, rectangle rule),
* optionally accrue the quadratic-objective running penalties,
* diffuse: x += (c - rate + extra(x)) h + vol(x) sqrt(h) Z,
* apply 0, 1 or 2 compound-Poisson jumps (pre-sampled counts and sizes),
  each paying the strategy's lump before the size lands,
* pay barrier overflow above ``barrier_level`` (level +inf disables),
* record first ruin (x <= 0 at a node); optionally stop the path there.

All node-indexed arrays have length n_steps + 1; step k reads node k for
left-endpoint quantities and node k+1 for payments that happen at the end of
the step (lumps, overflow).
"""

from __future__ import annotations

import numpy as np


def step_block(
    k0: int,
    nsteps: int,
    h: float,
    sqrt_h: float,
    rate_a0: np.ndarray,
    rate_a1: np.ndarray,
    lump_a0: np.ndarray,
    lump_a1: np.ndarray,
    drift_c: np.ndarray,
    extra0: np.ndarray,
    extra1: np.ndarray,
    const_vol: int,
    volh: np.ndarray,
    var0: np.ndarray,
    var1: np.ndarray,
    var2: np.ndarray,
    disc_pv: np.ndarray,
    disc_obj: np.ndarray,
    want_obj: int,
    absorbed_pen: int,
    bench_a0: np.ndarray,
    bench_a1: np.ndarray,
    run_w: np.ndarray,
    run_target: np.ndarray,
    lump_w: np.ndarray,
    lam_pen: np.ndarray,
    barrier_level: float,
    stop_at_ruin: int,
    jump_mode: int,
    normals: np.ndarray,
    counts: np.ndarray,
    y1: np.ndarray,
    y2: np.ndarray,
    x: np.ndarray,
    pv: np.ndarray,
    obj_acc: np.ndarray,
    injected: np.ndarray,
    n_inj: np.ndarray,
    ruin_step: np.ndarray,
) -> None:
    for j in range(nsteps):
        k = k0 + j
        node = k + 1

        if stop_at_ruin:
            active = ruin_step < 0
            if not active.any():
                return
            all_active = bool(active.all())
        else:
            active = None
            all_active = True

        # continuous rate payment at the left endpoint
        rate = rate_a0[k] + rate_a1[k] * x
        pay = rate * h
        neg = pay < 0.0
        if all_active:
            pv += disc_pv[k] * pay
            injected[neg] += -pay[neg]
            n_inj += neg
        else:
            pv[active] += disc_pv[k] * pay[active]
            neg &= active
            injected[neg] += -pay[neg]
            n_inj += neg

        if want_obj:
            dev = rate - (bench_a0[k] + bench_a1[k] * x)
            dx0 = x - run_target[k]
            pen = disc_obj[k] * h * (0.5 * dev * dev + 0.5 * run_w[k] * dx0 * dx0)
            if absorbed_pen:
                il = lump_a0[k] + lump_a1[k] * x
                pen = pen + disc_obj[k] * h * 0.5 * lump_w[k] * lam_pen[k] * il * il
            if all_active:
                obj_acc += pen
            else:
                obj_acc[active] += pen[active]

        # Euler-Maruyama step
        if const_vol:
            sd = volh[k]
        else:
            sd = np.sqrt(var0[k] + (var1[k] + var2[k] * x) * x) * sqrt_h
        x_new = x + (drift_c[k] - rate + extra0[k] + extra1[k] * x) * h + sd * normals[:, j]
        if all_active:
            x[:] = x_new
        else:
            x[active] = x_new[active]

        if jump_mode:
            cnt = counts[:, j]
            hit = cnt > 0
            if not all_active:
                hit &= active
            if hit.any():
                _apply_jumps(
                    hit, cnt, y1[:, j], y2[:, j], node,
                    lump_a0, lump_a1, disc_pv, disc_obj, lump_w,
                    want_obj, x, pv, obj_acc, injected, n_inj,
                )

        # barrier overflow (disabled when barrier_level is +inf)
        over = x > barrier_level
        if not all_active:
            over &= active
        if over.any():
            pv[over] += disc_pv[node] * (x[over] - barrier_level)
            x[over] = barrier_level

        newly = (x <= 0.0) & (ruin_step < 0)
        if not all_active:
            newly &= active
        if newly.any():
            ruin_step[newly] = node


def _apply_jumps(
    hit, cnt, y1j, y2j, node,
    lump_a0, lump_a1, disc_pv, disc_obj, lump_w,
    want_obj, x, pv, obj_acc, injected, n_inj,
) -> None:
    lmp = lump_a0[node] + lump_a1[node] * x[hit]
    pv[hit] += disc_pv[node] * lmp
    negl = lmp < 0.0
    sub = np.flatnonzero(hit)[negl]
    injected[sub] += -lmp[negl]
    n_inj[sub] += 1
    if want_obj:
        obj_acc[hit] += disc_obj[node] * 0.5 * lump_w[node] * lmp * lmp
    x[hit] += y1j[hit] - lmp

    second = hit & (cnt > 1)
    if second.any():
        lmp2 = lump_a0[node] + lump_a1[node] * x[second]
        pv[second] += disc_pv[node] * lmp2
        negl2 = lmp2 < 0.0
        sub2 = np.flatnonzero(second)[negl2]
        injected[sub2] += -lmp2[negl2]
        n_inj[sub2] += 1
        if want_obj:
            obj_acc[second] += disc_obj[node] * 0.5 * lump_w[node] * lmp2 * lmp2
        x[second] += y2j[second] - lmp2
