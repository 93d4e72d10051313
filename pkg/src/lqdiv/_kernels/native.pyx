# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of the numpy stepping kernel.

Implements exactly the arithmetic documented in ``pure.py`` (same operations
per path in the same order), so results are bit-identical across backends.
The per-path loop releases the GIL; chunks can run on a thread pool.
"""

from libc.math cimport sqrt

import numpy as np


def step_block(
    long k0,
    long nsteps,
    double h,
    double sqrt_h,
    double[::1] rate_a0,
    double[::1] rate_a1,
    double[::1] lump_a0,
    double[::1] lump_a1,
    double[::1] drift_c,
    double[::1] extra0,
    double[::1] extra1,
    int const_vol,
    double[::1] volh,
    double[::1] var0,
    double[::1] var1,
    double[::1] var2,
    double[::1] disc_pv,
    double[::1] disc_obj,
    int want_obj,
    int absorbed_pen,
    double[::1] bench_a0,
    double[::1] bench_a1,
    double[::1] run_w,
    double[::1] run_target,
    double[::1] lump_w,
    double[::1] lam_pen,
    double barrier_level,
    int stop_at_ruin,
    int jump_mode,
    double[:, ::1] normals,
    signed char[:, ::1] counts,
    double[:, ::1] y1,
    double[:, ::1] y2,
    double[::1] x,
    double[::1] pv,
    double[::1] obj_acc,
    double[::1] injected,
    long long[::1] n_inj,
    long long[::1] ruin_step,
):
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t i, j
    cdef long k, node
    cdef long long ruin, ninj
    cdef double xi, pvi, obji, inji
    cdef double rate, pay, dev, dx0, pen, il, sd, lmp, over
    cdef int cnt

    with nogil:
        for i in range(m):
            ruin = ruin_step[i]
            if stop_at_ruin and ruin >= 0:
                continue
            xi = x[i]
            pvi = pv[i]
            obji = obj_acc[i]
            inji = injected[i]
            ninj = n_inj[i]

            for j in range(nsteps):
                k = k0 + j
                node = k + 1

                rate = rate_a0[k] + rate_a1[k] * xi
                pay = rate * h
                pvi = pvi + disc_pv[k] * pay
                if pay < 0.0:
                    inji = inji + (-pay)
                    ninj = ninj + 1

                if want_obj:
                    dev = rate - (bench_a0[k] + bench_a1[k] * xi)
                    dx0 = xi - run_target[k]
                    pen = disc_obj[k] * h * (0.5 * dev * dev + 0.5 * run_w[k] * dx0 * dx0)
                    if absorbed_pen:
                        il = lump_a0[k] + lump_a1[k] * xi
                        pen = pen + disc_obj[k] * h * 0.5 * lump_w[k] * lam_pen[k] * il * il
                    obji = obji + pen

                if const_vol:
                    sd = volh[k]
                else:
                    sd = sqrt(var0[k] + (var1[k] + var2[k] * xi) * xi) * sqrt_h
                xi = xi + (drift_c[k] - rate + extra0[k] + extra1[k] * xi) * h + sd * normals[i, j]

                if jump_mode:
                    cnt = counts[i, j]
                    if cnt > 0:
                        lmp = lump_a0[node] + lump_a1[node] * xi
                        pvi = pvi + disc_pv[node] * lmp
                        if lmp < 0.0:
                            inji = inji + (-lmp)
                            ninj = ninj + 1
                        if want_obj:
                            obji = obji + disc_obj[node] * 0.5 * lump_w[node] * lmp * lmp
                        xi = xi + (y1[i, j] - lmp)
                        if cnt > 1:
                            lmp = lump_a0[node] + lump_a1[node] * xi
                            pvi = pvi + disc_pv[node] * lmp
                            if lmp < 0.0:
                                inji = inji + (-lmp)
                                ninj = ninj + 1
                            if want_obj:
                                obji = obji + disc_obj[node] * 0.5 * lump_w[node] * lmp * lmp
                            xi = xi + (y2[i, j] - lmp)

                if xi > barrier_level:
                    over = xi - barrier_level
                    pvi = pvi + disc_pv[node] * over
                    xi = barrier_level

                if ruin < 0 and xi <= 0.0:
                    ruin = node
                    if stop_at_ruin:
                        break

            x[i] = xi
            pv[i] = pvi
            obj_acc[i] = obji
            injected[i] = inji
            n_inj[i] = ninj
            ruin_step[i] = ruin
