"""Backend equivalence: the compiled kernel and the numpy kernel must agree bitwise."""

from __future__ import annotations

import os
import subprocess
import sys

import pytest

SCRIPT = r"""
import numpy as np
import lqdiv as lq
import lqdiv._kernels as kernels

model = lq.ModelParams(c=1.0, sigma=0.5, intensity=0.0, jumps=lq.JumpLaw.none(),
                       delta=0.05, delta_tilde=0.05, horizon=20.0)
obj = lq.LQObjective(l0=0.0, l1=1/1.884, x0=1.884, gamma=1.0)
grid = lq.TimeGrid.from_step(20.0, 1/400)
sol = lq.solve_riccati(model, obj, grid)
cfg = lq.SimConfig(n_paths=200, step=1/400, seed=99, workers=2)

jump_model = lq.ModelParams(c=1.0, sigma=0.5, intensity=1.0,
                            jumps=lq.JumpLaw.exponential(2.0, 1),
                            delta=0.05, delta_tilde=0.05, horizon=20.0)
jump_sol = lq.solve_riccati(jump_model, obj, grid)

runs = [
    lq.simulate(model, lq.LQAffine(sol), 0.63, cfg),
    lq.simulate(model, lq.Barrier(1.2562829593917342), 0.63, cfg),
    lq.simulate(model, lq.MeanReverting(0.0, 1/1.884), 0.63, cfg),
    lq.simulate(jump_model, lq.LQAffine(jump_sol), 0.63, cfg),
    lq.simulate(jump_model, lq.LQAffine(jump_sol), 0.63, cfg, absorb_jumps=True),
]
print(kernels.backend())
for r in runs:
    bits = r.pv.view(np.uint64)
    print(int(bits.sum() % (2**61)), r.ruin_count,
          sum(rec.n_injections for rec in r.records), repr(float(r.pv[13])))
m, se = lq.estimate_lq_objective(jump_model, obj, lq.LQAffine(jump_sol), 0.63, cfg)
print(repr(m), repr(se))
"""


def _run(backend: str) -> list[str]:
    env = dict(os.environ, LQDIV_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", SCRIPT], capture_output=True, text=True, env=env
    )
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.strip().splitlines()
    assert lines[0] == ("native" if backend == "native" else "python")
    return lines[1:]


def test_backends_bitwise_identical():
    pytest.importorskip("lqdiv._kernels.native", reason="compiled kernel not built")
    assert _run("native") == _run("python")


def test_backend_reports_name():
    import lqdiv._kernels as kernels

    assert kernels.backend() in ("native", "python")
