"""Compare the compiled stepping kernel against the numpy fallback.

Runs the same workloads on both backends in subprocesses (the backend is
fixed at import time), times them, and verifies the outputs agree bitwise.

    python benchmarks/bench_kernels.py [--paths 2000] [--horizon 50]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
import numpy as np
import lqdiv as lq
import lqdiv._kernels as kernels

paths, horizon = int(sys.argv[1]), float(sys.argv[2])

model = lq.ModelParams(c=1.0, sigma=0.5, intensity=0.0, jumps=lq.JumpLaw.none(),
                       delta=0.05, delta_tilde=0.05, horizon=horizon)
jump_model = lq.ModelParams(c=1.0, sigma=0.5, intensity=1.0,
                            jumps=lq.JumpLaw.exponential(2.0, 1),
                            delta=0.05, delta_tilde=0.05, horizon=horizon)
obj = lq.LQObjective(l0=0.0, l1=1/1.884, x0=1.884, gamma=1.0)
grid = lq.TimeGrid.from_step(horizon, 1/400)
sol = lq.solve_riccati(model, obj, grid)
jump_sol = lq.solve_riccati(jump_model, obj, grid)
cfg = lq.SimConfig(n_paths=paths, step=1/400, seed=1234)

cases = {
    "lq_diffusion": lambda: lq.simulate(model, lq.LQAffine(sol), 0.63, cfg),
    "barrier": lambda: lq.simulate(model, lq.Barrier(1.2562829593917342), 0.63, cfg),
    "mean_reverting": lambda: lq.simulate(model, lq.MeanReverting(0.0, 1/1.884), 0.63, cfg),
    "lq_jumps": lambda: lq.simulate(jump_model, lq.LQAffine(jump_sol), 0.63, cfg),
}

out = {"backend": kernels.backend()}
for name, run in cases.items():
    t0 = time.perf_counter()
    res = run()
    elapsed = time.perf_counter() - t0
    digest = int(res.pv.view(np.uint64).sum() % (2**61))
    out[name] = {"seconds": elapsed, "digest": digest, "mean": res.mean}
print(json.dumps(out))
"""


def run_backend(backend: str, paths: int, horizon: float) -> dict:
    env = dict(os.environ, LQDIV_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", WORKLOAD, str(paths), str(horizon)],
        capture_output=True, text=True, env=env, check=True,
    )
    return json.loads(proc.stdout)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=2000)
    parser.add_argument("--horizon", type=float, default=50.0)
    args = parser.parse_args()

    native = run_backend("native", args.paths, args.horizon)
    pure = run_backend("python", args.paths, args.horizon)

    n_steps = round(args.horizon * 400)
    print(f"{args.paths} paths x {n_steps} steps (h = 1/400)\n")
    print(f"{'case':<16} {'native [s]':>11} {'numpy [s]':>11} {'speedup':>8}  identical")
    mismatch = False
    for case in ("lq_diffusion", "barrier", "mean_reverting", "lq_jumps"):
        a, b = native[case], pure[case]
        same = a["digest"] == b["digest"]
        mismatch |= not same
        print(f"{case:<16} {a['seconds']:>11.2f} {b['seconds']:>11.2f} "
              f"{b['seconds'] / a['seconds']:>7.1f}x  {same}")
    if mismatch:
        print("\nERROR: backends disagree")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
