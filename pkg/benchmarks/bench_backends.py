#!/usr/bin/env python3
"""Benchmark the numba kernel against the pure-numpy fallback.

Runs the bundled three-mode benchmark closed loop (20 s horizon, 1 ms grid,
residual recording on) under each feedback law with both backends, checks
that the trajectories agree, and reports wall times.

Usage:
    python benchmarks/bench_backends.py [--repeats N] [--horizon T]
"""

import argparse
import time

import numpy as np

import switchpred.plant as plant_mod
from switchpred import control, harness, switching
from switchpred._backend import get_kernels


def make_runner(spec, design, sig, T, dt):
    laws = {
        "u1": control.AveragePredictor(design.A_bar, design.B_bar, design.K_bar,
                                       dwell_known=True, tau_d=0.9),
        "u2": control.AveragingPredictors(design.K_list, dwell_known=True, tau_d=0.9),
        "exact": control.ExactOracle(K_list=design.K_list),
    }

    def run(backend, label):
        plant_mod.simulate_loop = get_kernels(backend).simulate_loop
        return plant_mod.simulate(spec, sig, laws[label], [1.0, -1.0], T=T,
                                  grid_dt=dt, record_residuals=True,
                                  residual_gains=design.K_list)

    return run, list(laws)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--horizon", type=float, default=20.0)
    args = parser.parse_args()

    spec = harness.three_mode_plant()
    dwell = harness.three_mode_dwell()
    design = harness.three_mode_design()
    dt = 1e-3
    sig = switching.generate(dwell, spec.p, args.horizon + spec.D + dwell.tau_bar_d,
                             dt, seed=1)
    run, labels = make_runner(spec, design, sig, args.horizon, dt)

    backends = []
    try:
        get_kernels("numba")
        backends.append("numba")
    except ImportError:
        print("numba unavailable; benchmarking the numpy fallback only")
    backends.append("numpy")

    print(f"closed loop: T={args.horizon}s, dt={dt}, residuals recorded, "
          f"best of {args.repeats}")
    print(f"{'law':>6s} " + " ".join(f"{b + ' [s]':>12s}" for b in backends)
          + ("   max |state gap|" if len(backends) == 2 else ""))
    for label in labels:
        times = {}
        trajs = {}
        for backend in backends:
            run(backend, label)  # warm-up (JIT compile, table build)
            best = np.inf
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                trajs[backend] = run(backend, label)
                best = min(best, time.perf_counter() - t0)
            times[backend] = best
        row = f"{label:>6s} " + " ".join(f"{times[b]:12.3f}" for b in backends)
        if len(backends) == 2:
            gap = np.abs(trajs["numba"].states - trajs["numpy"].states).max()
            scale = 1.0 + np.abs(trajs["numba"].states).max()
            row += f"   {gap:.3e}"
            assert gap <= 1e-9 * scale, "backends disagree beyond roundoff"
        print(row)
    if len(backends) == 2:
        print("backends agree to roundoff on all laws")


if __name__ == "__main__":
    main()
