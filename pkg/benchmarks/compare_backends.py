"""Benchmark the numpy kernels against their numba twins.

Runs each hot kernel on a representative workload and prints a table of
best-of-three timings.  Usage:

    python3 benchmarks/compare_backends.py [--paths 20000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from fbsdelab.grids import SpatialGrid, TimeGrid
from fbsdelab.kernels import numpy_impl
from fbsdelab.problem import ProblemSpec
from fbsdelab.rng import RandomSource

try:
    from fbsdelab.kernels import numba_impl
except ImportError:
    numba_impl = None


def best_of(repeat, fn, *args):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    spec = ProblemSpec.from_text(
        d=1, k=1, t0=0.0, T=0.5, x0=[1.0], epsilons=[0.05],
        f="y1", g="-0.5*y1", sigma="1 + 0.1*tanh(x1)", h="0.5*x1",
    )
    progs = spec.scalar_programs()
    tg = TimeGrid(0.0, 0.5, 1000)
    xg = SpatialGrid(-2.0, 4.0, 1200)
    terminal = spec.terminal(xg.nodes[:, None])[:, 0]
    eps = 0.05

    u, du, status, *_ = numpy_impl.pde_sweep(tg.nodes, xg.nodes, eps, terminal, progs.f, progs.g, progs.sigma)
    assert status == 0
    increments = RandomSource(1).brownian_block(0, args.paths, tg, d=1)[:, :, 0]
    lanes = xg.nodes.copy()
    lane_y = 0.5 * lanes
    phi = np.random.default_rng(0).normal(size=(200, tg.n_steps))

    workloads = [
        ("pde_sweep (1000x1200)", "pde_sweep",
         (tg.nodes, xg.nodes, eps, terminal, progs.f, progs.g, progs.sigma)),
        ("pde_sweep_linearized", "pde_sweep_linearized",
         (tg.nodes, xg.nodes, eps, terminal, np.ascontiguousarray(u), np.ascontiguousarray(du),
          progs.f, progs.g, progs.sigma)),
        (f"em_forward ({args.paths} paths x 1000 steps)", "em_forward",
         (1.0, tg.nodes, eps, u, xg.x_min, xg.dx, progs.f, progs.sigma, increments)),
        (f"fill_yz ({args.paths} paths)", "fill_yz", None),  # placeholder, filled below
        ("rk4_terminal (1201 lanes x 1000 steps)", "rk4_terminal",
         (0, tg.nodes, lanes, lane_y, progs.f, progs.g)),
        ("ctrl_forward (200 lanes x 1000 steps)", "ctrl_forward",
         (1.0, tg.nodes, u, xg.x_min, xg.dx, progs.f, progs.sigma, phi)),
    ]

    X_paths, _ = numpy_impl.em_forward(1.0, tg.nodes, eps, u, xg.x_min, xg.dx, progs.f, progs.sigma, increments)
    workloads[3] = (
        f"fill_yz ({args.paths} paths)", "fill_yz",
        (X_paths, tg.nodes, eps, u, du, xg.x_min, xg.dx, progs.sigma),
    )

    if numba_impl is not None:
        print("warming numba kernels (first-call compilation is cached) ...")
        for _label, name, call_args in workloads:
            getattr(numba_impl, name)(*call_args)

    header = f"{'kernel':<42} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, name, call_args in workloads:
        t_np, _ = best_of(args.repeat, getattr(numpy_impl, name), *call_args)
        if numba_impl is None:
            print(f"{label:<42} {t_np:>10.4f} {'n/a':>10} {'n/a':>8}")
            continue
        t_nb, _ = best_of(args.repeat, getattr(numba_impl, name), *call_args)
        print(f"{label:<42} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x")
    if numba_impl is None:
        print("numba unavailable: install the 'accel' extra to compare backends")


if __name__ == "__main__":
    main()
