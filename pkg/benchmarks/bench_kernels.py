"""Numba vs numpy timings for the pointwise kernels and one Jacobian assembly.

    python3 benchmarks/bench_kernels.py [--sizes 1000 100000 1000000] [--repeat 5]

The kernel timings call both code paths in this process.  The assembly
timing runs in two subprocesses, one per ``DGTWOPHASE_BACKEND`` value,
because the backend is fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dgtwophase.kernels import brooks_corey_kernel, scaling_factors

ASSEMBLY_SNIPPET = """
import time
import numpy as np
from dgtwophase.config import load_config
from dgtwophase.simulation import Simulation
from dgtwophase.dgspace import DgSpace, P, S, l2_project_analytic
from dgtwophase.forms import Discretization
from dgtwophase.mesh import build_macro
from dgtwophase.limiter import apply_scaling_limiter

sim = Simulation(load_config())
mesh = build_macro(40, 24, sim.setup.extent, 3)
sp = DgSpace(mesh, 3)
u = l2_project_analytic(sp, sim.model.initial_pressure, field=P)
l2_project_analytic(sp, lambda x, y: 0.3 * np.exp(-40 * ((x - 0.45) ** 2 + (y - 0.5) ** 2)),
                    field=S, out=u)
disc = Discretization(sp, sim.model)
disc.assemble(u.coeffs, sbar_is_u=True)          # warm-up and jit
apply_scaling_limiter(u)
best_a = best_l = float("inf")
for _ in range({repeat}):
    t0 = time.perf_counter(); disc.assemble(u.coeffs, sbar_is_u=True)
    best_a = min(best_a, time.perf_counter() - t0)
    t0 = time.perf_counter(); apply_scaling_limiter(u)
    best_l = min(best_l, time.perf_counter() - t0)
print(f"{{sp.n_dofs}} {{best_a:.4f}} {{best_l:.5f}}")
"""


def best_of(fn, repeat):
    fn()  # warm-up (jit compilation on the first call)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        s = rng.uniform(0.0, 0.85, n)
        args = (s, 0.12, 0.0, 2.7, 755.0, 9e-4, 1e-3)
        t_nb = best_of(lambda: brooks_corey_kernel(*args, use_numba=True), repeat)
        t_np = best_of(lambda: brooks_corey_kernel(*args, use_numba=False), repeat)
        rows.append(("brooks_corey", n, t_nb, t_np))
        n_el = max(n // 64, 1)
        mean = rng.uniform(0.0, 1.0, n_el)
        vals = mean[:, None] + rng.normal(scale=0.3, size=(n_el, 64))
        t_nb = best_of(lambda: scaling_factors(mean, vals, 0.0, 1.0, use_numba=True), repeat)
        t_np = best_of(lambda: scaling_factors(mean, vals, 0.0, 1.0, use_numba=False), repeat)
        rows.append(("scaling_factors", n_el * 64, t_nb, t_np))
    return rows


def assembly_times(repeat):
    out = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, DGTWOPHASE_BACKEND=backend)
        res = subprocess.run([sys.executable, "-c", ASSEMBLY_SNIPPET.format(repeat=repeat)],
                             env=env, capture_output=True, text=True, check=True)
        dofs, t_asm, t_lim = res.stdout.split()
        out[backend] = (int(dofs), float(t_asm), float(t_lim))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1_000, 100_000, 1_000_000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-assembly", action="store_true")
    args = ap.parse_args(argv)

    print(f"{'kernel':16s} {'points':>9s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for name, n, t_nb, t_np in kernel_table(args.sizes, args.repeat):
        print(f"{name:16s} {n:9d} {1e3 * t_nb:11.3f} {1e3 * t_np:11.3f} {t_np / t_nb:8.2f}")
    if args.skip_assembly:
        return
    print()
    print(f"{'backend':8s} {'dofs':>7s} {'assembly [s]':>13s} {'limiter [ms]':>13s}")
    for backend, (dofs, t_asm, t_lim) in assembly_times(args.repeat).items():
        print(f"{backend:8s} {dofs:7d} {t_asm:13.4f} {1e3 * t_lim:13.3f}")


if __name__ == "__main__":
    main()
