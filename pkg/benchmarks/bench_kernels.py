"""Timing comparison of the kernel backends.

Runs the forward model and the adjoint gradient on a synthetic twin problem
with every available backend and prints wall times plus the cross-backend
gradient agreement.  Usage:

    python3 benchmarks/bench_kernels.py [--shape 24 24] [--nt 600] [--repeat 3]
"""

import argparse
import time

import numpy as np

from hydrograd import adjoint, simulate
from hydrograd.hydro import available_backends
from hydrograd.params import ParameterFields
from hydrograd.twin import generate_twin


def time_call(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shape", type=int, nargs=2, default=(24, 24))
    ap.add_argument("--nt", type=int, default=600)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    twin = generate_twin(
        seed=args.seed, shape=tuple(args.shape), nt=args.nt,
        truth_kind="linear", n_desc=3,
    )
    mesh, forc = twin.mesh, twin.forcings
    rng = np.random.default_rng(args.seed)
    span = twin.bounds.upper - twin.bounds.lower
    values = twin.bounds.lower + rng.uniform(0.15, 0.85, (mesh.n, 4)) * span
    theta = ParameterFields(values=values)
    cells = twin.gauges.cells
    obs = twin.observations
    weights = np.full(len(cells), 1.0 / len(cells))

    print(f"mesh {args.shape[0]}x{args.shape[1]} ({mesh.n} cells), "
          f"nt {args.nt}, {len(cells)} gauges, best of {args.repeat}")
    grads = {}
    for name in available_backends():
        t_fwd, _ = time_call(
            lambda: simulate(mesh, theta, forc, record_cells=cells,
                             backend=name),
            args.repeat,
        )
        t_adj, res = time_call(
            lambda: adjoint.grad_theta(mesh, theta, forc, cells, obs, weights,
                                       window=(twin.warmup, forc.nt),
                                       backend=name),
            args.repeat,
        )
        grads[name] = res[1]
        print(f"  {name:<8} forward {t_fwd * 1e3:8.1f} ms   "
              f"forward+adjoint {t_adj * 1e3:8.1f} ms")
    if len(grads) == 2:
        ga, gb = grads["python"], grads["cython"]
        denom = np.maximum(np.abs(ga), 1e-30)
        rel = np.max(np.abs(ga - gb) / denom)
        print(f"  max relative gradient difference python vs cython: {rel:.3e}")


if __name__ == "__main__":
    main()
