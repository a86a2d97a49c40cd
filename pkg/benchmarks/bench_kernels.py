"""Compiled kernels vs the numpy fallback.

    python3 benchmarks/bench_kernels.py [--level 6] [--p 2] [--repeat 20]

Times the CSR mat-vec, the element reaction blocks and one full monodomain
step (stimulus parameters) with each backend, and checks that both agree.
"""
import argparse
import time

import numpy as np

from cardiodg import kernels
from cardiodg import _kernels_py
from cardiodg.assembly import DGSpace
from cardiodg.dynamics import Forcing, ModelParams, MonodomainSolver
from cardiodg.mesh import unit_square_mesh

try:
    from cardiodg import _kernels as _compiled
except ImportError:
    _compiled = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def with_backend(impl, fn):
    saved = kernels._impl
    kernels._impl = impl
    try:
        return fn()
    finally:
        kernels._impl = saved


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--level", type=int, default=6)
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--steps", type=int, default=5)
    args = ap.parse_args()

    backends = {"python": _kernels_py}
    if _compiled is not None:
        backends["compiled"] = _compiled
    else:
        print("compiled extension not built; timing the fallback only")

    params = ModelParams(C_m=1e-2, eps=40.0, dt=1e-3, T=0.4)
    space = DGSpace(unit_square_mesh(args.level), args.p)
    stim = Forcing(lambda x, y, t: 2e6 * ((abs(x - 0.5) <= 0.1) & (abs(y - 0.5) <= 0.1)) * (t <= 1e-3))
    solver = MonodomainSolver(space, params, stim)
    A = solver.base
    rng = np.random.default_rng(0)
    x = rng.standard_normal(A.shape[1])
    V = rng.standard_normal(space.n_dofs) * 0.1
    vals = np.ascontiguousarray(space.basis.values)
    wdet = np.ascontiguousarray(space.wdet)
    coeffs = space.reshape(V)
    scale = params.chi_m * params.kappa

    print(f"level {args.level}, p {args.p}: {space.n_dofs} dofs, nnz {A.nnz}")
    results = {}
    for name, impl in backends.items():
        mv = best_of(lambda: impl.csr_matvec(A.indptr, A.indices, A.data, x), args.repeat)
        rb = best_of(lambda: impl.reaction_blocks(vals, wdet, coeffs, scale, params.a), args.repeat)

        def run_steps():
            state = solver.initial_state(0.0, 0.0)
            for _ in range(args.steps):
                state = solver.step(state)
            return state

        st = with_backend(impl, lambda: best_of(run_steps, 1)) / args.steps
        out = (
            impl.csr_matvec(A.indptr, A.indices, A.data, x),
            impl.reaction_blocks(vals, wdet, coeffs, scale, params.a),
        )
        results[name] = (mv, rb, st, out)
        print(f"{name:>9}: matvec {mv * 1e3:8.3f} ms   reaction {rb * 1e3:8.3f} ms   step {st * 1e3:8.1f} ms")

    if len(results) == 2:
        py, cc = results["python"], results["compiled"]
        print(f"  speedup: matvec {py[0] / cc[0]:.2f}x   reaction {py[1] / cc[1]:.2f}x   step {py[2] / cc[2]:.2f}x")
        d_mv = np.abs(py[3][0] - cc[3][0]).max() / np.abs(py[3][0]).max()
        d_rb = np.abs(py[3][1] - cc[3][1]).max() / np.abs(py[3][1]).max()
        print(f"  max relative difference: matvec {d_mv:.1e}   reaction {d_rb:.1e}")


if __name__ == "__main__":
    main()
