"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each row times one kernel (or one end-to-end workload) under both backends
and checks that their outputs agree before reporting the speedup.
"""

import argparse
import timeit

import numpy as np

from ifmlab import kernels
from ifmlab.discrimination import UnitaryFamily, discriminate
from ifmlab.ifm import InteractionModel, audit_chain, build_kwiat_schedule, run_effective
from ifmlab.tensor import haar_state, haar_unitary


def _workloads(rng):
    T = 20000
    V = np.stack([haar_unitary(2, rng) for _ in range(T)])
    psi0 = haar_state(2, rng)
    block = np.zeros((1, 1), dtype=complex)

    T4 = 5000
    V4 = np.stack([haar_unitary(4, rng) for _ in range(T4)])
    rho0 = np.outer(haar_state(4, rng), haar_state(4, rng).conj())
    kraus = np.stack([haar_unitary(4, rng) / np.sqrt(2) for _ in range(2)])

    G = 20000
    gates = np.stack([haar_unitary(3, rng) for _ in range(G)])
    flags = (rng.random(G) < 0.3).astype(np.uint8)
    state0 = np.stack([haar_state(3, rng), haar_state(3, rng)]) / np.sqrt(2)

    model = InteractionModel.absorbing()
    kwiat = build_kwiat_schedule(5000, model)
    fam = UnitaryFamily(tuple(f"u{j}" for j in range(4)), tuple(haar_unitary(3, rng) for _ in range(4)))

    return {
        f"effective_recursion (T={T}, n=2)": lambda: kernels.effective_recursion(V, psi0, block)[1],
        f"channel_recursion (T={T4}, n=4)": lambda: kernels.channel_recursion(V4, rho0, kraus),
        f"controlled_sequence (G={G}, d=3)": lambda: kernels.controlled_sequence(gates, flags, state0),
        "kwiat audit (T=5000)": lambda: np.array([audit_chain(run_effective(kwiat, model.a1), model).min_slack()]),
        "discriminate x50 (k=4, d=3)": lambda: np.array(
            [discriminate(fam, "u2", 0.01, s)[1].calls for s in range(50)], dtype=float),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    work = _workloads(rng)
    print(f"{'workload':40s} {'python [s]':>11s} {'compiled [s]':>13s} {'speedup':>8s}  agree")
    for name, fn in work.items():
        times, outputs = {}, {}
        for backend in kernels.BACKENDS:
            kernels.use_backend(backend)
            outputs[backend] = fn()
            times[backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        kernels.use_backend(kernels.BACKENDS[0])
        py = times["python"]
        if "compiled" in times:
            c = times["compiled"]
            agree = np.allclose(outputs["python"], outputs["compiled"], atol=1e-9)
            print(f"{name:40s} {py:11.4f} {c:13.4f} {py / c:7.1f}x  {agree}")
        else:
            print(f"{name:40s} {py:11.4f} {'-':>13s} {'-':>8s}  -")


if __name__ == "__main__":
    main()
