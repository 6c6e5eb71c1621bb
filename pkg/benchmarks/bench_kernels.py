"""Compare the compiled and pure-Python statevector kernels.

Times a forward pass and an adjoint gradient on IQP-style circuits of
increasing width.  Run with ``python3 benchmarks/bench_kernels.py``.
"""
import argparse
import time

import numpy as np

from discoq import kernels, simulator
from discoq.ansatz import Circuit, Gate, ParameterRegistry


def iqp_circuit(n, layers, registry):
    gates = []
    for layer in range(layers):
        gates += [Gate("H", (q,)) for q in range(n)]
        gates += [Gate("CRz", (q, q + 1), registry.slot("bench", layer * n + q)) for q in range(n - 1)]
    gates += [Gate("Rx", (q,), registry.slot("bench", layers * n + q)) for q in range(n)]
    return Circuit.fragment(n, gates)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubits", type=int, nargs="+", default=[4, 8, 12, 14])
    ap.add_argument("--layers", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    names = kernels.available_backends()
    rng = np.random.default_rng(0)
    before = kernels.BACKEND
    print(f"{'qubits':>6} {'op':>8} " + " ".join(f"{n:>10}" for n in names) + "  speedup")
    try:
        for n in args.qubits:
            reg = ParameterRegistry()
            circ = iqp_circuit(n, args.layers, reg)
            params = rng.uniform(0, 2 * np.pi, len(reg))
            cot = rng.normal(size=2 ** n) + 0j
            for op in ("run", "gradient"):
                row = []
                for name in names:
                    kernels.use_backend(name)
                    if op == "run":
                        row.append(best_of(lambda: simulator.run(circ, params), args.repeat))
                    else:
                        row.append(best_of(lambda: simulator.gradient(circ, params, cot), args.repeat))
                ratio = f"{row[-1] / row[0]:7.1f}x" if len(row) > 1 else "      -"
                print(f"{n:>6} {op:>8} " + " ".join(f"{t * 1e3:8.2f}ms" for t in row) + f"  {ratio}")
    finally:
        kernels.use_backend(before)


if __name__ == "__main__":
    main()
