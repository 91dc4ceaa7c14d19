"""Compiled kernels vs the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--threads 1 4]
"""

import argparse
import timeit

import numpy as np

from railyard import kernels
from railyard.circuit import QuantumCircuit, cnot, single
from railyard.hamiltonian import FULL_CLOCK, assemble, build_h3s
from railyard.layout import build_layout_3local, close_cycle


def bench_expand(impl, radices, subs, local, repeat):
    t = timeit.repeat(lambda: impl.expand_local(radices, subs, local), number=1, repeat=repeat)
    return min(t)


def bench_matvec(csr, impl, threads, repeat):
    k = kernels.CSRKernel(csr)
    x = np.random.default_rng(0).normal(size=csr.shape[0]) + 0j
    t = timeit.repeat(lambda: k.matvec(x, threads=threads, impl=impl), number=5, repeat=repeat)
    return min(t) / 5


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 4])
    args = ap.parse_args()
    impls = kernels.implementations()
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(impls)}")

    rng = np.random.default_rng(1)
    radices = [2] * 10 + [3] * 6
    local = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))  # qubit (x) qutrit
    print(f"\nexpand_local: qubit-qutrit local op on dim {int(np.prod(radices))}")
    base = None
    for name, impl in impls.items():
        t = bench_expand(impl, radices, [3, 12], local, args.repeat)  # qubit 3, qutrit 12
        base = base or t
        print(f"  {name:9s} {t * 1e3:9.2f} ms   x{base / t:5.2f}")

    c = QuantumCircuit(2, (single("H", 0), cnot(0, 1)))
    lay = close_cycle(build_layout_3local(c))
    csr = assemble(build_h3s(c, lay, FULL_CLOCK)).csr
    print(f"\nCSR matvec: full-clock operator, dim {csr.shape[0]}, nnz {csr.nnz}")
    ref = None
    for name, impl in impls.items():
        for th in args.threads:
            t = bench_matvec(csr, impl, th, args.repeat)
            ref = ref or t
            print(f"  {name:9s} threads={th:<2d} {t * 1e3:8.3f} ms   x{ref / t:5.2f}")


if __name__ == "__main__":
    main()
