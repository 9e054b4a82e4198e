"""Compare the compiled and pure-Python kernels on polynomial flows.

Run with ``python3 benchmarks/bench_kernels.py``.
"""

import random
import time

import numpy as np

from normalforms.kernels import PackedSystem, backend_module
from normalforms.symcore import Chart, Poly


def random_field(rng, chart, degree=3, terms=6):
    out = []
    for i in range(chart.dim):
        p = Poly.constant(chart, 0)
        for _ in range(terms):
            e = [0] * chart.dim
            for _ in range(rng.randint(0, degree)):
                e[rng.randrange(chart.dim)] += 1
            p = p + Poly.monomial(chart, tuple(e)) * rng.randint(-3, 3) / 10
        out.append(p - chart.var(chart.coords[i]))
    return out


def timeit(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    rng = random.Random(0)
    try:
        backend_module("cython")
        backends = ["python", "cython"]
    except ImportError:
        backends = ["python"]
    print(f"{'dim':>4} {'task':>10} " + " ".join(f"{b:>12}" for b in backends) + "   speedup")
    for dim in (2, 4, 8):
        chart = Chart(f"R{dim}", [f"x{i}" for i in range(dim)])
        sys = PackedSystem(random_field(rng, chart), chart)
        z = np.full(dim, 0.1)
        rows = {
            "eval x1e4": lambda b: [sys(z, backend=b) for _ in range(10000)],
            "flow x50": lambda b: [sys.integrate(z, 1.0, rtol=1e-10, backend=b) for _ in range(50)],
        }
        for name, job in rows.items():
            times = [timeit(lambda: job(b)) for b in backends]
            ratio = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else ""
            print(f"{dim:>4} {name:>10} " + " ".join(f"{t * 1e3:10.1f}ms" for t in times) + "   " + ratio)


if __name__ == "__main__":
    main()
