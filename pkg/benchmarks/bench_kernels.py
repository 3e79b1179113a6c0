"""Compare the compiled and pure-Python metric kernels.

    python3 benchmarks/bench_kernels.py [--sizes 100 500 2000] [--repeat 5]

Prints best-of-``repeat`` wall time per call for tau-b pair counting and
DCG at several input sizes, plus the speedup of the compiled kernel.
"""

import argparse
import random
import sys
import timeit
from array import array

from llmorderby import _pykernels

try:
    from llmorderby import _ckernels
except ImportError:
    _ckernels = None


def _best(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 500, 2000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; run `pip install --no-build-isolation -e .` first")
        return 1

    rng = random.Random(0)
    print(f"{'kernel':<12}{'n':>6}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for n in args.sizes:
        x = [float(rng.randint(0, n // 4)) for _ in range(n)]
        y = [float(rng.randint(0, n // 4)) for _ in range(n)]
        xa, ya = array("d", x), array("d", y)
        assert _pykernels.pair_counts(x, y) == tuple(_ckernels.pair_counts(xa, ya))
        cases = [
            ("pair_counts", lambda: _pykernels.pair_counts(x, y), lambda: _ckernels.pair_counts(xa, ya)),
            ("dcg", lambda: _pykernels.dcg(x, n), lambda: _ckernels.dcg(xa, n)),
        ]
        for name, py_fn, c_fn in cases:
            t_py = _best(py_fn, args.repeat)
            t_c = _best(c_fn, args.repeat)
            print(f"{name:<12}{n:>6}{t_py * 1e3:>14.3f}{t_c * 1e3:>14.3f}{t_py / t_c:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
