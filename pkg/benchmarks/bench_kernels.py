"""Compiled kernel against the pure-Python fallback on both builtins.

Run with ``python3 benchmarks/bench_kernels.py``.
"""
from saddleflow.bench import format_report, run_benchmark

if __name__ == "__main__":
    for builtin in ("example1", "example2"):
        for mode in ("spd", "spld"):
            print(format_report(run_benchmark(builtin, n=50, steps=5000, repeats=3, mode=mode)))
