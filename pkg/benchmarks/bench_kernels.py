"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py --repeat 3
"""
import argparse
import time

import numpy as np

from tiltcode import _pykernels, codec, stirling, synthetic

try:
    from tiltcode import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(m, N):
    tokens = synthetic.zipf_tokens(1.1, m, N, seed=1)
    counts = np.bincount(tokens, minlength=m).astype(np.int64)
    model = codec.quantized_model(codec.choose_tilt_index(m, N))
    M = stirling._M_HEAD
    K = stirling.HEAD_K - 1
    blob_counts = codec.encode_counts(counts, model, backend=_pykernels)
    blob_payload = codec.encode_string_given_counts(tokens, counts, backend=_pykernels)

    def run(kern):
        return {
            "head_sums": lambda: [kern.head_sums(M, a, K) for a in (1e-4, 1e-2, 1.0)],
            "encode_counts": lambda: codec.encode_counts(counts, model, backend=kern),
            "decode_counts": lambda: codec.decode_counts(blob_counts, model, m, backend=kern),
            "encode_arrangement": lambda: codec.encode_string_given_counts(tokens, counts, backend=kern),
            "decode_arrangement": lambda: codec.decode_string_given_counts(blob_payload, counts, backend=kern),
        }
    return run


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--m", type=int, default=10_000)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    run = cases(args.m, args.n)
    py = run(_pykernels)
    cy = run(_kernels) if _kernels is not None else None
    print(f"m={args.m} N={args.n} best of {args.repeat}")
    print(f"{'kernel':<20}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, fn in py.items():
        tp = best_of(fn, args.repeat)
        if cy is None:
            print(f"{name:<20}{tp:>12.4f}{'-':>12}{'-':>10}")
            continue
        tc = best_of(cy[name], args.repeat)
        print(f"{name:<20}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
