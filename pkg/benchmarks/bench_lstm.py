"""Time the compiled LSTM kernel against the NumPy fallback.

    python benchmarks/bench_lstm.py [--hidden 60] [--lengths 10,30,80] [--repeat 20]

Reports the median forward+backward time per sequence for each backend and
the speedup. The compiled row is skipped if the extension is not built.
"""

import argparse
import statistics
import time

import numpy as np

from mfare import _lstm_py

try:
    from mfare import _lstm_kernel
except ImportError:
    _lstm_kernel = None


def time_backend(impl, xw, w_rec, dh, repeat):
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        h, c, gates = impl.lstm_forward(xw, w_rec, False)
        impl.lstm_backward(dh, gates, c, w_rec, False)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, default=60)
    ap.add_argument("--lengths", default="10,30,80")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    h = args.hidden
    w_rec = rng.uniform(-0.3, 0.3, size=(h, 4 * h))
    print(f"{'length':>7} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for n in (int(x) for x in args.lengths.split(",")):
        xw = rng.normal(size=(n, 4 * h))
        dh = rng.normal(size=(n, h))
        t_py = time_backend(_lstm_py, xw, w_rec, dh, args.repeat)
        if _lstm_kernel is None:
            print(f"{n:>7} {t_py * 1e3:>10.3f} {'n/a':>12} {'n/a':>8}")
            continue
        t_c = time_backend(_lstm_kernel, xw, w_rec, dh, args.repeat)
        print(f"{n:>7} {t_py * 1e3:>10.3f} {t_c * 1e3:>12.3f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
