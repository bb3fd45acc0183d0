"""Time the compiled frame kernels against the NumPy fallback.

Both backends are imported directly, so one run compares them without
re-launching under ``CAVFORGE_KERNELS=python``. Reports the median of
``--repeats`` timed passes per kernel, plus the speedup ratio, and exits
nonzero if the backends disagree numerically.

Usage::

    python3 benchmarks/bench_kernels.py [--frames 200] [--repeats 5]
"""

import argparse
import sys
import time

import numpy as np

from cavforge._kernels import _pyfallback

try:
    from cavforge._kernels import _native
except ImportError:
    _native = None


def _time_pass(fn, repeats):
    best = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best.append(time.perf_counter() - start)
    return float(np.median(best))


def _spot_pass(mod, frames, height, width, rng):
    def run():
        img = np.zeros((height, width))
        for i in range(frames):
            mod.render_spot(
                img,
                float(rng.uniform(0, width)),
                float(rng.uniform(0, height)),
                float(rng.uniform(5, 40)),
                1.0,
                int(i % 4),
            )
        return img

    return run


def _moments_pass(mod, frames, img):
    def run():
        for _ in range(frames):
            mod.frame_moments(img, 0.01)

    return run


def _check_agreement(height, width):
    rng = np.random.default_rng(7)
    img_py = np.zeros((height, width))
    img_nat = np.zeros((height, width))
    for i in range(16):
        args = (
            float(rng.uniform(0, width)),
            float(rng.uniform(0, height)),
            float(rng.uniform(5, 40)),
            float(rng.uniform(0.2, 2.0)),
            int(i % 4),
        )
        _pyfallback.render_spot(img_py, *args)
        _native.render_spot(img_nat, *args)
    if not np.allclose(img_py, img_nat, rtol=1e-12, atol=1e-12):
        return False
    mom_py = _pyfallback.frame_moments(img_py, 0.01)
    mom_nat = _native.frame_moments(img_nat, 0.01)
    return np.allclose(mom_py, mom_nat, rtol=1e-9, atol=1e-12)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=200,
                        help="kernel calls per timed pass (default 200)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed passes per kernel (default 5)")
    parser.add_argument("--shape", type=int, nargs=2, default=(480, 640),
                        metavar=("H", "W"), help="frame shape (default 480 640)")
    args = parser.parse_args(argv)

    if _native is None:
        print("compiled backend not built; nothing to compare", file=sys.stderr)
        return 1

    height, width = args.shape
    if not _check_agreement(height, width):
        print("backends disagree numerically; fix that before timing",
              file=sys.stderr)
        return 1

    rng_a = np.random.default_rng(42)
    rng_b = np.random.default_rng(42)
    busy = _spot_pass(_pyfallback, 64, height, width, np.random.default_rng(3))()

    rows = [
        ("render_spot",
         _time_pass(_spot_pass(_pyfallback, args.frames, height, width, rng_a),
                    args.repeats),
         _time_pass(_spot_pass(_native, args.frames, height, width, rng_b),
                    args.repeats)),
        ("frame_moments",
         _time_pass(_moments_pass(_pyfallback, args.frames, busy), args.repeats),
         _time_pass(_moments_pass(_native, args.frames, busy), args.repeats)),
    ]

    print(f"{args.frames} calls/pass on {height}x{width}, "
          f"median of {args.repeats} passes")
    print(f"{'kernel':<16}{'python [ms]':>14}{'native [ms]':>14}{'speedup':>10}")
    for name, t_py, t_nat in rows:
        ratio = t_py / t_nat if t_nat > 0 else float("inf")
        print(f"{name:<16}{t_py * 1e3:>14.2f}{t_nat * 1e3:>14.2f}{ratio:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
