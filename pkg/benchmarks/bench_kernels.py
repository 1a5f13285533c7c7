"""Time the compiled kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--persons N]
"""

import argparse
import math
import timeit

import numpy as np

from geodensity import kernels
from geodensity.geometry import CameraIntrinsics, DronePose, homography_image_to_head


def workloads(n_persons, seed=0):
    K = CameraIntrinsics(1000.0, 1000.0, 640.0, 360.0, 1280, 720)
    h = homography_image_to_head(K, DronePose(30.0, -math.radians(60))).matrix
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 40.0, (n_persons, 2))
    grid = dict(x0=-2.0, y0=-2.0, cell=0.1, rows=440, cols=440)
    g = rng.uniform(0.0, 1.0, (grid["rows"], grid["cols"]))
    f = rng.uniform(0.0, 1e-3, (K.height, K.width))

    def make(mod):
        m, ok = mod.scale_map(h, K.width, K.height)
        return {
            "gaussian_raster": lambda: mod.gaussian_raster(
                pts, 0.5, grid["x0"], grid["y0"], grid["cell"], grid["rows"], grid["cols"]),
            "scale_map": lambda: mod.scale_map(h, K.width, K.height),
            "warp_head_to_image": lambda: mod.warp_head_to_image(
                g, grid["x0"], grid["y0"], grid["cell"], h, m, ok),
            "splat_image_to_head": lambda: mod.splat_image_to_head(
                f, ok, h, grid["x0"], grid["y0"], grid["cell"], grid["rows"], grid["cols"]),
        }

    return make


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--persons", type=int, default=300)
    args = ap.parse_args()

    backends = kernels.available_backends()
    make = workloads(args.persons)
    results = {name: {} for name in backends}
    for name, mod in backends.items():
        for kernel, fn in make(mod).items():
            fn()  # warm-up
            results[name][kernel] = min(timeit.repeat(fn, number=1, repeat=args.repeat))

    names = sorted(backends)
    print(f"{'kernel':<22}" + "".join(f"{n + ' [ms]':>16}" for n in names)
          + (f"{'speed-up':>12}" if len(names) == 2 else ""))
    for kernel in results[names[0]]:
        row = f"{kernel:<22}" + "".join(f"{results[n][kernel] * 1e3:>16.2f}" for n in names)
        if "cython" in results and "python" in results:
            row += f"{results['python'][kernel] / results['cython'][kernel]:>11.1f}x"
        print(row)
    if "cython" not in backends:
        print("compiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
