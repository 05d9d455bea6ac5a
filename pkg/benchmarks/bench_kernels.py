"""Time the compiled kernels against the numpy fallback on realistic inputs.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``
"""
import argparse
import timeit

import numpy as np

from somgen import _pykernels
from somgen.kernels import compiled_available


def workloads(rng):
    img = rng.integers(0, 256, (256, 256)).astype(np.uint8)
    templates = (rng.random((8, 32, 32)) < 0.3).astype(np.uint8) * 255
    n_lumps = 500
    cx, cy = rng.uniform(0, 256, n_lumps), rng.uniform(0, 256, n_lumps)
    theta = rng.uniform(0, 2 * np.pi, n_lumps)
    sx, sy = rng.uniform(0, 256, 96), rng.uniform(0, 256, 96)
    return {
        "splat_lumps (500 lumps, r=30)": lambda k: k.splat_lumps(np.zeros((256, 256)), cx, cy, theta, 1.0, 2.1, 0.5, 5.0, 2.0, 30),
        "nearest_site (96 sites)": lambda k: k.nearest_site(256, 256, sx, sy),
        "tile_moran (16x16 tiles)": lambda k: k.tile_moran(img, 16),
        "block_mae (64 blocks x 8)": lambda k: k.block_mae(img, templates),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {"python": _pykernels}
    if compiled_available():
        from somgen import _ckernels

        backends["cython"] = _ckernels
    else:
        print("compiled extension not built; timing the python fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in workloads(rng).items():
        times = {}
        for b, mod in backends.items():
            fn(mod)  # warm-up
            times[b] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else ""
        print(f"{name:32s} " + " ".join(f"{1e3 * t:10.2f}ms" for t in times.values()) + f"  {speed}")


if __name__ == "__main__":
    main()
