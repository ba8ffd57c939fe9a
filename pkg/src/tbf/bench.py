"""Backend benchmark: compiled kernels vs the numpy fallback.

Run as ``python -m tbf.bench``.  Times the filter forward and backward
passes on a random volume with both available backends and prints the
speedup, plus a cross-backend agreement check on the outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from .kernels import available_backends
from .layer import SigmaParams, _spatial_tables, kernel_radii
from .volume import Volume


def _time_backend(mod, x, params, repeats: int, workers: int):
    kx, ky, kz = _spatial_tables(params)
    arr = x.as3d()
    fwd_times, bwd_times = [], []
    out = w = s_w = s_a = None
    rng = np.random.default_rng(7)
    grad_out = rng.standard_normal(arr.shape)
    for _ in range(repeats):
        t0 = time.perf_counter()
        out, w, alpha, s_w, s_a = mod.forward(
            arr, kx, ky, kz, params.sigma_r, workers=workers
        )
        fwd_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        sigma_grads, grad_in = mod.backward(
            arr,
            out,
            w,
            s_w,
            s_a,
            grad_out,
            kx,
            ky,
            kz,
            params.sigma_x,
            params.sigma_y,
            params.sigma_z,
            params.sigma_r,
            workers=workers,
        )
        bwd_times.append(time.perf_counter() - t0)
    return min(fwd_times), min(bwd_times), out, sigma_grads, grad_in


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="benchmark kernel backends")
    ap.add_argument("--size", type=int, default=48, help="cube edge length")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--sigma-spatial", type=float, default=1.0)
    ap.add_argument("--sigma-range", type=float, default=0.25)
    args = ap.parse_args(argv)

    backends = available_backends()
    if not backends:
        print("no kernel backends importable")
        return 1

    params = SigmaParams(
        args.sigma_spatial, args.sigma_spatial, args.sigma_spatial, args.sigma_range
    )
    rng = np.random.default_rng(0)
    n = args.size
    x = Volume((n, n, n), rng.uniform(0.0, 1.0, size=n**3))
    radii = kernel_radii(params)
    print(
        f"volume {n}^3, spatial sigma {args.sigma_spatial} (radii {radii}), "
        f"range sigma {args.sigma_range}, workers {args.workers}, "
        f"best of {args.repeats}"
    )

    results = {}
    for name, mod in sorted(backends.items()):
        fwd, bwd, out, sg, gi = _time_backend(mod, x, params, args.repeats, args.workers)
        results[name] = (fwd, bwd, out, sg, gi)
        print(f"  {name:7s} forward {fwd * 1e3:9.2f} ms   backward {bwd * 1e3:9.2f} ms")

    if len(results) == 2:
        (fa, ba, oa, sga, gia) = results["cython"]
        (fb, bb, ob, sgb, gib) = results["python"]
        print(f"  speedup forward {fb / fa:6.1f}x   backward {bb / ba:6.1f}x")
        diff_out = float(np.max(np.abs(oa - ob)))
        diff_sg = float(np.max(np.abs(sga - sgb)))
        diff_gi = float(np.max(np.abs(gia - gib)))
        print(
            f"  max abs disagreement: output {diff_out:.2e}, "
            f"sigma grads {diff_sg:.2e}, input grads {diff_gi:.2e}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
