"""Command-line entry point.

Subcommands: gradcheck, synth, train, denoise, evaluate, depth-study.
Exit codes follow a stable scripting contract: 0 success, 1 check
failure, 2 usage or input error.  Worker count comes from ``--workers``,
then the TBF_WORKERS environment variable, then the available cores.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .data_io import (
    GaussianNoise,
    PoissonNoise,
    add_noise,
    generate_phantom,
    load_params,
    load_volume,
    random_phantom,
    save_history,
    save_params,
    save_volume,
)
from .layer import SigmaParams, gradcheck
from .metrics import MetricConfig, psnr, ssim
from .pipeline import pipeline_forward
from .training import TrainConfig, train_n2v, train_supervised
from .volume import Volume, new_filled


def _resolve_workers(args: argparse.Namespace) -> int:
    if getattr(args, "workers", None) is not None:
        n = args.workers
    else:
        env = os.environ.get("TBF_WORKERS", "")
        n = int(env) if env else (os.cpu_count() or 1)
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    return n


def cmd_gradcheck(args: argparse.Namespace) -> int:
    if not 1 <= args.size <= 16:
        raise ValueError(f"--size must be in [1, 16], got {args.size}")
    workers = _resolve_workers(args)
    rng = np.random.default_rng(args.seed)
    dims = (args.size, args.size, args.size)
    if args.constant:
        vol = new_filled(dims, 0.5)
    else:
        vol = Volume(dims, rng.uniform(0.0, 1.0, size=args.size**3))
    params = SigmaParams(
        sigma_x=float(rng.uniform(0.1, 3.0)),
        sigma_y=float(rng.uniform(0.1, 3.0)),
        sigma_z=float(rng.uniform(0.1, 3.0)),
        sigma_r=float(rng.uniform(1e-3, 10.0)),
    )
    report = gradcheck(
        vol, params, eps=args.eps, tol=args.tol, seed=args.seed, workers=workers
    )
    print(f"max relative error, sigma gradients: {report.max_rel_err_sigma:.3e}")
    print(f"max relative error, input gradients: {report.max_rel_err_input:.3e}")
    print("gradcheck passed" if report.passed else "gradcheck FAILED")
    return 0 if report.passed else 1


def cmd_synth(args: argparse.Namespace) -> int:
    dims = tuple(args.dims)
    spec = random_phantom(dims, n_primitives=args.primitives, seed=args.seed)
    clean = generate_phantom(spec)
    save_volume(clean, args.out_clean)
    print(f"wrote clean phantom {dims} to {args.out_clean}")
    if args.out_noisy:
        if args.noise_model == "gaussian":
            model = GaussianNoise(args.noise_sigma)
        else:
            model = PoissonNoise(args.photons)
        noisy = add_noise(clean, model, seed=args.seed + 1)
        save_volume(noisy, args.out_noisy)
        print(f"wrote {args.noise_model} noisy volume to {args.out_noisy}")
    return 0


def _train_config(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        lr_spatial=args.lr_spatial,
        lr_range=args.lr_range,
        max_iters=args.iters,
        seed=args.seed,
        mode=args.mode,
    )


def cmd_train(args: argparse.Namespace) -> int:
    if args.depth < 1:
        raise ValueError(f"--depth must be >= 1, got {args.depth}")
    workers = _resolve_workers(args)
    cfg = _train_config(args)
    noisy = load_volume(args.noisy)
    if cfg.mode == "supervised":
        if not args.clean:
            raise ValueError("--clean is required for supervised mode")
        clean = load_volume(args.clean)
        fp, history = train_supervised(noisy, clean, args.depth, cfg, workers=workers)
    else:
        fp, history = train_n2v(noisy, args.depth, cfg, workers=workers)
    save_params(fp, args.out_params)
    if args.out_history:
        save_history(history, args.out_history)
    print(f"final loss: {history[-1].loss!r} after {len(history)} iterations")
    for i, p in enumerate(fp.layers):
        print(
            f"layer {i}: sigma_x={p.sigma_x:.6g} sigma_y={p.sigma_y:.6g} "
            f"sigma_z={p.sigma_z:.6g} sigma_r={p.sigma_r:.6g}"
        )
    return 0


def cmd_denoise(args: argparse.Namespace) -> int:
    workers = _resolve_workers(args)
    vol = load_volume(args.input)
    fp = load_params(args.params)
    start = time.perf_counter()
    tape = pipeline_forward(vol, fp, workers=workers)
    elapsed = time.perf_counter() - start
    save_volume(tape.output, args.output)
    nx, ny, nz = vol.dims
    print(f"filtered {nx}x{ny}x{nz} volume in {elapsed:.3f} s (I/O excluded)")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    pred = load_volume(args.pred)
    target = load_volume(args.target)
    cfg = MetricConfig(data_range=args.data_range)
    print(f"ssim {ssim(pred, target, cfg)!r}")
    print(f"psnr {psnr(pred, target, cfg)!r} dB")
    return 0


def cmd_depth_study(args: argparse.Namespace) -> int:
    for d in args.depths:
        if not 1 <= d <= 6:
            raise ValueError(f"--depths entries must be in [1, 6], got {d}")
    workers = _resolve_workers(args)
    cfg = _train_config(args)
    noisy = load_volume(args.noisy)
    if not args.clean:
        raise ValueError("--clean is required to score the depth study")
    clean = load_volume(args.clean)
    mcfg = MetricConfig(data_range=args.data_range)
    lines = ["depth,ssim,psnr"]
    for depth in args.depths:
        if cfg.mode == "supervised":
            fp, _ = train_supervised(noisy, clean, depth, cfg, workers=workers)
        else:
            fp, _ = train_n2v(noisy, depth, cfg, workers=workers)
        out = pipeline_forward(noisy, fp, workers=workers).output
        s = ssim(out, clean, mcfg)
        p = psnr(out, clean, mcfg)
        print(f"depth {depth}: ssim {s:.4f} psnr {p:.2f} dB")
        lines.append(f"{depth},{s!r},{p!r}")
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote depth study to {args.out}")
    return 0


def _add_workers_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--workers",
        type=int,
        default=None,
        help="worker threads (default: TBF_WORKERS or all cores)",
    )


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noisy", required=True, help="noisy input volume (json/raw pair)")
    p.add_argument("--clean", default=None, help="clean target volume")
    p.add_argument(
        "--mode", choices=("supervised", "noise2void"), default="supervised"
    )
    p.add_argument("--iters", type=int, default=5000, help="max training iterations")
    p.add_argument("--lr-spatial", type=float, default=0.01)
    p.add_argument("--lr-range", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tbf",
        description="Trainable bilateral filter pipelines for volume denoising.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="compare analytic gradients to finite differences")
    p.add_argument("--size", type=int, default=8, help="cube edge length, at most 16")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-6, help="finite-difference step")
    p.add_argument("--tol", type=float, default=1e-4, help="max relative error allowed")
    p.add_argument(
        "--constant", action="store_true", help="check on a constant volume"
    )
    _add_workers_flag(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic phantom volume")
    p.add_argument("--dims", type=int, nargs=3, required=True, metavar=("NX", "NY", "NZ"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--primitives", type=int, default=6, help="random primitive count")
    p.add_argument("--out-clean", required=True, help="output path for the clean volume")
    p.add_argument("--out-noisy", default=None, help="optional noisy variant path")
    p.add_argument("--noise-model", choices=("gaussian", "poisson"), default="gaussian")
    p.add_argument("--noise-sigma", type=float, default=0.1, help="gaussian std")
    p.add_argument("--photons", type=float, default=1e4, help="poisson counts at unit intensity")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="optimize pipeline widths on a volume")
    _add_train_flags(p)
    p.add_argument("--depth", type=int, required=True, help="number of filter layers")
    p.add_argument("--out-params", required=True)
    p.add_argument("--out-history", default=None, help="optional loss-trace CSV")
    _add_workers_flag(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="apply saved pipeline widths to a volume")
    p.add_argument("--input", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--output", required=True)
    _add_workers_flag(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("evaluate", help="print SSIM and PSNR for a volume pair")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--data-range", type=float, default=1.0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("depth-study", help="train at several depths, write comparison CSV")
    _add_train_flags(p)
    p.add_argument(
        "--depths", type=int, nargs="+", required=True, help="depths to compare, each in 1..6"
    )
    p.add_argument("--data-range", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output CSV path")
    _add_workers_flag(p)
    p.set_defaults(func=cmd_depth_study)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
