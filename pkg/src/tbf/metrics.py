"""Image quality metrics: PSNR and slice-averaged SSIM.

Both metrics take an explicit ``data_range`` from the config rather than
inferring it per image pair, so scores stay comparable across a test set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .volume import Volume


@dataclass(frozen=True)
class MetricConfig:
    """Shared settings for psnr and ssim."""

    data_range: float = 1.0
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if not (math.isfinite(self.data_range) and self.data_range > 0.0):
            raise ValueError("data_range must be a positive finite scalar")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 1")
        if self.ssim_sigma <= 0.0:
            raise ValueError("ssim_sigma must be > 0")
        if self.k1 <= 0.0 or self.k2 <= 0.0:
            raise ValueError("k1 and k2 must be > 0")


def psnr(pred: Volume, target: Volume, cfg: MetricConfig) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the volumes match.

    Evaluated as 20*log10(range) - 10*log10(mse), which agrees with the
    textbook 10*log10(range^2/mse) but avoids squaring the range and so
    keeps round cases (unit range, mse 0.01) exact in floating point.
    """
    if pred.dims != target.dims:
        raise ValueError(f"dims mismatch: {pred.dims!r} vs {target.dims!r}")
    diff = pred.data - target.data
    mse = float(np.dot(diff, diff)) / diff.size
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(cfg.data_range) - 10.0 * math.log10(mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=float) - (size - 1) / 2.0
    g = np.exp(-(offsets * offsets) / (2.0 * sigma * sigma))
    return g / g.sum()


def _valid_sep_conv(a: np.ndarray, kern: np.ndarray) -> np.ndarray:
    """Valid-mode 2D convolution with a separable symmetric kernel."""
    k = kern.size
    out = sliding_window_view(a, k, axis=1) @ kern
    return np.moveaxis(sliding_window_view(out, k, axis=0) @ kern, -1, 0)


def _ssim_slice(x: np.ndarray, y: np.ndarray, kern: np.ndarray, c1: float, c2: float) -> float:
    mu_x = _valid_sep_conv(x, kern)
    mu_y = _valid_sep_conv(y, kern)
    var_x = _valid_sep_conv(x * x, kern) - mu_x * mu_x
    var_y = _valid_sep_conv(y * y, kern) - mu_y * mu_y
    cov = _valid_sep_conv(x * y, kern) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def ssim(pred: Volume, target: Volume, cfg: MetricConfig) -> float:
    """Mean structural similarity, computed 2D per z slice and averaged.

    Local statistics use a Gaussian-weighted window (``ssim_window`` wide,
    ``ssim_sigma``); the window shrinks to the largest odd size that fits
    when slices are smaller than the configured width.  Stabilizers are
    C1 = (k1*range)^2 and C2 = (k2*range)^2.
    """
    if pred.dims != target.dims:
        raise ValueError(f"dims mismatch: {pred.dims!r} vs {target.dims!r}")
    nx, ny, nz = pred.dims
    win = min(cfg.ssim_window, nx, ny)
    if win % 2 == 0:
        win -= 1
    kern = _gaussian_window(win, cfg.ssim_sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    p3 = pred.as3d()
    t3 = target.as3d()
    per_slice = [_ssim_slice(p3[iz], t3[iz], kern, c1, c2) for iz in range(nz)]
    return float(np.mean(per_slice))


def write_eval_report(path: str, rows: list[tuple[str, float, float]]) -> None:
    """Write an evaluation CSV: id, ssim, psnr per volume plus a
    ``mean ± std`` footer row (population std)."""
    if not rows:
        raise ValueError("no rows to report")
    ssims = np.array([r[1] for r in rows], dtype=float)
    psnrs = np.array([r[2] for r in rows], dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "ssim", "psnr"])
        for name, s, p in rows:
            w.writerow([name, repr(float(s)), repr(float(p))])
        w.writerow(
            [
                "mean ± std",
                f"{ssims.mean():.4f} ± {ssims.std():.4f}",
                f"{psnrs.mean():.2f} ± {psnrs.std():.2f}",
            ]
        )
