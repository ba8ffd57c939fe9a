"""Independent reference implementations used only by the tests.

Everything here is written as plainly as possible (explicit loops,
textbook formulas) and shares no code with the package internals, so an
agreement failure points at the optimized implementation.
"""

from __future__ import annotations

import math

import numpy as np


def window_radius(sigma: float) -> int:
    return max(math.ceil(5.0 * sigma), 2)


def _axis_table(radius: int, sigma: float) -> list[float]:
    return [math.exp(-(d * d) / (2.0 * sigma * sigma)) for d in range(radius + 1)]


def naive_bilateral(x3d: np.ndarray, sx: float, sy: float, sz: float, sr: float):
    """Direct per-voxel double-loop bilateral filter.

    Returns (out, w, alpha) arrays of the input shape.  Neighborhoods are
    clipped boxes of radius max(ceil(5 sigma), 2) per axis; weights are
    exp(-d^2/(2 sigma^2)) per spatial axis times the range Gaussian of the
    intensity difference.
    """
    nz, ny, nx = x3d.shape
    rx, ry, rz = window_radius(sx), window_radius(sy), window_radius(sz)
    tx, ty, tz = _axis_table(rx, sx), _axis_table(ry, sy), _axis_table(rz, sz)
    inv_two_sr2 = 1.0 / (2.0 * sr * sr)
    xl = x3d.tolist()
    out = np.empty((nz, ny, nx))
    wv = np.empty((nz, ny, nx))
    av = np.empty((nz, ny, nx))
    for iz in range(nz):
        for iy in range(ny):
            for ix in range(nx):
                xc = xl[iz][iy][ix]
                w = 0.0
                a = 0.0
                for jz in range(max(iz - rz, 0), min(iz + rz, nz - 1) + 1):
                    gz = tz[abs(jz - iz)]
                    plane = xl[jz]
                    for jy in range(max(iy - ry, 0), min(iy + ry, ny - 1) + 1):
                        gzy = gz * ty[abs(jy - iy)]
                        row = plane[jy]
                        for jx in range(max(ix - rx, 0), min(ix + rx, nx - 1) + 1):
                            xn = row[jx]
                            d = xn - xc
                            g = gzy * tx[abs(jx - ix)] * math.exp(-d * d * inv_two_sr2)
                            w += g
                            a += g * xn
                out[iz, iy, ix] = a / w
                wv[iz, iy, ix] = w
                av[iz, iy, ix] = a
    return out, wv, av


def gaussian_blur(x3d: np.ndarray, sx: float, sy: float, sz: float) -> np.ndarray:
    """Clipped, renormalized spatial Gaussian smoothing (no range term)."""
    nz, ny, nx = x3d.shape
    rx, ry, rz = window_radius(sx), window_radius(sy), window_radius(sz)
    tx, ty, tz = _axis_table(rx, sx), _axis_table(ry, sy), _axis_table(rz, sz)
    xl = x3d.tolist()
    out = np.empty((nz, ny, nx))
    for iz in range(nz):
        for iy in range(ny):
            for ix in range(nx):
                w = 0.0
                a = 0.0
                for jz in range(max(iz - rz, 0), min(iz + rz, nz - 1) + 1):
                    gz = tz[abs(jz - iz)]
                    plane = xl[jz]
                    for jy in range(max(iy - ry, 0), min(iy + ry, ny - 1) + 1):
                        gzy = gz * ty[abs(jy - iy)]
                        row = plane[jy]
                        for jx in range(max(ix - rx, 0), min(ix + rx, nx - 1) + 1):
                            g = gzy * tx[abs(jx - ix)]
                            w += g
                            a += g * row[jx]
                out[iz, iy, ix] = a / w
    return out


def scalar_ssim(a: float, b: float, data_range: float, k1: float = 0.01, k2: float = 0.03) -> float:
    """SSIM of two constant patches with values a and b (variances zero)."""
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    return ((2.0 * a * b + c1) * c2) / ((a * a + b * b + c1) * c2)


def brute_ssim(
    x3d: np.ndarray,
    y3d: np.ndarray,
    data_range: float = 1.0,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Windowed SSIM, one explicit loop per valid window center, averaged
    per z slice and then over slices.  Local moments use the
    sum-of-weighted-squared-deviations form rather than E[x^2] - mu^2."""
    nz, ny, nx = x3d.shape
    r = window // 2
    g1 = np.array([math.exp(-((i - r) ** 2) / (2.0 * sigma * sigma)) for i in range(window)])
    w2 = np.outer(g1, g1)
    w2 /= w2.sum()
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    slice_means = []
    for iz in range(nz):
        vals = []
        for cy in range(r, ny - r):
            for cx in range(r, nx - r):
                px = x3d[iz, cy - r : cy + r + 1, cx - r : cx + r + 1]
                py = y3d[iz, cy - r : cy + r + 1, cx - r : cx + r + 1]
                mu_x = float((w2 * px).sum())
                mu_y = float((w2 * py).sum())
                var_x = float((w2 * (px - mu_x) ** 2).sum())
                var_y = float((w2 * (py - mu_y) ** 2).sum())
                cov = float((w2 * (px - mu_x) * (py - mu_y)).sum())
                num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
                den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
                vals.append(num / den)
        slice_means.append(sum(vals) / len(vals))
    return sum(slice_means) / len(slice_means)


def adam_trajectory(
    theta0: float,
    grad_fn,
    lr: float,
    steps: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    floor: float | None = None,
) -> list[float]:
    """Textbook scalar Adam; returns [theta0, theta1, ..., theta_steps]."""
    m = 0.0
    v = 0.0
    theta = theta0
    traj = [theta0]
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        if floor is not None and theta < floor:
            theta = floor
        traj.append(theta)
    return traj
