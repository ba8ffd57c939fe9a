"""Pure-numpy bilateral filter kernels (fallback backend).

Vectorized over window offsets: for each offset the contribution of every
(voxel, neighbor) pair with that displacement is computed with shifted array
slices.  Per voxel this accumulates terms in the same ascending offset order
as the compiled backend, so the two agree to floating-point rounding.

All arrays are float64 of shape (nz, ny, nx).  Out-of-bounds neighbors are
clipped (absent), so the normalization renormalizes automatically at the
boundary.  ``workers`` is accepted for interface parity and ignored; numpy's
internal vectorization is single-threaded and deterministic.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def _shifted_regions(shape, offset):
    """Center and neighbor slice tuples for a displacement ``offset``.

    Covers exactly the voxels whose neighbor at ``offset`` is in bounds.
    """
    center = []
    neighbor = []
    for n, o in zip(shape, offset):
        lo = max(0, -o)
        hi = n - max(0, o)
        center.append(slice(lo, hi))
        neighbor.append(slice(lo + o, hi + o))
    return tuple(center), tuple(neighbor)


def forward(x, kx, ky, kz, sr, workers=1):
    """Filter ``x``; returns (out, w, alpha, s_w, s_a).

    ``kx``/``ky``/``kz`` are 1-D spatial kernel tables, ``k[d] =
    exp(-d^2 / (2 sigma^2))`` for d = 0..radius.  ``sr`` is the range
    kernel width.

    The output is computed in the shifted form ``out = x + (sum of
    weight * (x_n - x_k)) / w`` so that constant volumes are exact fixed
    points; ``alpha`` is reconstructed as ``anum + w * x``.
    """
    nz, ny, nx = x.shape
    rz = min(len(kz) - 1, nz - 1)
    ry = min(len(ky) - 1, ny - 1)
    rx = min(len(kx) - 1, nx - 1)
    inv_two_sr2 = 1.0 / (2.0 * sr * sr)
    inv_sr2 = 1.0 / (sr * sr)

    w = np.zeros_like(x)
    anum = np.zeros_like(x)  # sum of gs*gr*(x_n - x_k)
    sa_raw = np.zeros_like(x)  # sum of gs*gr*x_n*(x_n - x_k)

    for oz in range(-rz, rz + 1):
        gz = kz[abs(oz)]
        for oy in range(-ry, ry + 1):
            gzy = gz * ky[abs(oy)]
            for ox in range(-rx, rx + 1):
                gs = gzy * kx[abs(ox)]
                c, n = _shifted_regions((nz, ny, nx), (oz, oy, ox))
                xc = x[c]
                xn = x[n]
                nd = xn - xc
                gr = np.exp(-(nd * nd) * inv_two_sr2)
                t = gs * gr
                tn = t * nd
                w[c] += t
                anum[c] += tn
                sa_raw[c] += tn * xn

    out = x + anum / w
    alpha = anum + w * x
    s_w = anum * inv_sr2
    s_a = sa_raw * inv_sr2
    return out, w, alpha, s_w, s_a


def backward(x, out, w, s_w, s_a, grad_out, kx, ky, kz, sx, sy, sz, sr, workers=1):
    """Fused backward pass; returns (sigma_grads, grad_in).

    ``sigma_grads`` is a (4,) array ordered (x, y, z, r).  Uses a gather
    formulation: for each voxel i, the loop over offsets o visits the pair
    (k = i + o, n = i), accumulating both the input gradient at i and the
    four kernel-width gradients.  The k = i diagonal term uses the cached
    sums ``s_w``/``s_a``; the o = 0 pair contributes nothing to the sigma
    gradients (zero spatial and intensity distance).
    """
    nz, ny, nx = x.shape
    rz = min(len(kz) - 1, nz - 1)
    ry = min(len(ky) - 1, ny - 1)
    rx = min(len(kx) - 1, nx - 1)
    inv_two_sr2 = 1.0 / (2.0 * sr * sr)
    inv_sr2 = 1.0 / (sr * sr)

    go_w = grad_out / w
    # diagonal (k = i) contribution, from the cached forward sums
    grad_in = go_w * (1.0 + s_a - out * s_w)

    gsig_x = 0.0
    gsig_y = 0.0
    gsig_z = 0.0
    gsig_r = 0.0
    inv_sx3 = 1.0 / (sx * sx * sx)
    inv_sy3 = 1.0 / (sy * sy * sy)
    inv_sz3 = 1.0 / (sz * sz * sz)
    inv_sr3 = 1.0 / (sr * sr * sr)

    for oz in range(-rz, rz + 1):
        gz = kz[abs(oz)]
        for oy in range(-ry, ry + 1):
            gzy = gz * ky[abs(oy)]
            for ox in range(-rx, rx + 1):
                if oz == 0 and oy == 0 and ox == 0:
                    continue
                gs = gzy * kx[abs(ox)]
                c, k = _shifted_regions((nz, ny, nx), (oz, oy, ox))
                xi = x[c]
                d = x[k] - xi  # X_k - X_i
                gr = np.exp(-(d * d) * inv_two_sr2)
                a = (gs * gr) * go_w[k]
                b = xi - out[k]  # (X_n - Yhat_k) with n = i
                ab = a * b
                grad_in[c] += a * ((d * inv_sr2) * b + 1.0)
                sab = float(np.sum(ab))
                gsig_x += (ox * ox) * inv_sx3 * sab
                gsig_y += (oy * oy) * inv_sy3 * sab
                gsig_z += (oz * oz) * inv_sz3 * sab
                gsig_r += float(np.sum(ab * (d * d))) * inv_sr3

    sigma_grads = np.array([gsig_x, gsig_y, gsig_z, gsig_r])
    return sigma_grads, grad_in
