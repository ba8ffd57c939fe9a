# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bilateral filter kernels (hot-loop backend).

Same contract as ``_bilateral_py``: float64 arrays of shape (nz, ny, nx),
clipped windows, shifted-form output so constant volumes are exact fixed
points.  Work is split over (iz, iy) rows with OpenMP; the sigma-gradient
reduction keeps one partial per row and sums them in row order afterwards,
so results are bit-identical for any worker count.
"""

from cython.parallel cimport prange
from libc.math cimport exp

import numpy as np

NAME = "cython"


def forward(const double[:, :, ::1] x,
            const double[::1] kx, const double[::1] ky, const double[::1] kz,
            double sr, int workers=1):
    """Filter ``x``; returns (out, w, alpha, s_w, s_a)."""
    cdef Py_ssize_t nz = x.shape[0], ny = x.shape[1], nx = x.shape[2]
    cdef Py_ssize_t rx = kx.shape[0] - 1, ry = ky.shape[0] - 1, rz = kz.shape[0] - 1
    if rx > nx - 1:
        rx = nx - 1
    if ry > ny - 1:
        ry = ny - 1
    if rz > nz - 1:
        rz = nz - 1
    cdef double inv_two_sr2 = 1.0 / (2.0 * sr * sr)
    cdef double inv_sr2 = 1.0 / (sr * sr)

    out_arr = np.empty((nz, ny, nx))
    w_arr = np.empty((nz, ny, nx))
    alpha_arr = np.empty((nz, ny, nx))
    s_w_arr = np.empty((nz, ny, nx))
    s_a_arr = np.empty((nz, ny, nx))
    cdef double[:, :, ::1] out_v = out_arr
    cdef double[:, :, ::1] w_v = w_arr
    cdef double[:, :, ::1] alpha_v = alpha_arr
    cdef double[:, :, ::1] s_w_v = s_w_arr
    cdef double[:, :, ::1] s_a_v = s_a_arr

    cdef Py_ssize_t nrows = nz * ny
    cdef Py_ssize_t r, iz, iy, ix, oz, oy, ox, z0, z1, y0, y1, x0, x1
    cdef double xc, xn, nd, gr, t, tn, wsum, asum, sasum, gz, gzy, gs

    for r in prange(nrows, nogil=True, schedule='static', num_threads=workers):
        iz = r // ny
        iy = r - iz * ny
        z0 = -rz if iz >= rz else -iz
        z1 = rz if iz + rz <= nz - 1 else nz - 1 - iz
        y0 = -ry if iy >= ry else -iy
        y1 = ry if iy + ry <= ny - 1 else ny - 1 - iy
        for ix in range(nx):
            x0 = -rx if ix >= rx else -ix
            x1 = rx if ix + rx <= nx - 1 else nx - 1 - ix
            xc = x[iz, iy, ix]
            wsum = 0.0
            asum = 0.0
            sasum = 0.0
            for oz in range(z0, z1 + 1):
                gz = kz[oz if oz >= 0 else -oz]
                for oy in range(y0, y1 + 1):
                    gzy = gz * ky[oy if oy >= 0 else -oy]
                    for ox in range(x0, x1 + 1):
                        gs = gzy * kx[ox if ox >= 0 else -ox]
                        xn = x[iz + oz, iy + oy, ix + ox]
                        nd = xn - xc
                        gr = exp(-(nd * nd) * inv_two_sr2)
                        t = gs * gr
                        tn = t * nd
                        wsum = wsum + t
                        asum = asum + tn
                        sasum = sasum + tn * xn
            w_v[iz, iy, ix] = wsum
            out_v[iz, iy, ix] = xc + asum / wsum
            alpha_v[iz, iy, ix] = asum + wsum * xc
            s_w_v[iz, iy, ix] = asum * inv_sr2
            s_a_v[iz, iy, ix] = sasum * inv_sr2

    return out_arr, w_arr, alpha_arr, s_w_arr, s_a_arr


def backward(const double[:, :, ::1] x,
             const double[:, :, ::1] out,
             const double[:, :, ::1] w,
             const double[:, :, ::1] s_w,
             const double[:, :, ::1] s_a,
             const double[:, :, ::1] grad_out,
             const double[::1] kx, const double[::1] ky, const double[::1] kz,
             double sx, double sy, double sz, double sr, int workers=1):
    """Fused backward pass; returns ((4,) sigma_grads ordered x,y,z,r, grad_in)."""
    cdef Py_ssize_t nz = x.shape[0], ny = x.shape[1], nx = x.shape[2]
    cdef Py_ssize_t rx = kx.shape[0] - 1, ry = ky.shape[0] - 1, rz = kz.shape[0] - 1
    if rx > nx - 1:
        rx = nx - 1
    if ry > ny - 1:
        ry = ny - 1
    if rz > nz - 1:
        rz = nz - 1
    cdef double inv_two_sr2 = 1.0 / (2.0 * sr * sr)
    cdef double inv_sr2 = 1.0 / (sr * sr)
    cdef double inv_sx3 = 1.0 / (sx * sx * sx)
    cdef double inv_sy3 = 1.0 / (sy * sy * sy)
    cdef double inv_sz3 = 1.0 / (sz * sz * sz)
    cdef double inv_sr3 = 1.0 / (sr * sr * sr)

    go_w_arr = np.divide(grad_out, w)
    cdef const double[:, :, ::1] go_w = go_w_arr
    gin_arr = np.empty((nz, ny, nx))
    cdef double[:, :, ::1] gin_v = gin_arr
    cdef Py_ssize_t nrows = nz * ny
    # one 4-vector of sigma-gradient partials per row; reduced in row order
    partials_arr = np.zeros((nrows, 4))
    cdef double[:, ::1] partials = partials_arr

    cdef Py_ssize_t r, iz, iy, ix, oz, oy, ox, kz_i, ky_i, kx_i
    cdef Py_ssize_t z0, z1, y0, y1, x0, x1
    cdef double xi, xk, d, gr, gs, gz, gzy, a, b, ab, gin
    cdef double px, py, pz, pr

    for r in prange(nrows, nogil=True, schedule='static', num_threads=workers):
        iz = r // ny
        iy = r - iz * ny
        z0 = -rz if iz >= rz else -iz
        z1 = rz if iz + rz <= nz - 1 else nz - 1 - iz
        y0 = -ry if iy >= ry else -iy
        y1 = ry if iy + ry <= ny - 1 else ny - 1 - iy
        px = 0.0
        py = 0.0
        pz = 0.0
        pr = 0.0
        for ix in range(nx):
            x0 = -rx if ix >= rx else -ix
            x1 = rx if ix + rx <= nx - 1 else nx - 1 - ix
            xi = x[iz, iy, ix]
            # diagonal k = i term from the cached forward sums
            gin = go_w[iz, iy, ix] * (1.0 + s_a[iz, iy, ix]
                                      - out[iz, iy, ix] * s_w[iz, iy, ix])
            for oz in range(z0, z1 + 1):
                gz = kz[oz if oz >= 0 else -oz]
                kz_i = iz + oz
                for oy in range(y0, y1 + 1):
                    gzy = gz * ky[oy if oy >= 0 else -oy]
                    ky_i = iy + oy
                    for ox in range(x0, x1 + 1):
                        if oz == 0 and oy == 0 and ox == 0:
                            continue
                        gs = gzy * kx[ox if ox >= 0 else -ox]
                        kx_i = ix + ox
                        xk = x[kz_i, ky_i, kx_i]
                        d = xk - xi
                        gr = exp(-(d * d) * inv_two_sr2)
                        a = (gs * gr) * go_w[kz_i, ky_i, kx_i]
                        b = xi - out[kz_i, ky_i, kx_i]
                        ab = a * b
                        gin = gin + a * ((d * inv_sr2) * b + 1.0)
                        px = px + (ox * ox) * inv_sx3 * ab
                        py = py + (oy * oy) * inv_sy3 * ab
                        pz = pz + (oz * oz) * inv_sz3 * ab
                        pr = pr + (ab * (d * d)) * inv_sr3
            gin_v[iz, iy, ix] = gin
        partials[r, 0] = px
        partials[r, 1] = py
        partials[r, 2] = pz
        partials[r, 3] = pr

    sigma_grads = partials_arr.sum(axis=0)
    return sigma_grads, gin_arr
