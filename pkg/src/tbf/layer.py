"""Trainable bilateral filter layer: forward pass and analytic gradients.

The filter output at voxel k is a normalized weighted average over a
clipped spatial window,

    out_k = alpha_k / w_k,
    alpha_k = sum_n Gs(p_k - p_n) * Gr(x_k - x_n) * x_n,
    w_k     = sum_n Gs(p_k - p_n) * Gr(x_k - x_n),

with a separable spatial Gaussian ``Gs`` (widths sigma_x/y/z, voxel units)
and a range Gaussian ``Gr(c) = exp(-c^2 / (2 sigma_r^2))``.  The backward
pass computes closed-form gradients of a loss with respect to the four
kernel widths and every input voxel, using quantities cached by the
forward pass.  :func:`gradcheck` validates the analytic gradients against
central finite differences of a probe loss.

Numerically the forward pass evaluates ``out_k = x_k + (sum_n Gs * Gr *
(x_n - x_k)) / w_k``, which is algebraically identical and makes constant
volumes exact fixed points in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .volume import Volume

#: Lower bound enforced on every kernel width by the optimizer.
SIGMA_FLOOR = 1e-6

#: Window radius covers this many spatial standard deviations per axis.
RADIUS_SIGMAS = 5.0

#: Minimum window radius per axis (window at least 5x5x5 before clipping).
MIN_RADIUS = 2


@dataclass(frozen=True)
class SigmaParams:
    """The four trainable kernel widths of one filter layer.

    ``sigma_x``/``sigma_y``/``sigma_z`` are spatial widths in voxel units,
    ``sigma_r`` the range width in intensity units.  All must be finite and
    strictly positive.  Instances are immutable; the optimizer replaces
    them wholesale, so a cached snapshot can never go stale.
    """

    sigma_x: float
    sigma_y: float
    sigma_z: float
    sigma_r: float

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")

    def as_dict(self) -> dict[str, float]:
        return {
            "sigma_x": self.sigma_x,
            "sigma_y": self.sigma_y,
            "sigma_z": self.sigma_z,
            "sigma_r": self.sigma_r,
        }

    def as_array(self) -> np.ndarray:
        """(4,) array ordered (x, y, z, r)."""
        return np.array([self.sigma_x, self.sigma_y, self.sigma_z, self.sigma_r])

    @classmethod
    def from_array(cls, values) -> "SigmaParams":
        vx, vy, vz, vr = (float(v) for v in values)
        return cls(vx, vy, vz, vr)


@dataclass(frozen=True)
class SigmaGrad:
    """Loss gradient with respect to the four kernel widths."""

    d_sigma_x: float
    d_sigma_y: float
    d_sigma_z: float
    d_sigma_r: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.d_sigma_x, self.d_sigma_y, self.d_sigma_z, self.d_sigma_r]
        )

    @classmethod
    def from_array(cls, values) -> "SigmaGrad":
        gx, gy, gz, gr = (float(v) for v in values)
        return cls(gx, gy, gz, gr)


class ForwardCache:
    """Per-voxel quantities saved by the forward pass for the backward pass.

    Besides the output, normalization ``w`` and unnormalized sum ``alpha``,
    two window sums are precomputed for the diagonal (k = i) term of the
    input gradient:

        s_w_k = sum_n Gs * Gr * (x_n - x_k) / sigma_r^2
        s_a_k = sum_n Gs * Gr * x_n * (x_n - x_k) / sigma_r^2

    The cache also keeps the input volume and the parameter snapshot so the
    backward pass can reject mismatched arguments.
    """

    __slots__ = ("output", "w", "alpha", "s_w", "s_a", "params_snapshot", "source")

    def __init__(self, output, w, alpha, s_w, s_a, params_snapshot, source):
        self.output: Volume = output
        self.w: Volume = w
        self.alpha: Volume = alpha
        self.s_w: Volume = s_w
        self.s_a: Volume = s_a
        self.params_snapshot: SigmaParams = params_snapshot
        self.source: Volume = source


def kernel_radii(p: SigmaParams) -> tuple[int, int, int]:
    """Per-axis window radius: ``max(ceil(5 * sigma), 2)``."""
    return (
        max(math.ceil(RADIUS_SIGMAS * p.sigma_x), MIN_RADIUS),
        max(math.ceil(RADIUS_SIGMAS * p.sigma_y), MIN_RADIUS),
        max(math.ceil(RADIUS_SIGMAS * p.sigma_z), MIN_RADIUS),
    )


def _spatial_tables(p: SigmaParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """1-D kernel tables k[d] = exp(-d^2 / (2 sigma^2)), d = 0..radius."""
    rx, ry, rz = kernel_radii(p)

    def table(radius, sigma):
        d = np.arange(radius + 1, dtype=np.float64)
        return np.exp(-(d * d) / (2.0 * sigma * sigma))

    return table(rx, p.sigma_x), table(ry, p.sigma_y), table(rz, p.sigma_z)


def forward(x: Volume, p: SigmaParams, workers: int = 1) -> ForwardCache:
    """Run the bilateral filter on ``x``; returns the full forward cache."""
    if not np.all(np.isfinite(x.data)):
        raise ValueError("filter input contains NaN or Inf")
    kx, ky, kz = _spatial_tables(p)
    out, w, alpha, s_w, s_a = kernels.forward(
        x.as3d(), kx, ky, kz, p.sigma_r, workers=workers
    )
    return ForwardCache(
        output=Volume(x.dims, out),
        w=Volume(x.dims, w),
        alpha=Volume(x.dims, alpha),
        s_w=Volume(x.dims, s_w),
        s_a=Volume(x.dims, s_a),
        params_snapshot=p,
        source=x,
    )


def _check_backward_args(cache: ForwardCache, x: Volume, grad_out: Volume) -> None:
    if x.dims != cache.source.dims or not np.array_equal(x.data, cache.source.data):
        raise ValueError("stale cache: input volume differs from the forward pass")
    if grad_out.dims != x.dims:
        raise ValueError(
            f"grad_out dims {grad_out.dims!r} do not match input dims {x.dims!r}"
        )


def backward(
    cache: ForwardCache, x: Volume, grad_out: Volume, workers: int = 1
) -> tuple[SigmaGrad, Volume]:
    """Fused backward pass: gradients for all four widths and the input.

    ``grad_out`` is the loss gradient with respect to the filter output.
    Both results come from one sweep over (voxel, neighbor) pairs, reusing
    each Gaussian evaluation.
    """
    _check_backward_args(cache, x, grad_out)
    p = cache.params_snapshot
    kx, ky, kz = _spatial_tables(p)
    sigma_grads, grad_in = kernels.backward(
        x.as3d(),
        cache.output.as3d(),
        cache.w.as3d(),
        cache.s_w.as3d(),
        cache.s_a.as3d(),
        grad_out.as3d(),
        kx,
        ky,
        kz,
        p.sigma_x,
        p.sigma_y,
        p.sigma_z,
        p.sigma_r,
        workers=workers,
    )
    return SigmaGrad.from_array(sigma_grads), Volume(x.dims, grad_in)


def backward_sigma(
    cache: ForwardCache, x: Volume, grad_out: Volume, workers: int = 1
) -> SigmaGrad:
    """Loss gradient with respect to the four kernel widths."""
    sigma_grads, _ = backward(cache, x, grad_out, workers=workers)
    return sigma_grads


def backward_input(
    cache: ForwardCache, x: Volume, grad_out: Volume, workers: int = 1
) -> Volume:
    """Loss gradient with respect to every input voxel."""
    _, grad_in = backward(cache, x, grad_out, workers=workers)
    return grad_in


@dataclass(frozen=True)
class GradcheckReport:
    """Outcome of a finite-difference gradient check."""

    max_rel_err_sigma: float
    max_rel_err_input: float
    passed: bool


def gradcheck(
    x: Volume,
    p: SigmaParams,
    eps: float = 1e-6,
    tol: float = 1e-4,
    seed: int = 0,
    grad_floor: float = 1e-4,
    workers: int = 1,
) -> GradcheckReport:
    """Compare analytic gradients against central finite differences.

    Uses the probe loss ``L = sum(grad_out * output)`` with a fixed random
    ``grad_out`` drawn from ``numpy.random.default_rng(seed)``.  Every
    kernel width and every input voxel is perturbed by +-eps.  The error
    metric per element is ``|a - n| / max(|a|, |n|, grad_floor)``: for
    gradients above ``grad_floor`` in magnitude this is the relative
    error, while smaller ones are judged on the absolute scale
    ``|a - n| < tol * grad_floor`` (finite differences carry ~1e-9
    roundoff noise regardless of how small the true gradient is, so a
    pure relative comparison would reject exact zeros).  Cost is
    O(voxels^2 * window); keep ``x`` small.

    Caveat: the window radius is ceil(5 sigma), so the truncated filter is
    discontinuous in sigma exactly where 5 sigma crosses an integer (sigma
    a multiple of 0.2).  Spatial widths within eps of such a boundary make
    the finite difference straddle a window jump and report a spurious
    mismatch; continuous random draws avoid this with near certainty.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be > 0, got {eps!r}")
    rng = np.random.default_rng(seed)
    grad_out = Volume(x.dims, rng.standard_normal(x.n_voxels))

    def probe(vol: Volume, params: SigmaParams) -> float:
        out = forward(vol, params, workers=workers).output
        return float(np.dot(grad_out.data, out.data))

    cache = forward(x, p, workers=workers)
    sigma_grads, input_grad = backward(cache, x, grad_out, workers=workers)

    def rel_err(analytic: float, numeric: float) -> float:
        return abs(analytic - numeric) / max(abs(analytic), abs(numeric), grad_floor)

    max_err_sigma = 0.0
    base = p.as_array()
    for j, analytic in enumerate(sigma_grads.as_array()):
        plus = base.copy()
        minus = base.copy()
        plus[j] += eps
        minus[j] -= eps
        lp = probe(x, SigmaParams.from_array(plus))
        lm = probe(x, SigmaParams.from_array(minus))
        numeric = (lp - lm) / (2.0 * eps)
        max_err_sigma = max(max_err_sigma, rel_err(float(analytic), numeric))

    max_err_input = 0.0
    flat = x.data
    for i in range(x.n_voxels):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += eps
        minus[i] -= eps
        lp = probe(Volume(x.dims, plus), p)
        lm = probe(Volume(x.dims, minus), p)
        numeric = (lp - lm) / (2.0 * eps)
        analytic = float(input_grad.data[i])
        max_err_input = max(max_err_input, rel_err(analytic, numeric))

    return GradcheckReport(
        max_rel_err_sigma=max_err_sigma,
        max_rel_err_input=max_err_input,
        passed=max_err_sigma < tol and max_err_input < tol,
    )
