"""Pipeline parameter optimization.

Implements the MSE loss, an Adam optimizer with separate learning rates for
spatial and range widths, supervised training against a clean target, and
self-supervised Noise2Void training.  One iteration processes the full
training volume (no minibatching); with at most a few dozen parameters
there is nothing to batch.

All randomness (Noise2Void masks, perturbations) comes from
``numpy.random.default_rng`` seeded from the config, so training runs are
bit-reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layer import SIGMA_FLOOR, SigmaGrad, SigmaParams
from .pipeline import FilterPipeline, pipeline_backward, pipeline_forward
from .volume import Volume, clipped_window, unflatten

#: Stop when the running-best loss improves by less than this ...
CONVERGENCE_DELTA = 1e-10
#: ... over this many iterations.
CONVERGENCE_WINDOW = 50


@dataclass
class TrainConfig:
    """Optimizer and training-scheme hyperparameters."""

    init_sigma_spatial: float = 0.5
    init_sigma_range: float = 0.01
    lr_spatial: float = 0.01
    lr_range: float = 0.005
    max_iters: int = 5000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    mode: str = "supervised"  # "supervised" | "noise2void"
    n2v_mask_ratio: float = 0.01
    n2v_window: int = 5

    def __post_init__(self):
        if self.init_sigma_spatial <= 0.0 or self.init_sigma_range <= 0.0:
            raise ValueError("initial sigmas must be > 0")
        if self.lr_spatial <= 0.0 or self.lr_range <= 0.0:
            raise ValueError("learning rates must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.adam_eps <= 0.0:
            raise ValueError("adam_eps must be > 0")
        if self.mode not in ("supervised", "noise2void"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.n2v_mask_ratio < 1.0:
            raise ValueError("n2v_mask_ratio must lie in (0, 1)")
        if self.n2v_window < 3 or self.n2v_window % 2 == 0:
            raise ValueError("n2v_window must be odd and >= 3")


@dataclass
class AdamState:
    """Per-parameter Adam moment estimates for a pipeline.

    ``m`` and ``v`` have shape (depth, 4), columns ordered (x, y, z, r).
    """

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_depth(cls, depth: int) -> "AdamState":
        return cls(m=np.zeros((depth, 4)), v=np.zeros((depth, 4)))


@dataclass
class LossReport:
    """One training iteration: loss and the parameters that produced it."""

    iteration: int
    loss: float
    params: list[SigmaParams] = field(default_factory=list)


def make_pipeline(depth: int, cfg: TrainConfig) -> FilterPipeline:
    """Fresh pipeline with every layer at the configured initial widths."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    s, r = cfg.init_sigma_spatial, cfg.init_sigma_range
    return FilterPipeline([SigmaParams(s, s, s, r) for _ in range(depth)])


def mse_loss(
    pred: Volume, target: Volume, mask: np.ndarray | None = None
) -> tuple[float, Volume]:
    """Mean squared error and its gradient with respect to ``pred``.

    ``mask`` is an optional array of distinct flat voxel indices; when
    given, the mean runs over the masked voxels only and the gradient is
    zero elsewhere.
    """
    if pred.dims != target.dims:
        raise ValueError(f"dims mismatch: {pred.dims!r} vs {target.dims!r}")
    diff = pred.data - target.data
    if mask is None:
        n = diff.size
        loss = float(np.dot(diff, diff)) / n
        grad = (2.0 / n) * diff
    else:
        idx = np.asarray(mask, dtype=np.intp).reshape(-1)
        if idx.size == 0:
            raise ValueError("empty mask")
        if idx.min() < 0 or idx.max() >= diff.size:
            raise ValueError("mask index out of range")
        if np.unique(idx).size != idx.size:
            raise ValueError("mask contains duplicate indices")
        d = diff[idx]
        loss = float(np.dot(d, d)) / idx.size
        grad = np.zeros_like(diff)
        grad[idx] = (2.0 / idx.size) * d
    return loss, Volume(pred.dims, grad)


def adam_step(
    state: AdamState, params: FilterPipeline, grads: list[SigmaGrad], cfg: TrainConfig
) -> None:
    """One bias-corrected Adam update, in place.

    Spatial widths use ``lr_spatial``, the range width ``lr_range`` (the
    two groups have disjoint, independent moments, so this equals running
    two optimizers).  Every width is clamped to ``SIGMA_FLOOR`` afterward.
    """
    depth = params.depth
    if state.m.shape != (depth, 4) or len(grads) != depth:
        raise ValueError("optimizer state does not match pipeline depth")
    g = np.stack([sg.as_array() for sg in grads])
    if not np.all(np.isfinite(g)):
        bad = np.argwhere(~np.isfinite(g))[0]
        name = ("sigma_x", "sigma_y", "sigma_z", "sigma_r")[bad[1]]
        raise ValueError(f"non-finite gradient for layer {bad[0]} {name}")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.t += 1
    state.m = b1 * state.m + (1.0 - b1) * g
    state.v = b2 * state.v + (1.0 - b2) * g * g
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    lr = np.array([cfg.lr_spatial, cfg.lr_spatial, cfg.lr_spatial, cfg.lr_range])
    theta = np.stack([p.as_array() for p in params.layers])
    theta -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    np.maximum(theta, SIGMA_FLOOR, out=theta)
    params.layers[:] = [SigmaParams.from_array(row) for row in theta]


def _converged(best_track: list[float]) -> bool:
    if len(best_track) <= CONVERGENCE_WINDOW:
        return False
    return (
        best_track[-1 - CONVERGENCE_WINDOW] - best_track[-1] < CONVERGENCE_DELTA
    )


def train_supervised(
    noisy: Volume, clean: Volume, depth: int, cfg: TrainConfig, workers: int = 1
) -> tuple[FilterPipeline, list[LossReport]]:
    """Optimize a depth-``depth`` pipeline for MSE against ``clean``.

    Runs until ``cfg.max_iters`` or until the running-best loss stalls
    (improvement below ``CONVERGENCE_DELTA`` over ``CONVERGENCE_WINDOW``
    iterations).  Returns the best-loss parameters, not the last iterate.
    """
    if noisy.dims != clean.dims:
        raise ValueError(f"dims mismatch: {noisy.dims!r} vs {clean.dims!r}")
    fp = make_pipeline(depth, cfg)
    state = AdamState.for_depth(depth)
    history: list[LossReport] = []
    best_loss = math.inf
    best_params = list(fp.layers)
    best_track: list[float] = []
    for it in range(cfg.max_iters):
        tape = pipeline_forward(noisy, fp, workers=workers)
        loss, grad = mse_loss(tape.output, clean)
        history.append(LossReport(it, loss, list(fp.layers)))
        if loss < best_loss:
            best_loss = loss
            best_params = list(fp.layers)
        best_track.append(best_loss)
        if _converged(best_track):
            break
        sigma_grads, _ = pipeline_backward(tape, grad, workers=workers)
        adam_step(state, fp, sigma_grads, cfg)
    return FilterPipeline(best_params), history


def n2v_perturb(
    x: Volume, cfg: TrainConfig, rng: np.random.Generator
) -> tuple[Volume, np.ndarray]:
    """Noise2Void perturbation: blind a random subset of voxels.

    Selects ``ceil(ratio * N)`` distinct voxels and replaces each with the
    value of a neighbor drawn uniformly from its clipped
    ``n2v_window``-cube, excluding the voxel itself.  Returns the
    perturbed copy and the flat indices of the replaced voxels; ``x`` is
    untouched.
    """
    n = x.n_voxels
    if n < 2:
        raise ValueError("volume too small to perturb")
    count = math.ceil(cfg.n2v_mask_ratio * n)
    mask = rng.choice(n, size=count, replace=False)
    radius = cfg.n2v_window // 2
    data = x.data.copy()
    nx, ny, _ = x.dims
    for flat in mask:
        center = unflatten(x, int(flat))
        candidates = [
            ix + nx * (iy + ny * iz)
            for (ix, iy, iz) in clipped_window(x, center, (radius, radius, radius))
        ]
        candidates.remove(int(flat))
        pick = candidates[int(rng.integers(len(candidates)))]
        data[flat] = x.data[pick]
    return Volume(x.dims, data), mask


def train_n2v(
    noisy: Volume, depth: int, cfg: TrainConfig, workers: int = 1
) -> tuple[FilterPipeline, list[LossReport]]:
    """Self-supervised Noise2Void training on ``noisy`` alone.

    Each iteration draws a fresh perturbation, filters the perturbed
    volume, and regresses the prediction at the masked voxels against the
    original (non-perturbed) values.  Returns the last iterate: masked
    losses on different random masks are not comparable, so best-loss
    selection would just pick a lucky mask.
    """
    rng = np.random.default_rng(cfg.seed)
    fp = make_pipeline(depth, cfg)
    state = AdamState.for_depth(depth)
    history: list[LossReport] = []
    best_track: list[float] = []
    best_loss = math.inf
    for it in range(cfg.max_iters):
        perturbed, mask = n2v_perturb(noisy, cfg, rng)
        tape = pipeline_forward(perturbed, fp, workers=workers)
        loss, grad = mse_loss(tape.output, noisy, mask)
        history.append(LossReport(it, loss, list(fp.layers)))
        best_loss = min(best_loss, loss)
        best_track.append(best_loss)
        if _converged(best_track):
            break
        sigma_grads, _ = pipeline_backward(tape, grad, workers=workers)
        adam_step(state, fp, sigma_grads, cfg)
    return FilterPipeline(list(fp.layers)), history
