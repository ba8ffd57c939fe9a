"""Trainable bilateral filter pipelines for volume denoising.

An edge-preserving bilateral filter over dense 3D volumes whose four
width parameters (three spatial, one intensity range) are differentiable
and trained by gradient descent, either against a clean target or
self-supervised.  Filters stack into pipelines; a compiled kernel backend
handles the hot loops with a pure-numpy fallback.
"""

from .kernels import ACTIVE_BACKEND, available_backends
from .layer import (
    ForwardCache,
    GradcheckReport,
    SigmaGrad,
    SigmaParams,
    backward,
    backward_input,
    backward_sigma,
    forward,
    gradcheck,
    kernel_radii,
)
from .metrics import MetricConfig, psnr, ssim, write_eval_report
from .pipeline import (
    FilterPipeline,
    PipelineTape,
    param_count,
    pipeline_backward,
    pipeline_forward,
)
from .training import (
    AdamState,
    LossReport,
    TrainConfig,
    adam_step,
    make_pipeline,
    mse_loss,
    n2v_perturb,
    train_n2v,
    train_supervised,
)
from .volume import Volume, clipped_window, flat_index, new_filled, unflatten
from .data_io import (
    Box,
    Ellipsoid,
    GaussianNoise,
    PhantomSpec,
    PoissonNoise,
    add_noise,
    generate_phantom,
    load_params,
    load_volume,
    random_phantom,
    save_params,
    save_volume,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVE_BACKEND",
    "AdamState",
    "Box",
    "Ellipsoid",
    "FilterPipeline",
    "ForwardCache",
    "GaussianNoise",
    "GradcheckReport",
    "LossReport",
    "MetricConfig",
    "PhantomSpec",
    "PipelineTape",
    "PoissonNoise",
    "SigmaGrad",
    "SigmaParams",
    "TrainConfig",
    "Volume",
    "adam_step",
    "add_noise",
    "available_backends",
    "backward",
    "backward_input",
    "backward_sigma",
    "clipped_window",
    "flat_index",
    "forward",
    "generate_phantom",
    "gradcheck",
    "kernel_radii",
    "load_params",
    "load_volume",
    "make_pipeline",
    "mse_loss",
    "n2v_perturb",
    "new_filled",
    "param_count",
    "pipeline_backward",
    "pipeline_forward",
    "psnr",
    "random_phantom",
    "save_params",
    "save_volume",
    "ssim",
    "train_n2v",
    "train_supervised",
    "unflatten",
    "write_eval_report",
]
