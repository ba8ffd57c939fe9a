"""Stacks of bilateral filter layers with chain-rule gradient propagation.

A pipeline applies its layers in sequence; each layer holds its own
independent four kernel widths, so a depth-d pipeline has 4*d trainable
parameters.  The forward pass records every layer's cache on a tape; the
backward pass walks the tape in reverse, feeding each layer's input
gradient to the one before it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .layer import ForwardCache, SigmaGrad, SigmaParams, backward, forward
from .volume import Volume


@dataclass
class FilterPipeline:
    """Ordered sequence of filter layers (length >= 1)."""

    layers: list[SigmaParams] = field(default_factory=list)

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("pipeline needs at least one layer")

    @property
    def depth(self) -> int:
        return len(self.layers)


def param_count(fp: FilterPipeline) -> int:
    """Number of trainable parameters: 4 per layer."""
    return 4 * fp.depth


class PipelineTape:
    """Execution record of one pipeline forward pass.

    ``caches[i].source`` is the input of layer i; layer i's output object is
    reused as layer i+1's source, which :func:`pipeline_backward` verifies.
    """

    __slots__ = ("caches", "output")

    def __init__(self, caches: list[ForwardCache]):
        self.caches = caches
        self.output: Volume = caches[-1].output


def pipeline_forward(x: Volume, fp: FilterPipeline, workers: int = 1) -> PipelineTape:
    """Apply every layer in order; returns the tape of per-layer caches."""
    caches = []
    current = x
    for p in fp.layers:
        cache = forward(current, p, workers=workers)
        caches.append(cache)
        current = cache.output
    return PipelineTape(caches)


def pipeline_backward(
    tape: PipelineTape, grad_out: Volume, workers: int = 1
) -> tuple[list[SigmaGrad], Volume]:
    """Backpropagate ``grad_out`` through the taped layers.

    Returns the per-layer kernel-width gradients (in layer order) and the
    gradient with respect to the pipeline input.
    """
    if grad_out.dims != tape.output.dims:
        raise ValueError(
            f"grad_out dims {grad_out.dims!r} do not match output dims "
            f"{tape.output.dims!r}"
        )
    for earlier, later in zip(tape.caches, tape.caches[1:]):
        if later.source is not earlier.output:
            raise ValueError("stale tape: layer caches do not chain")

    sigma_grads: list[SigmaGrad] = [None] * len(tape.caches)  # type: ignore[list-item]
    grad = grad_out
    for i in range(len(tape.caches) - 1, -1, -1):
        cache = tape.caches[i]
        sigma_grads[i], grad = backward(cache, cache.source, grad, workers=workers)
    return sigma_grads, grad
