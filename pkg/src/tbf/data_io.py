"""Persistence and synthetic data.

Volumes are stored as a pair of files, ``<base>.json`` (header: dims,
dtype, layout) and ``<base>.raw`` (little-endian 32-bit floats, x fastest).
Compute stays in float64; storage is f32 for compactness, so a save/load
round trip is lossless only at 32-bit precision.

Also provides piecewise-constant phantoms (ellipsoids and boxes on a flat
background) and Gaussian/Poisson noise models, both seeded, standing in
for scan data.  Phantom intensities live in [0, 1] so the default range
width of 0.01 is a meaningful starting point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .layer import SigmaParams
from .pipeline import FilterPipeline
from .training import LossReport
from .volume import Volume

_ORDER_TAG = "x-fastest row-major"


def _base_path(path: str | Path) -> Path:
    p = Path(path)
    if p.suffix in (".json", ".raw"):
        p = p.with_suffix("")
    return p


def save_volume(vol: Volume, path: str | Path) -> None:
    """Write ``<base>.json`` + ``<base>.raw`` for a volume."""
    base = _base_path(path)
    header = {"dims": list(vol.dims), "dtype": "f32", "order": _ORDER_TAG}
    base.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")
    base.with_suffix(".raw").write_bytes(
        np.ascontiguousarray(vol.data, dtype="<f4").tobytes()
    )


def load_volume(path: str | Path) -> Volume:
    """Read a volume pair written by :func:`save_volume`.

    Rejects malformed headers, header/payload size mismatches, and
    non-finite payloads.
    """
    base = _base_path(path)
    header_path = base.with_suffix(".json")
    raw_path = base.with_suffix(".raw")
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed volume header {header_path}: {exc}") from exc
    dims = header.get("dims")
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or not all(isinstance(d, int) and d >= 1 for d in dims)
    ):
        raise ValueError(f"invalid dims in {header_path}: {dims!r}")
    if header.get("dtype") != "f32":
        raise ValueError(f"unsupported dtype in {header_path}: {header.get('dtype')!r}")
    if header.get("order") != _ORDER_TAG:
        raise ValueError(f"unsupported order in {header_path}: {header.get('order')!r}")
    payload = raw_path.read_bytes()
    expected = 4 * dims[0] * dims[1] * dims[2]
    if len(payload) != expected:
        raise ValueError(
            f"{raw_path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{raw_path}: payload contains non-finite values")
    return Volume(tuple(dims), data)


def save_params(fp: FilterPipeline, path: str | Path) -> None:
    """Write pipeline widths as JSON, one record per layer, full precision."""
    doc = {"layers": [p.as_dict() for p in fp.layers]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_params(path: str | Path) -> FilterPipeline:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed params file {path}: {exc}") from exc
    layers = doc.get("layers")
    if not isinstance(layers, list) or not layers:
        raise ValueError(f"params file {path} has no layers")
    parsed = []
    for i, rec in enumerate(layers):
        try:
            parsed.append(
                SigmaParams(
                    rec["sigma_x"], rec["sigma_y"], rec["sigma_z"], rec["sigma_r"]
                )
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise ValueError(f"params file {path}, layer {i}: {exc}") from exc
    return FilterPipeline(parsed)


def save_history(history: list[LossReport], path: str | Path) -> None:
    """Write the training trace as CSV: iteration, loss, then per-layer
    widths (sigma_x_0, sigma_y_0, ... in layer order), full precision."""
    if not history:
        raise ValueError("empty history")
    depth = len(history[0].params)
    cols = ["iteration", "loss"]
    for i in range(depth):
        cols += [f"sigma_x_{i}", f"sigma_y_{i}", f"sigma_z_{i}", f"sigma_r_{i}"]
    lines = [",".join(cols)]
    for rep in history:
        cells = [str(rep.iteration), repr(rep.loss)]
        for p in rep.params:
            cells += [repr(p.sigma_x), repr(p.sigma_y), repr(p.sigma_z), repr(p.sigma_r)]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def _check_unit(value: float, what: str) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{what} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid in voxel coordinates."""

    center: tuple[float, float, float]  # (cx, cy, cz)
    semi_axes: tuple[float, float, float]
    intensity: float

    def __post_init__(self):
        if any(a <= 0 for a in self.semi_axes):
            raise ValueError("semi_axes must be > 0")
        _check_unit(self.intensity, "intensity")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with inclusive voxel-coordinate bounds."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    intensity: float

    def __post_init__(self):
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValueError("box lo must not exceed hi")
        _check_unit(self.intensity, "intensity")


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for a piecewise-constant test volume."""

    dims: tuple[int, int, int]
    primitives: tuple = field(default_factory=tuple)
    background: float = 0.0
    seed: int = 0

    def __post_init__(self):
        _check_unit(self.background, "background")


def generate_phantom(spec: PhantomSpec) -> Volume:
    """Rasterize a phantom; later primitives overwrite earlier ones."""
    nx, ny, nz = spec.dims
    arr = np.full((nz, ny, nx), float(spec.background))
    gz, gy, gx = np.ogrid[0:nz, 0:ny, 0:nx]
    for prim in spec.primitives:
        if isinstance(prim, Ellipsoid):
            cx, cy, cz = prim.center
            ax, ay, az = prim.semi_axes
            mask = (
                ((gx - cx) / ax) ** 2
                + ((gy - cy) / ay) ** 2
                + ((gz - cz) / az) ** 2
            ) <= 1.0
        elif isinstance(prim, Box):
            mask = (
                (gx >= prim.lo[0]) & (gx <= prim.hi[0])
                & (gy >= prim.lo[1]) & (gy <= prim.hi[1])
                & (gz >= prim.lo[2]) & (gz <= prim.hi[2])
            )
        else:
            raise ValueError(f"unknown primitive {type(prim).__name__}")
        arr[mask] = prim.intensity
    return Volume(spec.dims, arr.reshape(-1))


def random_phantom(
    dims: tuple[int, int, int],
    n_primitives: int = 6,
    seed: int = 0,
    background: float = 0.1,
) -> PhantomSpec:
    """Seeded random mix of ellipsoids and boxes, intensities in [0.2, 1]."""
    if n_primitives < 0:
        raise ValueError("n_primitives must be >= 0")
    rng = np.random.default_rng(seed)
    nx, ny, nz = dims
    prims = []
    for _ in range(n_primitives):
        center = tuple(float(rng.uniform(0.2 * n, 0.8 * n)) for n in (nx, ny, nz))
        # Degenerate axes (dim 1) get a unit extent so 2D volumes work.
        size = tuple(
            float(rng.uniform(2.0, max(n / 3.0, 2.5))) if n > 1 else 1.0
            for n in (nx, ny, nz)
        )
        intensity = float(rng.uniform(0.2, 1.0))
        if rng.random() < 0.5:
            prims.append(Ellipsoid(center, size, intensity))
        else:
            lo = tuple(max(c - s, 0.0) for c, s in zip(center, size))
            hi = tuple(min(c + s, n - 1.0) for c, s, n in zip(center, size, (nx, ny, nz)))
            prims.append(Box(lo, hi, intensity))
    return PhantomSpec(dims, tuple(prims), background, seed)


@dataclass(frozen=True)
class GaussianNoise:
    """Additive iid N(0, sigma^2)."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0.0 or not math.isfinite(self.sigma):
            raise ValueError("sigma must be finite and >= 0")


@dataclass(frozen=True)
class PoissonNoise:
    """Counting noise: y = Poisson(photons * x) / photons."""

    photons: float

    def __post_init__(self):
        if self.photons <= 0.0 or not math.isfinite(self.photons):
            raise ValueError("photons must be finite and > 0")


def add_noise(x: Volume, model, seed: int) -> Volume:
    """Seeded noisy copy of ``x``; the input volume is untouched."""
    rng = np.random.default_rng(seed)
    if isinstance(model, GaussianNoise):
        if model.sigma == 0.0:
            return Volume(x.dims, x.data.copy())
        noisy = x.data + rng.normal(0.0, model.sigma, size=x.n_voxels)
    elif isinstance(model, PoissonNoise):
        if np.any(x.data < 0.0):
            raise ValueError("Poisson noise requires non-negative intensities")
        noisy = rng.poisson(model.photons * x.data).astype(np.float64) / model.photons
    else:
        raise ValueError(f"unknown noise model {type(model).__name__}")
    return Volume(x.dims, noisy)
