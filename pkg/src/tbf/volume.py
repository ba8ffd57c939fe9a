"""Dense 3D scalar volume with deterministic indexing.

A :class:`Volume` is the unit of all filtering, losses and metrics in this
package.  Voxel data is stored as a flat float64 array in row-major order
with x fastest, i.e. ``flat = ix + nx * (iy + ny * iz)``.  A 2D image is a
volume with ``nz = 1``.  Intensities are arbitrary (typically normalized
attenuation in [0, 1]) and must be finite.

Volumes are immutable once constructed: the backing array is marked
read-only so they can be shared freely between filter evaluations.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

#: (ix, iy, iz) voxel coordinates, each 0 <= i < dim.
VoxelIndex = tuple[int, int, int]


class Volume:
    """Dense 3D grid of float64 intensities.

    Parameters
    ----------
    dims:
        (nx, ny, nz), all >= 1.
    data:
        Flat array of length nx*ny*nz (x fastest) or an array of shape
        (nz, ny, nx).  Copied and locked read-only.
    """

    __slots__ = ("dims", "data")

    def __init__(self, dims: tuple[int, int, int], data) -> None:
        nx, ny, nz = (int(d) for d in dims)
        if nx < 1 or ny < 1 or nz < 1:
            raise ValueError(f"invalid dimensions {dims!r}: all must be >= 1")
        arr = np.array(data, dtype=np.float64).reshape(-1)
        if arr.size != nx * ny * nz:
            raise ValueError(
                f"data length {arr.size} does not match dims {dims!r} "
                f"({nx * ny * nz} voxels)"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("volume data contains NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "dims", (nx, ny, nz))
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Volume is immutable")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Volume":
        """Build a volume from an array indexed ``[iz, iy, ix]``."""
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 2:
            a = a[np.newaxis, :, :]
        if a.ndim != 3:
            raise ValueError(f"expected a 2D or 3D array, got ndim={a.ndim}")
        nz, ny, nx = a.shape
        return cls((nx, ny, nz), a)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def as3d(self) -> np.ndarray:
        """Read-only view of shape (nz, ny, nx); ``view[iz, iy, ix]``."""
        nx, ny, nz = self.dims
        return self.data.reshape(nz, ny, nx)

    def value_at(self, idx: VoxelIndex) -> float:
        return float(self.data[flat_index(self, idx)])

    def allclose(self, other: "Volume", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        return self.dims == other.dims and np.allclose(
            self.data, other.data, rtol=rtol, atol=atol
        )

    def __repr__(self) -> str:
        return f"Volume(dims={self.dims})"


def new_filled(dims: tuple[int, int, int], value: float) -> Volume:
    """Volume of the given dims with every voxel set to ``value``."""
    nx, ny, nz = (int(d) for d in dims)
    if nx < 1 or ny < 1 or nz < 1:
        raise ValueError(f"invalid dimensions {dims!r}: all must be >= 1")
    return Volume((nx, ny, nz), np.full(nx * ny * nz, float(value)))


def flat_index(v: Volume, idx: VoxelIndex) -> int:
    """Flat offset of ``idx``; inverse of :func:`unflatten`."""
    ix, iy, iz = idx
    nx, ny, nz = v.dims
    if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz):
        raise IndexError(f"index {idx!r} out of range for dims {v.dims!r}")
    return ix + nx * (iy + ny * iz)


def unflatten(v: Volume, flat: int) -> VoxelIndex:
    """Voxel coordinates for a flat offset; inverse of :func:`flat_index`."""
    nx, ny, nz = v.dims
    if not 0 <= flat < nx * ny * nz:
        raise IndexError(f"flat index {flat} out of range for dims {v.dims!r}")
    ix = flat % nx
    iy = (flat // nx) % ny
    iz = flat // (nx * ny)
    return (ix, iy, iz)


def clipped_window(
    v: Volume, center: VoxelIndex, radii: tuple[int, int, int]
) -> Iterator[VoxelIndex]:
    """Yield every in-bounds voxel within ``radii`` of ``center``.

    The window is clipped at the volume boundary: out-of-range neighbors are
    simply absent.  The center itself is always yielded.  Iteration order is
    ascending flat index (x fastest), which callers may rely on.
    """
    cx, cy, cz = center
    nx, ny, nz = v.dims
    if not (0 <= cx < nx and 0 <= cy < ny and 0 <= cz < nz):
        raise IndexError(f"center {center!r} out of range for dims {v.dims!r}")
    rx, ry, rz = radii
    if rx < 0 or ry < 0 or rz < 0:
        raise ValueError(f"radii must be >= 0, got {radii!r}")
    for iz in range(max(cz - rz, 0), min(cz + rz, nz - 1) + 1):
        for iy in range(max(cy - ry, 0), min(cy + ry, ny - 1) + 1):
            for ix in range(max(cx - rx, 0), min(cx + rx, nx - 1) + 1):
                yield (ix, iy, iz)
