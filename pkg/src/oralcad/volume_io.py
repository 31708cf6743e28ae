"""Raw 16-bit CT volume I/O and physical calibration."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError

RAW_DTYPE = np.dtype("<u2")


@dataclass(frozen=True)
class VoxelSpacing:
    """Physical voxel size in millimetres.

    ``in_plane_mm`` is the isotropic pixel pitch inside a slice and
    ``slice_thickness_mm`` the distance between consecutive slices.
    """

    in_plane_mm: float = 0.2
    slice_thickness_mm: float = 0.2

    def __post_init__(self):
        if not (self.in_plane_mm > 0 and self.slice_thickness_mm > 0):
            raise ContractError(
                f"voxel spacing must be strictly positive, got {self.in_plane_mm!r}, "
                f"{self.slice_thickness_mm!r}"
            )


@dataclass(frozen=True, eq=False)
class CtVolume:
    """An ordered stack of 16-bit slices, shape ``(n_slices, height, width)``."""

    data: np.ndarray
    spacing: VoxelSpacing = field(default_factory=VoxelSpacing)
    patient_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data).view()  # read-only view; the caller keeps write access
        if data.ndim != 3 or data.shape[0] < 1:
            raise ContractError(f"volume must be a non-empty 3D stack, got shape {data.shape}")
        if data.shape[1] < 16 or data.shape[2] < 16:
            raise ContractError(f"slices must be at least 16x16, got {data.shape[1:]}")
        if data.dtype != np.uint16:
            if not (np.issubdtype(data.dtype, np.integer) and data.min() >= 0 and data.max() <= 65535):
                raise ContractError(f"voxel values must be unsigned 16-bit integers, got {data.dtype}")
            data = data.astype(np.uint16)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_slices(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def __len__(self):
        return self.n_slices

    def __getitem__(self, k) -> np.ndarray:
        return self.data[k]

    def __iter__(self):
        return iter(self.data)


def mm_to_px(length_mm: float, spacing: VoxelSpacing) -> float:
    if length_mm < 0:
        raise ContractError(f"length must be non-negative, got {length_mm}")
    return length_mm / spacing.in_plane_mm


def load_raw_volume(path, width: int, height: int, n_slices: int,
                    spacing: VoxelSpacing | None = None, patient_id: str | None = None) -> CtVolume:
    """Read a headerless little-endian uint16 volume, slice-major and row-major.

    Raises FormatError when the file size differs from
    ``width * height * n_slices * 2`` bytes.
    """
    path = Path(path)
    expected = width * height * n_slices * RAW_DTYPE.itemsize
    actual = os.path.getsize(path)
    if actual != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {width}x{height}x{n_slices} uint16, "
            f"found {actual} bytes"
        )
    data = np.fromfile(path, dtype=RAW_DTYPE).reshape(n_slices, height, width)
    return CtVolume(
        data.astype(np.uint16, copy=False),
        spacing if spacing is not None else VoxelSpacing(),
        patient_id if patient_id is not None else path.stem,
    )


def save_raw_volume(volume: CtVolume, path) -> None:
    """Write ``volume`` in the same layout :func:`load_raw_volume` reads."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    np.ascontiguousarray(volume.data, dtype=RAW_DTYPE).tofile(tmp)
    os.replace(tmp, path)
