"""Pixel-level primitives shared by the close-border and open-border pipelines.

Images are plain numpy arrays indexed ``[row, col]`` (``y`` down, ``x`` right):

* 16-bit CT slices: ``uint16``
* normalized slices: ``uint8``
* binary images: ``bool`` (``True`` = foreground / bone)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import cv2
import numpy as np
from scipy import ndimage as ndi

from .errors import ContractError, DegenerateInputError
from .volume_io import VoxelSpacing, mm_to_px

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


# -- contrast ---------------------------------------------------------------

def normalize_slice(slice_: np.ndarray) -> np.ndarray:
    """Linearly stretch a slice onto 0..255 with round-half-up.

    A constant slice maps to all zeros.
    """
    a = np.asarray(slice_).astype(np.int64)
    lo, hi = int(a.min()), int(a.max())
    if hi == lo:
        return np.zeros(a.shape, dtype=np.uint8)
    span = hi - lo
    # floor(255 * (v - lo) / span + 1/2) in exact integer arithmetic
    return ((510 * (a - lo) + span) // (2 * span)).astype(np.uint8)


# -- thresholding -----------------------------------------------------------

TIE_TOL = 1e-12


def kapur_threshold(image: np.ndarray) -> int:
    """Maximum-entropy threshold of an 8-bit image.

    Returns the ``t`` maximizing the summed Shannon entropies of the
    class-conditional histograms of ``{v <= t}`` and ``{v > t}``. Only
    thresholds leaving both classes non-empty are considered; ties go to
    the smallest ``t``.
    """
    hist = np.bincount(np.asarray(image, dtype=np.uint8).ravel(), minlength=256).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateInputError("maximum-entropy threshold needs at least two distinct gray values")
    return _kapur_from_hist(hist)


def _kapur_from_hist(hist: np.ndarray) -> int:
    # Class entropy from counts: H = ln S - (sum h ln h) / S.
    # Empty bins add exact zeros to the cumulative sums, so runs of empty
    # bins yield exactly tied objectives and argmax picks the first.
    hlogh = np.zeros_like(hist)
    nz = hist > 0
    hlogh[nz] = hist[nz] * np.log(hist[nz])
    s_bg = np.cumsum(hist)
    c_bg = np.cumsum(hlogh)
    total = s_bg[-1]
    s_fg = total - s_bg
    c_fg = c_bg[-1] - c_bg
    valid = (s_bg > 0) & (s_fg > 0)
    obj = np.full(256, -np.inf)
    sb, sf = s_bg[valid], s_fg[valid]
    obj[valid] = (np.log(sb) - c_bg[valid] / sb) + (np.log(sf) - c_fg[valid] / sf)
    # mirrored class histograms tie exactly but can round apart
    best = obj.max()
    return int(np.flatnonzero(obj >= best - TIE_TOL * max(1.0, abs(best)))[0])


def binarize(image: np.ndarray, threshold: int) -> np.ndarray:
    if not 0 <= threshold <= 255:
        raise ContractError(f"threshold must lie in [0, 255], got {threshold}")
    return np.asarray(image) > threshold


# -- morphology -------------------------------------------------------------

@dataclass(frozen=True)
class StructuringElement:
    """Discrete disk ``{(dx, dy) : dx^2 + dy^2 <= r^2}``."""

    radius_px: int

    def __post_init__(self):
        if self.radius_px < 1:
            raise ContractError(f"structuring element radius must be >= 1 px, got {self.radius_px}")

    @cached_property
    def offsets(self) -> np.ndarray:
        r = self.radius_px
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        keep = dx * dx + dy * dy <= r * r
        return np.stack([dx[keep], dy[keep]], axis=1)

    def footprint(self) -> np.ndarray:
        r = self.radius_px
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        return dx * dx + dy * dy <= r * r


def fill_se_for_diameter(diameter_mm: float, spacing: VoxelSpacing) -> StructuringElement:
    """Disk whose closing fills holes up to ``diameter_mm`` across."""
    if diameter_mm <= 0:
        raise ContractError(f"fill diameter must be positive, got {diameter_mm}")
    return StructuringElement(math.ceil(mm_to_px(diameter_mm, spacing) / 2))


def _sq_dist_to_true(mask: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance from every pixel to the nearest True pixel.

    Pixels outside the array are never sources. With no True pixel at all the
    result is huge everywhere.
    """
    d = cv2.distanceTransform((~mask).astype(np.uint8), cv2.DIST_L2, cv2.DIST_MASK_PRECISE)
    return np.square(d, dtype=np.float64)


def dilate(image: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Binary dilation by a disk; pixels outside the image count as background."""
    image = np.asarray(image, dtype=bool)
    r2 = se.radius_px ** 2
    return _sq_dist_to_true(image) <= r2 + 0.5


def erode(image: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Binary erosion by a disk; pixels outside the image count as background."""
    image = np.asarray(image, dtype=bool)
    r = se.radius_px
    padded = np.pad(image, 1, constant_values=False)
    out = _sq_dist_to_true(~padded) > r * r + 0.5
    return out[1:-1, 1:-1]


def morph_close(image: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Dilation then erosion, computed as if the image sat on an infinite
    background (padded with ``False``) and cropped back afterwards.

    The result is extensive, idempotent and monotone.
    """
    image = np.asarray(image, dtype=bool)
    out = np.zeros_like(image)
    rows = np.flatnonzero(image.any(axis=1))
    if rows.size == 0:
        return out
    cols = np.flatnonzero(image.any(axis=0))
    # closing by a disk never leaves the bounding box of the input
    y0, y1, x0, x1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    r = se.radius_px
    r2 = r * r + 0.5
    canvas = np.pad(image[y0:y1, x0:x1], r, constant_values=False)
    dil = _sq_dist_to_true(canvas) <= r2
    closed = _sq_dist_to_true(~dil) > r2
    out[y0:y1, x0:x1] = closed[r:-r, r:-r]
    return out


# -- regions ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Blob:
    """A labeled 8-connected region.

    ``centroid`` and ``bbox`` are in ``(x, y)`` order; ``bbox`` is inclusive
    ``(x_min, y_min, x_max, y_max)``.
    """

    label: int
    xs: np.ndarray
    ys: np.ndarray

    @property
    def area_px(self) -> int:
        return int(self.xs.size)

    @property
    def centroid(self) -> tuple[float, float]:
        return float(self.xs.mean()), float(self.ys.mean())

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        return int(self.xs.min()), int(self.ys.min()), int(self.xs.max()), int(self.ys.max())

    @property
    def pixel_list(self) -> list[tuple[int, int]]:
        return list(zip(self.xs.tolist(), self.ys.tolist()))

    def mask(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        m[self.ys, self.xs] = True
        return m


def _blobs_from_labels(labels: np.ndarray, keep: np.ndarray | None = None) -> list[Blob]:
    flat = labels.ravel()
    n = int(flat.max()) if flat.size else 0
    if n == 0:
        return []
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n + 1)
    starts = np.concatenate([[0], np.cumsum(counts)])
    width = labels.shape[1]
    blobs = []
    for lab in range(1, n + 1):
        if keep is not None and not keep[lab]:
            continue
        idx = order[starts[lab]:starts[lab + 1]]
        ys, xs = np.divmod(idx, width)
        blobs.append(Blob(lab, xs, ys))
    blobs.sort(key=lambda b: -b.area_px)
    return blobs


def connected_components(image: np.ndarray, polarity: str = "foreground") -> list[Blob]:
    """8-connected components of the foreground (or background) pixels,
    largest first."""
    image = np.asarray(image, dtype=bool)
    if polarity == "foreground":
        target = image
    elif polarity == "background":
        target = ~image
    else:
        raise ContractError(f"polarity must be 'foreground' or 'background', got {polarity!r}")
    labels, _ = ndi.label(target, structure=EIGHT_CONNECTED)
    return _blobs_from_labels(labels)


def extract_holes(image: np.ndarray) -> list[Blob]:
    """Background components that cannot reach the image border."""
    image = np.asarray(image, dtype=bool)
    labels, n = ndi.label(~image, structure=EIGHT_CONNECTED)
    if n == 0:
        return []
    keep = np.ones(n + 1, dtype=bool)
    keep[0] = False
    for edge in (labels[0], labels[-1], labels[:, 0], labels[:, -1]):
        keep[edge] = False
    if not keep.any():
        return []
    return _blobs_from_labels(labels, keep)


def equivalent_diameter_mm(blob: Blob, spacing: VoxelSpacing) -> float:
    """Diameter of the circle with the same physical area as ``blob``."""
    area_mm2 = blob.area_px * spacing.in_plane_mm ** 2
    return 2.0 * math.sqrt(area_mm2 / math.pi)


def reject_lower_third(blobs: list[Blob], image_height: int) -> list[Blob]:
    """Drop blobs whose centroid lies strictly below two thirds of the height."""
    if image_height < 3:
        raise ContractError(f"image height must be >= 3, got {image_height}")
    limit = 2.0 * image_height / 3.0
    return [b for b in blobs if b.centroid[1] <= limit]
