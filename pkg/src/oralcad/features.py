"""Per-ROI measurements: intensity statistics, co-occurrence texture and Hu moments.

The full feature vector has 15 entries in a fixed order, see FEATURE_NAMES.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateInputError
from .imaging import Blob

FEATURE_NAMES = (
    "mean", "stddev", "skewness", "kurtosis",
    "contrast", "homogeneity", "energy", "entropy",
    "hu1", "hu2", "hu3", "hu4", "hu5", "hu6", "hu7",
)
N_FEATURES = len(FEATURE_NAMES)
DEFAULT_GLCM_LEVELS = 32
ROI_MARGIN_PX = 2


@dataclass(frozen=True, eq=False)
class Roi:
    """Rectangular crop of a normalized slice around a candidate blob."""

    pixels: np.ndarray
    origin: tuple[int, int] = (0, 0)
    source_blob: Blob | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 2 or px.shape[1] < 2:
            raise DegenerateInputError(f"ROI must be at least 2x2, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)


def crop_roi(image: np.ndarray, blob: Blob, margin: int = ROI_MARGIN_PX) -> Roi:
    """Blob bounding box grown by ``margin`` pixels, clamped to the image."""
    h, w = image.shape
    x0, y0, x1, y1 = blob.bbox
    x0, y0 = max(x0 - margin, 0), max(y0 - margin, 0)
    x1, y1 = min(x1 + margin, w - 1), min(y1 + margin, h - 1)
    return Roi(np.array(image[y0:y1 + 1, x0:x1 + 1]), (x0, y0), blob)


def _as_pixels(roi) -> np.ndarray:
    return roi.pixels if isinstance(roi, Roi) else np.asarray(roi)


def first_order_stats(roi) -> tuple[float, float, float, float]:
    """Population mean, standard deviation, skewness and (non-excess) kurtosis.

    A zero-variance ROI reports skewness and kurtosis as 0.
    """
    x = _as_pixels(roi).astype(np.float64).ravel()
    if x.size == 0:
        raise DegenerateInputError("empty ROI")
    mean = x.mean()
    d = x - mean
    m2 = np.mean(d * d)
    if m2 == 0.0:
        return float(mean), 0.0, 0.0, 0.0
    m3 = np.mean(d ** 3)
    m4 = np.mean(d ** 4)
    std = np.sqrt(m2)
    return float(mean), float(std), float(m3 / std ** 3), float(m4 / (m2 * m2))


def quantize(pixels: np.ndarray, levels: int) -> np.ndarray:
    """Map 8-bit intensities onto ``levels`` equal-width bins."""
    return (np.asarray(pixels).astype(np.int64) * levels) // 256


def glcm(roi, levels: int = DEFAULT_GLCM_LEVELS) -> np.ndarray:
    """Symmetric, normalized co-occurrence matrix of horizontal neighbours."""
    px = _as_pixels(roi)
    if levels < 2:
        raise ContractError(f"GLCM needs at least 2 levels, got {levels}")
    if px.ndim != 2 or px.shape[1] < 2:
        raise DegenerateInputError("GLCM needs an ROI at least 2 pixels wide")
    q = quantize(px, levels)
    left, right = q[:, :-1].ravel(), q[:, 1:].ravel()
    counts = np.bincount(left * levels + right, minlength=levels * levels).reshape(levels, levels)
    counts = counts + counts.T
    return counts / counts.sum()


def haralick_features(p: np.ndarray) -> tuple[float, float, float, float]:
    """Contrast, homogeneity, energy and entropy (natural log) of a GLCM."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ContractError(f"GLCM must be square, got shape {p.shape}")
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ContractError("GLCM entries must be non-negative and sum to 1")
    i, j = np.indices(p.shape)
    diff = i - j
    contrast = np.sum(diff * diff * p)
    homogeneity = np.sum(p / (1.0 + np.abs(diff)))
    energy = np.sum(p * p)
    nz = p[p > 0]
    entropy = -np.sum(nz * np.log(nz))
    return float(contrast), float(homogeneity), float(energy), float(entropy)


def hu_moments(roi) -> tuple[float, ...]:
    """Hu's seven invariants from intensity-weighted normalized central moments."""
    img = _as_pixels(roi).astype(np.float64)
    m00 = img.sum()
    if not m00 > 0:
        raise DegenerateInputError("Hu moments need positive total intensity")
    ys = np.arange(img.shape[0], dtype=np.float64)
    xs = np.arange(img.shape[1], dtype=np.float64)
    row_mass = img.sum(axis=1)
    col_mass = img.sum(axis=0)
    dx = xs - (col_mass @ xs) / m00
    dy = ys - (row_mass @ ys) / m00

    def eta(p, q):
        mu = (dy ** q) @ img @ (dx ** p)
        return mu / m00 ** (1 + (p + q) / 2)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)

    a, b = n30 + n12, n21 + n03
    h1 = n20 + n02
    h2 = (n20 - n02) ** 2 + 4 * n11 ** 2
    h3 = (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2
    h4 = a ** 2 + b ** 2
    h5 = (n30 - 3 * n12) * a * (a ** 2 - 3 * b ** 2) + (3 * n21 - n03) * b * (3 * a ** 2 - b ** 2)
    h6 = (n20 - n02) * (a ** 2 - b ** 2) + 4 * n11 * a * b
    h7 = (3 * n21 - n03) * a * (a ** 2 - 3 * b ** 2) - (n30 - 3 * n12) * b * (3 * a ** 2 - b ** 2)
    return tuple(float(v) for v in (h1, h2, h3, h4, h5, h6, h7))


def extract_feature_vector(roi, levels: int = DEFAULT_GLCM_LEVELS) -> np.ndarray:
    """The 15-entry vector ``[first-order x4, Haralick x4, Hu x7]``."""
    vec = np.array(
        first_order_stats(roi)
        + haralick_features(glcm(roi, levels))
        + hu_moments(roi),
        dtype=np.float64,
    )
    if not np.all(np.isfinite(vec)):
        raise DegenerateInputError("feature vector contains non-finite values")
    return vec
