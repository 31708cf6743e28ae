"""Open-border (Type II) lesion detection: rule-based morphological subtraction.

Steps on one slice:

1. grayscale slice
2. maximum-entropy binarization of the normalized slice
3. closing that fills openings under 5 mm, then the bottom third is cleared
4. closing of step 3 that fills openings up to 30 mm
5. step 4 minus step 3; keep regions strictly between 5 and 30 mm across
6. one detection at each surviving region centroid
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage as ndi

from .cb_pipeline import SMALL_FILL_MM, denoised_bone_mask
from .errors import ContractError
from .eval3d import Detection2D
from .imaging import EIGHT_CONNECTED, connected_components, equivalent_diameter_mm, fill_se_for_diameter, morph_close
from .volume_io import VoxelSpacing

LARGE_FILL_MM = 30.0
MIN_GAP_MM = 5.0
MAX_GAP_MM = 30.0


def subtract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pixels set in ``a`` and clear in ``b``."""
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ContractError(f"cannot subtract masks of shapes {a.shape} and {b.shape}")
    return a & ~b


def clear_bottom_third(mask: np.ndarray) -> np.ndarray:
    """Copy of ``mask`` with rows strictly below two thirds of the height cleared."""
    out = mask.copy()
    h = mask.shape[0]
    first = int(np.floor(2.0 * h / 3.0)) + 1
    out[first:] = False
    return out


def _enclosed_background(mask: np.ndarray) -> np.ndarray:
    labels, n = ndi.label(~mask, structure=EIGHT_CONNECTED)
    border = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    enclosed = np.ones(n + 1, dtype=bool)
    enclosed[border] = False
    enclosed[0] = False
    return enclosed[labels]


def ob_from_mask(step2_closed: np.ndarray | None, spacing: VoxelSpacing, slice_index: int = 0,
                 large_fill_mm: float = LARGE_FILL_MM, min_gap_mm: float = MIN_GAP_MM,
                 max_gap_mm: float = MAX_GAP_MM, exclude_enclosed: bool = False) -> list[Detection2D]:
    """Steps 3 (bottom-third clearing) to 6, given the small-closing output."""
    if step2_closed is None:
        return []
    step3 = clear_bottom_third(step2_closed)
    step4 = morph_close(step3, fill_se_for_diameter(large_fill_mm, spacing))
    diff = subtract(step4, step3)
    regions = connected_components(diff)
    if exclude_enclosed and regions:
        enclosed = _enclosed_background(step3)
        regions = [r for r in regions if not enclosed[r.ys[0], r.xs[0]]]
    out = []
    for r in regions:
        d = equivalent_diameter_mm(r, spacing)
        if min_gap_mm < d < max_gap_mm:
            out.append(Detection2D(slice_index, r.centroid, d, 1.0, "OB", r.bbox))
    return out


def run_ob_slice(slice_, spacing: VoxelSpacing, slice_index: int = 0, *,
                 small_fill_mm: float = SMALL_FILL_MM, large_fill_mm: float = LARGE_FILL_MM,
                 min_gap_mm: float = MIN_GAP_MM, max_gap_mm: float = MAX_GAP_MM,
                 exclude_enclosed: bool = False) -> list[Detection2D]:
    """Open-border detections on one slice, each with score 1.0.

    With ``exclude_enclosed`` set, regions lying in holes already closed off
    in step 3 are dropped; those belong to the close-border detector.
    """
    _, closed = denoised_bone_mask(slice_, spacing, small_fill_mm)
    return ob_from_mask(closed, spacing, slice_index, large_fill_mm, min_gap_mm, max_gap_mm, exclude_enclosed)
