"""Close-border (Type I) lesion detection on single slices.

Candidates are enclosed dark holes of the denoised bone mask; each is cropped
from the normalized slice, described by the 15 features and scored by the MLP.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError, EmptyPoolError
from .eval3d import Detection2D, GroundTruthLesion, match_radius_mm
from .features import DEFAULT_GLCM_LEVELS, Roi, crop_roi, extract_feature_vector
from .imaging import (
    Blob,
    binarize,
    equivalent_diameter_mm,
    extract_holes,
    fill_se_for_diameter,
    kapur_threshold,
    morph_close,
    normalize_slice,
    reject_lower_third,
)
from .mlp import LESION, NORMAL, LabeledSample, MlpModel, predict_scores
from .volume_io import CtVolume, VoxelSpacing

SMALL_FILL_MM = 5.0
MIN_CANDIDATE_MM = 5.0


def denoised_bone_mask(slice_, spacing: VoxelSpacing, fill_mm: float = SMALL_FILL_MM):
    """Normalize, binarize at the maximum-entropy threshold and close.

    Returns ``(normalized, closed_mask)``; ``closed_mask`` is ``None`` for a
    slice with fewer than two gray levels.
    """
    norm = normalize_slice(slice_)
    try:
        t = kapur_threshold(norm)
    except DegenerateInputError:
        return norm, None
    return norm, morph_close(binarize(norm, t), fill_se_for_diameter(fill_mm, spacing))


def candidates_from_mask(norm: np.ndarray, closed: np.ndarray | None, spacing: VoxelSpacing,
                         min_diameter_mm: float = MIN_CANDIDATE_MM) -> list[tuple[Blob, Roi]]:
    if closed is None:
        return []
    holes = [h for h in extract_holes(closed) if equivalent_diameter_mm(h, spacing) > min_diameter_mm]
    holes = reject_lower_third(holes, closed.shape[0])
    return [(h, crop_roi(norm, h)) for h in holes]


def detect_candidates(slice_, spacing: VoxelSpacing, fill_mm: float = SMALL_FILL_MM,
                      min_diameter_mm: float = MIN_CANDIDATE_MM) -> list[tuple[Blob, Roi]]:
    """Enclosed holes wider than ``min_diameter_mm`` outside the bottom third,
    each paired with its ROI crop."""
    norm, closed = denoised_bone_mask(slice_, spacing, fill_mm)
    return candidates_from_mask(norm, closed, spacing, min_diameter_mm)


def score_candidates(candidates: Sequence[tuple[Blob, Roi]], model: MlpModel, spacing: VoxelSpacing,
                     slice_index: int = 0, glcm_levels: int = DEFAULT_GLCM_LEVELS) -> list[Detection2D]:
    """A Detection2D for every candidate, carrying its MLP lesion score."""
    if not candidates:
        return []
    feats = np.stack([extract_feature_vector(roi, glcm_levels) for _, roi in candidates])
    scores = predict_scores(model, feats)
    return [
        Detection2D(slice_index, blob.centroid, equivalent_diameter_mm(blob, spacing), float(s), "CB", blob.bbox)
        for (blob, _), s in zip(candidates, scores)
    ]


def run_cb_slice(slice_, spacing: VoxelSpacing, model: MlpModel, threshold: float = 0.5,
                 slice_index: int = 0, glcm_levels: int = DEFAULT_GLCM_LEVELS) -> list[Detection2D]:
    """Candidates whose lesion score reaches ``threshold``."""
    dets = score_candidates(detect_candidates(slice_, spacing), model, spacing, slice_index, glcm_levels)
    return [d for d in dets if d.score >= threshold]


def overlaps_truth(centroid_px: tuple[float, float], slice_index: int, spacing: VoxelSpacing,
                   truths: Iterable[GroundTruthLesion]) -> bool:
    """Whether a 2D candidate falls on a ground-truth lesion.

    The slice must cut the lesion sphere and the in-plane distance must be
    within the lesion's match radius.
    """
    x = centroid_px[0] * spacing.in_plane_mm
    y = centroid_px[1] * spacing.in_plane_mm
    z = slice_index * spacing.slice_thickness_mm
    for t in truths:
        tx, ty, tz = t.centroid_mm
        if abs(z - tz) <= t.diameter_mm / 2 and math.hypot(x - tx, y - ty) <= match_radius_mm(t):
            return True
    return False


def build_training_pool(cases: Iterable[tuple[CtVolume, Sequence[GroundTruthLesion]]],
                        spacing: VoxelSpacing | None = None,
                        glcm_levels: int = DEFAULT_GLCM_LEVELS) -> list[LabeledSample]:
    """Feature vectors of every candidate in every slice, labeled by overlap
    with the ground truth."""
    pool = []
    for volume, truths in cases:
        sp = spacing or volume.spacing
        for k in range(volume.n_slices):
            for blob, roi in detect_candidates(volume[k], sp):
                label = LESION if overlaps_truth(blob.centroid, k, sp, truths) else NORMAL
                pool.append(LabeledSample(extract_feature_vector(roi, glcm_levels), label))
    if not pool:
        raise EmptyPoolError("no lesion candidates found in any slice")
    return pool
