"""Whole-volume detection: both per-slice detectors plus 3D clustering."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cb_pipeline import candidates_from_mask, denoised_bone_mask, score_candidates
from .config import Settings
from .eval3d import Detection2D, LesionCluster, cluster_detections
from .mlp import MlpModel
from .ob_pipeline import ob_from_mask
from .volume_io import CtVolume, VoxelSpacing


@dataclass(frozen=True)
class VolumeDetections:
    """Per-slice marks and the 3D clusters built from them.

    ``cb`` holds every close-border candidate with its score, whatever the
    threshold; ``clusters`` are built from those passing ``threshold`` and
    from all open-border marks.
    """

    cb: list[Detection2D]
    ob: list[Detection2D]
    clusters: list[LesionCluster]
    threshold: float


def detect_slice(slice_, spacing: VoxelSpacing, model: MlpModel | None, slice_index: int = 0,
                 settings: Settings = Settings(), run_cb: bool = True, run_ob: bool = True,
                 exclude_enclosed: bool = True) -> tuple[list[Detection2D], list[Detection2D]]:
    """``(cb_candidates_scored, ob_detections)`` for one slice, sharing the
    binarization and small closing between both detectors."""
    norm, closed = denoised_bone_mask(slice_, spacing, settings.small_fill_mm)
    cb = []
    if run_cb and model is not None:
        cands = candidates_from_mask(norm, closed, spacing, settings.min_candidate_mm)
        cb = score_candidates(cands, model, spacing, slice_index, settings.glcm_levels)
    ob = []
    if run_ob:
        ob = ob_from_mask(closed, spacing, slice_index, settings.large_fill_mm, settings.min_gap_mm,
                          settings.max_gap_mm, exclude_enclosed)
    return cb, ob


def _work(args):
    data, first, spacing, model, settings, run_cb, run_ob, exclude_enclosed = args
    cb, ob = [], []
    for i, sl in enumerate(data):
        c, o = detect_slice(sl, spacing, model, first + i, settings, run_cb, run_ob, exclude_enclosed)
        cb.extend(c)
        ob.extend(o)
    return cb, ob


def detect_slices(volume: CtVolume, model: MlpModel | None, settings: Settings = Settings(),
                  run_cb: bool = True, run_ob: bool = True, exclude_enclosed: bool = True,
                  workers: int | None = None) -> tuple[list[Detection2D], list[Detection2D]]:
    """Run both detectors over every slice, in slice order.

    ``workers`` > 1 splits the slices into contiguous chunks processed in
    separate processes; the merged result is identical to a serial run.
    """
    spacing = volume.spacing
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    n = volume.n_slices
    if workers <= 1 or n < 2 * workers:
        return _work((volume.data, 0, spacing, model, settings, run_cb, run_ob, exclude_enclosed))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    jobs = [(np.array(volume.data[a:b]), int(a), spacing, model, settings, run_cb, run_ob, exclude_enclosed)
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    cb, ob = [], []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for c, o in pool.map(_work, jobs):
            cb.extend(c)
            ob.extend(o)
    return cb, ob


def detect_volume(volume: CtVolume, model: MlpModel | None, threshold: float | None = None,
                  settings: Settings = Settings(), workers: int | None = None,
                  run_cb: bool = True, run_ob: bool = True, exclude_enclosed: bool = True) -> VolumeDetections:
    threshold = settings.score_threshold if threshold is None else threshold
    cb, ob = detect_slices(volume, model, settings, run_cb, run_ob, exclude_enclosed, workers)
    kept = [d for d in cb if d.score >= threshold] + ob
    clusters = cluster_detections(kept, volume.spacing, settings.link_radius_mm, settings.min_persistence,
                                  patient_id=volume.patient_id)
    return VolumeDetections(cb, ob, clusters, threshold)
