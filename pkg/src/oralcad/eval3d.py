"""3D aggregation of per-slice detections, ground-truth matching and FROC analysis."""
from __future__ import annotations

import csv
import math
import os
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ContractError, FormatError, UndefinedMetricError
from .volume_io import VoxelSpacing

DEFAULT_LINK_RADIUS_MM = 5.0
DEFAULT_MIN_PERSISTENCE = 5
MIN_MATCH_RADIUS_MM = 5.0

GT_FIELDS = ("patient_id", "kind", "x_mm", "y_mm", "z_mm", "diameter_mm")
FROC_FIELDS = ("threshold", "sensitivity", "mean_fp", "patient_rate")
CLUSTER_FIELDS = ("patient_id", "kind", "x_mm", "y_mm", "z_mm", "first_slice", "last_slice",
                  "score", "diameter_mm", "member_count")
DETECTION_FIELDS = ("patient_id", "kind", "slice", "x_px", "y_px", "diameter_mm", "score",
                    "x0", "y0", "x1", "y1")


@dataclass(frozen=True)
class Detection2D:
    """One lesion mark on one slice; ``centroid_px`` is ``(x, y)``."""

    slice_index: int
    centroid_px: tuple[float, float]
    equiv_diameter_mm: float
    score: float
    kind: str
    roi_bbox: tuple[int, int, int, int]


@dataclass(frozen=True)
class GroundTruthLesion:
    patient_id: str
    kind: str
    centroid_mm: tuple[float, float, float]
    diameter_mm: float

    def __post_init__(self):
        if not self.diameter_mm > 0:
            raise ContractError("ground-truth diameter must be positive")


@dataclass(frozen=True)
class LesionCluster:
    kind: str
    slice_span: tuple[int, int]
    centroid_mm: tuple[float, float, float]
    mean_score: float
    member_count: int
    diameter_mm: float = 0.0
    patient_id: str = ""


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int

    @property
    def n_truth(self) -> int:
        return self.tp + self.fn


@dataclass(frozen=True)
class FrocPoint:
    threshold: float
    sensitivity: float
    fp_per_patient: float
    patient_rate: float | None = None


# -- clustering -------------------------------------------------------------

def cluster_detections(dets: Iterable[Detection2D], spacing: VoxelSpacing,
                       link_radius_mm: float = DEFAULT_LINK_RADIUS_MM,
                       min_persistence: int = DEFAULT_MIN_PERSISTENCE,
                       patient_id: str = "") -> list[LesionCluster]:
    """Link detections of the same kind on the same or adjacent slices whose
    in-plane centroids are within ``link_radius_mm``; keep linked groups with
    at least ``min_persistence`` members."""
    if not link_radius_mm > 0:
        raise ContractError("link radius must be positive")
    if min_persistence < 1:
        raise ContractError("min_persistence must be >= 1")
    dets = sorted(dets, key=lambda d: (d.kind, d.slice_index, d.centroid_px))
    parent = list(range(len(dets)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    link_px = link_radius_mm / spacing.in_plane_mm
    by_slice = defaultdict(list)
    for i, d in enumerate(dets):
        by_slice[(d.kind, d.slice_index)].append(i)
    for i, d in enumerate(dets):
        for dz in (0, 1):
            for j in by_slice.get((d.kind, d.slice_index + dz), ()):
                if j <= i and dz == 0:
                    continue
                e = dets[j]
                if math.hypot(d.centroid_px[0] - e.centroid_px[0], d.centroid_px[1] - e.centroid_px[1]) <= link_px:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)

    groups = defaultdict(list)
    for i in range(len(dets)):
        groups[find(i)].append(dets[i])
    clusters = []
    for members in groups.values():
        if len(members) < min_persistence:
            continue
        n = len(members)
        px, dz = spacing.in_plane_mm, spacing.slice_thickness_mm
        clusters.append(LesionCluster(
            kind=members[0].kind,
            slice_span=(min(m.slice_index for m in members), max(m.slice_index for m in members)),
            centroid_mm=(
                px * math.fsum(m.centroid_px[0] for m in members) / n,
                px * math.fsum(m.centroid_px[1] for m in members) / n,
                dz * math.fsum(m.slice_index for m in members) / n,
            ),
            mean_score=math.fsum(m.score for m in members) / n,
            member_count=n,
            diameter_mm=max(m.equiv_diameter_mm for m in members),
            patient_id=patient_id,
        ))
    clusters.sort(key=lambda c: (c.slice_span[0], c.kind, c.centroid_mm))
    return clusters


# -- matching and metrics ---------------------------------------------------

def match_radius_mm(truth: GroundTruthLesion) -> float:
    return max(MIN_MATCH_RADIUS_MM, truth.diameter_mm / 2)


def match(clusters: Sequence[LesionCluster], truths: Sequence[GroundTruthLesion]) -> MatchCounts:
    """Greedy one-to-one pairing by ascending 3D centroid distance."""
    pairs = []
    for ci, c in enumerate(clusters):
        for ti, t in enumerate(truths):
            dist = math.dist(c.centroid_mm, t.centroid_mm)
            if dist <= match_radius_mm(t):
                pairs.append((dist, c.slice_span[0], c.centroid_mm, c.kind, t.centroid_mm, t.diameter_mm, ci, ti))
    pairs.sort(key=lambda p: p[:6])
    used_c, used_t = set(), set()
    for *_, ci, ti in pairs:
        if ci in used_c or ti in used_t:
            continue
        used_c.add(ci)
        used_t.add(ti)
    tp = len(used_c)
    return MatchCounts(tp=tp, fp=len(clusters) - tp, fn=len(truths) - tp)


def sensitivity(counts: Iterable[MatchCounts]) -> float:
    counts = list(counts)
    tp = sum(c.tp for c in counts)
    fn = sum(c.fn for c in counts)
    if tp + fn == 0:
        raise UndefinedMetricError("sensitivity is undefined without ground-truth lesions")
    return tp / (tp + fn)


def fp_per_patient(counts: Iterable[MatchCounts], n_patients: int | None = None) -> tuple[float, float | None]:
    """``(mean_fp, patient_rate)``.

    ``mean_fp`` is false-positive clusters per patient. ``patient_rate`` is the
    share of lesion-free patients with at least one false positive, i.e.
    FP / (FP + TN) counted per patient; ``None`` when there is no lesion-free
    patient.
    """
    counts = list(counts)
    n = len(counts) if n_patients is None else n_patients
    if n < 1:
        raise ContractError("n_patients must be >= 1")
    mean_fp = sum(c.fp for c in counts) / n
    normals = [c for c in counts if c.n_truth == 0]
    rate = sum(1 for c in normals if c.fp > 0) / len(normals) if normals else None
    return mean_fp, rate


def froc_curve(per_threshold: Mapping[float, Sequence[MatchCounts]]) -> list[FrocPoint]:
    """One operating point per threshold, ordered by ``fp_per_patient``."""
    if len(per_threshold) < 2:
        raise ContractError("a FROC curve needs at least two thresholds")
    points = []
    for thr, counts in per_threshold.items():
        mean_fp, rate = fp_per_patient(counts)
        points.append(FrocPoint(float(thr), sensitivity(counts), mean_fp, rate))
    points.sort(key=lambda p: (p.fp_per_patient, p.sensitivity))
    return points


def compact_curve(curve: Sequence[FrocPoint]) -> list[FrocPoint]:
    """Drop points repeating the previous operating point, keeping the first
    (strictest) threshold of each run."""
    out: list[FrocPoint] = []
    for p in curve:
        if out and (p.sensitivity, p.fp_per_patient, p.patient_rate) == (
                out[-1].sensitivity, out[-1].fp_per_patient, out[-1].patient_rate):
            continue
        out.append(p)
    return out


def is_monotone(curve: Sequence[FrocPoint]) -> bool:
    """Sensitivity never decreases as ``fp_per_patient`` grows."""
    return all(b.sensitivity >= a.sensitivity and b.fp_per_patient >= a.fp_per_patient
               for a, b in zip(curve, curve[1:]))


def best_sensitivity_at(curve: Sequence[FrocPoint], max_fp: float) -> float:
    """Highest sensitivity among operating points with ``fp_per_patient <= max_fp``."""
    return max((p.sensitivity for p in curve if p.fp_per_patient <= max_fp), default=0.0)


# -- sweeps -----------------------------------------------------------------

def score_sweep(patients: Mapping[str, tuple[Sequence[Detection2D], Sequence[GroundTruthLesion]]],
                thresholds: Iterable[float], spacing: VoxelSpacing,
                link_radius_mm: float = DEFAULT_LINK_RADIUS_MM,
                min_persistence: int = DEFAULT_MIN_PERSISTENCE) -> dict[float, list[MatchCounts]]:
    """Per-patient counts when only detections scoring ``>= t`` are kept."""
    out = {}
    for t in thresholds:
        rows = []
        for pid in sorted(patients):
            dets, truths = patients[pid]
            kept = [d for d in dets if d.score >= t]
            rows.append(match(cluster_detections(kept, spacing, link_radius_mm, min_persistence), truths))
        out[float(t)] = rows
    return out


def persistence_sweep(patients: Mapping[str, tuple[Sequence[Detection2D], Sequence[GroundTruthLesion]]],
                      persistences: Iterable[int], spacing: VoxelSpacing,
                      link_radius_mm: float = DEFAULT_LINK_RADIUS_MM) -> dict[float, list[MatchCounts]]:
    """Per-patient counts for each minimum cluster persistence."""
    out = {}
    for p in persistences:
        rows = []
        for pid in sorted(patients):
            dets, truths = patients[pid]
            rows.append(match(cluster_detections(dets, spacing, link_radius_mm, int(p)), truths))
        out[float(p)] = rows
    return out


DEFAULT_SCORE_THRESHOLDS = (math.inf, 1.0, 0.99, 0.95, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01, 0.0)
DEFAULT_PERSISTENCES = (10 ** 6, 200, 100, 60, 40, 30, 20, 15, 10, 8, 5, 3, 2, 1)


# -- files ------------------------------------------------------------------

PATIENT_DIRECTIVE = "#patient"


def _atomic_write_rows(path, fields, rows, patients: Iterable[str] = ()) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        for pid in patients:
            fh.write(f"{PATIENT_DIRECTIVE}\t{pid}\n")
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(fields)
        w.writerows(rows)
    os.replace(tmp, path)


def _read_rows(path, fields) -> list[dict]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader((ln for ln in fh if not ln.startswith("#")), delimiter="\t")
        if reader.fieldnames is None or tuple(reader.fieldnames) != tuple(fields):
            raise FormatError(f"{path}: expected tab-separated header {'/'.join(fields)}")
        return list(reader)


def declared_patients(path) -> list[str]:
    """Patient ids listed on ``#patient`` lines, plus every id used in a row.

    Lesion-free patients have no truth rows and possibly no detections; the
    directive lines keep them in the evaluated population.
    """
    path = Path(path)
    ids = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    for ln in lines:
        if ln.startswith(PATIENT_DIRECTIVE + "\t"):
            ids.append(ln.split("\t", 1)[1])
    body = [ln for ln in lines if not ln.startswith("#")]
    for ln in body[1:]:
        if ln:
            ids.append(ln.split("\t", 1)[0])
    return list(dict.fromkeys(ids))


def write_ground_truth(truths: Iterable[GroundTruthLesion], path, patients: Iterable[str] = ()) -> None:
    truths = list(truths)
    ids = dict.fromkeys(list(patients) + [t.patient_id for t in truths])
    _atomic_write_rows(path, GT_FIELDS, [
        (t.patient_id, t.kind, *(repr(v) for v in t.centroid_mm), repr(t.diameter_mm)) for t in truths
    ], ids)


def read_ground_truth(path) -> list[GroundTruthLesion]:
    out = []
    for row in _read_rows(path, GT_FIELDS):
        try:
            out.append(GroundTruthLesion(
                row["patient_id"], row["kind"],
                (float(row["x_mm"]), float(row["y_mm"]), float(row["z_mm"])),
                float(row["diameter_mm"]),
            ))
        except (ValueError, TypeError, ContractError) as exc:
            raise FormatError(f"{path}: bad ground-truth row {row} ({exc})") from exc
    return out


def write_froc(curve: Iterable[FrocPoint], path) -> None:
    _atomic_write_rows(path, FROC_FIELDS, [
        (repr(p.threshold), repr(p.sensitivity), repr(p.fp_per_patient),
         "" if p.patient_rate is None else repr(p.patient_rate)) for p in curve
    ])


def read_froc(path) -> list[FrocPoint]:
    return [
        FrocPoint(float(r["threshold"]), float(r["sensitivity"]), float(r["mean_fp"]),
                  float(r["patient_rate"]) if r["patient_rate"] else None)
        for r in _read_rows(path, FROC_FIELDS)
    ]


def write_clusters(clusters: Iterable[LesionCluster], path) -> None:
    _atomic_write_rows(path, CLUSTER_FIELDS, [
        (c.patient_id, c.kind, *(f"{v:.3f}" for v in c.centroid_mm), c.slice_span[0], c.slice_span[1],
         f"{c.mean_score:.6f}", f"{c.diameter_mm:.3f}", c.member_count) for c in clusters
    ])


def read_clusters(path) -> list[LesionCluster]:
    out = []
    for r in _read_rows(path, CLUSTER_FIELDS):
        try:
            out.append(LesionCluster(
                kind=r["kind"], slice_span=(int(r["first_slice"]), int(r["last_slice"])),
                centroid_mm=(float(r["x_mm"]), float(r["y_mm"]), float(r["z_mm"])),
                mean_score=float(r["score"]), member_count=int(r["member_count"]),
                diameter_mm=float(r["diameter_mm"]), patient_id=r["patient_id"],
            ))
        except (ValueError, TypeError) as exc:
            raise FormatError(f"{path}: bad cluster row {r} ({exc})") from exc
    return out


def write_detections(patient_id: str, dets: Iterable[Detection2D], path) -> None:
    """Per-slice marks, scores kept at full precision so sweeps are exact."""
    _atomic_write_rows(path, DETECTION_FIELDS, [
        (patient_id, d.kind, d.slice_index, repr(float(d.centroid_px[0])), repr(float(d.centroid_px[1])),
         repr(float(d.equiv_diameter_mm)), repr(float(d.score)), *d.roi_bbox) for d in dets
    ], [patient_id])


def read_detections(path) -> dict[str, list[Detection2D]]:
    """Detections grouped by patient id, in file order."""
    out: dict[str, list[Detection2D]] = defaultdict(list)
    for r in _read_rows(path, DETECTION_FIELDS):
        try:
            out[r["patient_id"]].append(Detection2D(
                int(r["slice"]), (float(r["x_px"]), float(r["y_px"])), float(r["diameter_mm"]),
                float(r["score"]), r["kind"], (int(r["x0"]), int(r["y0"]), int(r["x1"]), int(r["y1"])),
            ))
        except (ValueError, TypeError) as exc:
            raise FormatError(f"{path}: bad detection row {r} ({exc})") from exc
    return {pid: out.get(pid, []) for pid in declared_patients(path)}
