"""Synthetic mandible-like CT phantoms with implanted lesions and exact ground truth.

Each axial slice shows a horseshoe-shaped bone band: a half annulus over the
top of the image continued by two straight arms running down to the bottom
edge. The band has a bright cortical shell around darker trabecular bone and
sits on a dark background. The geometry is identical in every slice.

Implants:

* ``CB`` lesion: a dark sphere wrapped in a bright cortical-level shell.
* ``OB`` lesion: the whole band thickness erased over an along-band stretch
  whose length follows a sphere profile through the slices (a broken border).
* cavity: a normal dark marrow space with no rim. Cavities are anatomy,
  not lesions, and emit no ground truth.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SpecError
from .eval3d import GroundTruthLesion
from .volume_io import CtVolume, VoxelSpacing

FULL_SCALE = 65535.0
CB, OB = "CB", "OB"


@dataclass(frozen=True)
class LesionSpec:
    kind: str
    centroid_mm: tuple[float, float, float]
    diameter_mm: float


@dataclass(frozen=True)
class CavitySpec:
    centroid_mm: tuple[float, float, float]
    diameter_mm: float


@dataclass(frozen=True)
class ArcGeometry:
    """Horseshoe band geometry (mm) and tissue levels (fractions of 16-bit full scale)."""

    center_mm: tuple[float, float] = (51.2, 48.0)
    inner_radius_mm: float = 24.0
    outer_radius_mm: float = 40.0
    cortical_thickness_mm: float = 2.0
    background_level: float = 0.05
    trabecular_level: float = 0.35
    cortical_level: float = 0.80
    lesion_level: float = 0.05
    cavity_level: float = 0.05
    rim_thickness_mm: float = 1.0

    @property
    def mid_radius_mm(self) -> float:
        return 0.5 * (self.inner_radius_mm + self.outer_radius_mm)


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    width: int = 512
    height: int = 512
    n_slices: int = 100
    spacing: VoxelSpacing = field(default_factory=VoxelSpacing)
    lesions: tuple[LesionSpec, ...] = ()
    cavities: tuple[CavitySpec, ...] = ()
    noise_sigma: float = 0.02
    arc: ArcGeometry = field(default_factory=ArcGeometry)
    patient_id: str = "phantom"
    cb_diameter_range_mm: tuple[float, float] = (7.5, 20.0)
    ob_diameter_range_mm: tuple[float, float] = (10.0, 25.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        if not isinstance(d, dict):
            raise SpecError(f"phantom spec must be a mapping, got {type(d).__name__}")
        d = dict(d)
        try:
            if "spacing" in d:
                d["spacing"] = VoxelSpacing(**d["spacing"])
            if "arc" in d:
                arc = dict(d["arc"])
                arc["center_mm"] = tuple(arc.get("center_mm", ArcGeometry.center_mm))
                d["arc"] = ArcGeometry(**arc)
            d["lesions"] = tuple(
                LesionSpec(l["kind"], tuple(l["centroid_mm"]), l["diameter_mm"])
                for l in d.get("lesions", ())
            )
            d["cavities"] = tuple(
                CavitySpec(tuple(c["centroid_mm"]), c["diameter_mm"]) for c in d.get("cavities", ())
            )
            for key in ("cb_diameter_range_mm", "ob_diameter_range_mm"):
                if key in d:
                    d[key] = tuple(d[key])
            return cls(**d)
        except (TypeError, KeyError, ValueError) as exc:
            raise SpecError(f"invalid phantom spec: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise SpecError(f"phantom spec is not valid JSON: {exc}") from exc


class _BandFrame:
    """Per-pixel band coordinates: radial offset from the band axis and
    signed arc length along the centerline (0 at the top of the arch)."""

    def __init__(self, spec: PhantomSpec):
        arc, px = spec.arc, spec.spacing.in_plane_mm
        ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
        self.x_mm, self.y_mm = xs * px, ys * px
        self.rad, self.s = band_coordinates(arc, self.x_mm, self.y_mm)
        self.band = (self.rad >= arc.inner_radius_mm) & (self.rad <= arc.outer_radius_mm)
        tc = arc.cortical_thickness_mm
        self.cortical = self.band & (
            (self.rad < arc.inner_radius_mm + tc) | (self.rad > arc.outer_radius_mm - tc)
        )


def band_coordinates(arc: ArcGeometry, x_mm, y_mm):
    """``(radial distance, arc length)`` of points relative to the band axis."""
    cx, cy = arc.center_mm
    x_mm, y_mm = np.asarray(x_mm, dtype=np.float64), np.asarray(y_mm, dtype=np.float64)
    dx, dy = x_mm - cx, y_mm - cy
    upper = dy < 0
    rad = np.where(upper, np.hypot(dx, dy), np.abs(dx))
    phi = np.arctan2(dx, -dy)
    quarter = arc.mid_radius_mm * math.pi / 2
    s = np.where(upper, arc.mid_radius_mm * phi, np.sign(dx) * (quarter + dy))
    return rad, s


def centerline_point(arc: ArcGeometry, s: float) -> tuple[float, float]:
    """Point on the band axis at signed arc length ``s`` (mm)."""
    cx, cy = arc.center_mm
    rm = arc.mid_radius_mm
    quarter = rm * math.pi / 2
    if abs(s) <= quarter:
        phi = s / rm
        return cx + rm * math.sin(phi), cy - rm * math.cos(phi)
    return cx + math.copysign(rm, s), cy + abs(s) - quarter


def validate_spec(spec: PhantomSpec) -> None:
    if spec.width < 16 or spec.height < 16 or spec.n_slices < 1:
        raise SpecError("phantom must be at least 16x16x1")
    if spec.noise_sigma < 0:
        raise SpecError("noise_sigma must be non-negative")
    arc = spec.arc
    if not 0 < arc.inner_radius_mm < arc.outer_radius_mm:
        raise SpecError("arc radii must satisfy 0 < inner < outer")
    if 2 * arc.cortical_thickness_mm >= arc.outer_radius_mm - arc.inner_radius_mm:
        raise SpecError("cortical shell leaves no trabecular interior")
    height_mm = spec.height * spec.spacing.in_plane_mm
    ranges = {CB: spec.cb_diameter_range_mm, OB: spec.ob_diameter_range_mm}
    bodies = []
    for les in spec.lesions:
        if les.kind not in ranges:
            raise SpecError(f"lesion kind must be CB or OB, got {les.kind!r}")
        lo, hi = ranges[les.kind]
        if not lo <= les.diameter_mm <= hi:
            raise SpecError(f"{les.kind} lesion diameter {les.diameter_mm} mm outside [{lo}, {hi}]")
        pad = arc.rim_thickness_mm if les.kind == CB else 0.0
        bodies.append((les.centroid_mm, les.diameter_mm / 2 + pad, les.kind))
    for cav in spec.cavities:
        if cav.diameter_mm <= 0:
            raise SpecError("cavity diameter must be positive")
        bodies.append((cav.centroid_mm, cav.diameter_mm / 2, "cavity"))
    for c, _, kind in bodies:
        rad, _ = band_coordinates(arc, c[0], c[1])
        if not arc.inner_radius_mm <= float(rad) <= arc.outer_radius_mm:
            raise SpecError(f"{kind} centroid {c} lies outside the bone band")
        if c[1] > 2.0 * height_mm / 3.0:
            raise SpecError(f"{kind} centroid {c} lies in the bottom third of the slice")
    for i in range(len(bodies)):
        for j in range(i + 1, len(bodies)):
            (ci, ri, ki), (cj, rj, kj) = bodies[i], bodies[j]
            if math.dist(ci, cj) < ri + rj:
                raise SpecError(f"{ki} at {ci} overlaps {kj} at {cj}")


def _sphere_radius_at(z_mm: float, center_z: float, radius: float) -> float:
    dz = z_mm - center_z
    return math.sqrt(radius * radius - dz * dz) if abs(dz) < radius else 0.0


def render_slice(spec: PhantomSpec, frame: _BandFrame, k: int) -> np.ndarray:
    """Noise-free tissue levels (fractions of full scale) for slice ``k``."""
    arc = spec.arc
    z = k * spec.spacing.slice_thickness_mm
    img = np.full((spec.height, spec.width), arc.background_level)
    img[frame.band] = arc.trabecular_level
    img[frame.cortical] = arc.cortical_level

    for cav in spec.cavities:
        r = _sphere_radius_at(z, cav.centroid_mm[2], cav.diameter_mm / 2)
        if r > 0:
            inside = np.hypot(frame.x_mm - cav.centroid_mm[0], frame.y_mm - cav.centroid_mm[1]) <= r
            img[inside] = arc.cavity_level

    for les in spec.lesions:
        cx, cy, cz = les.centroid_mm
        radius = les.diameter_mm / 2
        if les.kind == CB:
            outer = _sphere_radius_at(z, cz, radius + arc.rim_thickness_mm)
            if outer == 0:
                continue
            d = np.hypot(frame.x_mm - cx, frame.y_mm - cy)
            img[d <= outer] = arc.cortical_level
            inner = _sphere_radius_at(z, cz, radius)
            if inner > 0:
                img[d <= inner] = arc.lesion_level
        else:
            half = _sphere_radius_at(z, cz, radius)
            if half == 0:
                continue
            _, s0 = band_coordinates(arc, cx, cy)
            gap = frame.band & (np.abs(frame.s - float(s0)) <= half)
            img[gap] = arc.lesion_level
    return img


def generate_phantom(spec: PhantomSpec) -> tuple[CtVolume, list[GroundTruthLesion]]:
    """Render the volume described by ``spec`` and its lesion ground truth.

    Noise for slice ``k`` comes from its own stream seeded by ``(seed, k)``, so
    the output is bit-identical for a given spec.
    """
    validate_spec(spec)
    frame = _BandFrame(spec)
    out = np.empty((spec.n_slices, spec.height, spec.width), dtype=np.uint16)
    for k in range(spec.n_slices):
        levels = render_slice(spec, frame, k)
        rng = np.random.default_rng([spec.seed, k])
        noise = rng.standard_normal(levels.shape) * spec.noise_sigma
        out[k] = np.clip(np.rint((levels + noise) * FULL_SCALE), 0, FULL_SCALE).astype(np.uint16)
    truths = [
        GroundTruthLesion(spec.patient_id, les.kind, tuple(map(float, les.centroid_mm)), float(les.diameter_mm))
        for les in spec.lesions
    ]
    return CtVolume(out, spec.spacing, spec.patient_id), truths


def random_spec(seed: int, n_cb: int = 0, n_ob: int = 0, n_cavities: int = 0, *,
                patient_id: str | None = None, n_slices: int = 100, width: int = 512,
                height: int = 512, spacing: VoxelSpacing | None = None,
                cb_diameter_mm: tuple[float, float] = (7.5, 20.0),
                ob_diameter_mm: tuple[float, float] = (10.0, 25.0),
                cavity_diameter_mm: tuple[float, float] = (6.0, 11.0),
                noise_sigma: float = 0.02, arc: ArcGeometry | None = None,
                max_tries: int = 1000) -> PhantomSpec:
    """Place lesions and cavities at random on the band axis without overlap.

    Every implant lies fully above the bottom third of the slice, and fully
    inside the volume in ``z`` whenever the volume is deep enough.
    """
    spacing = spacing or VoxelSpacing()
    arc = arc or ArcGeometry()
    rng = np.random.default_rng([seed, 0x5EED])
    height_mm = height * spacing.in_plane_mm
    depth_mm = (n_slices - 1) * spacing.slice_thickness_mm
    y_limit = 2.0 * height_mm / 3.0 - 2.0
    quarter = arc.mid_radius_mm * math.pi / 2
    s_max = quarter + max(0.0, y_limit - arc.center_mm[1])

    wanted = [(CB, cb_diameter_mm)] * n_cb + [(OB, ob_diameter_mm)] * n_ob + [("cavity", cavity_diameter_mm)] * n_cavities
    placed: list[tuple[str, tuple[float, float, float], float, float]] = []
    for kind, (dlo, dhi) in wanted:
        for _ in range(max_tries):
            d = float(rng.uniform(dlo, dhi))
            reach = d / 2 + (arc.rim_thickness_mm if kind == CB else 0.0)
            s = float(rng.uniform(-s_max, s_max))
            x, y = centerline_point(arc, s)
            if y + reach > y_limit:
                continue
            # implants deeper than the volume are centred and clipped at both ends
            z_lo = min(reach + 0.5, depth_mm / 2)
            z_hi = max(depth_mm - reach - 0.5, depth_mm / 2)
            z = float(rng.uniform(z_lo, z_hi))
            c = (round(x, 3), round(y, 3), round(z, 3))
            if all(math.dist(c, pc) >= reach + pr + 2.0 for _, pc, _, pr in placed):
                placed.append((kind, c, round(d, 3), reach))
                break
        else:
            raise SpecError("could not place all implants without overlap")
    lesions = tuple(LesionSpec(k, c, d) for k, c, d, _ in placed if k != "cavity")
    cavities = tuple(CavitySpec(c, d) for k, c, d, _ in placed if k == "cavity")
    return PhantomSpec(
        seed=seed, width=width, height=height, n_slices=n_slices, spacing=spacing,
        lesions=lesions, cavities=cavities, noise_sigma=noise_sigma, arc=arc,
        patient_id=patient_id or f"phantom-{seed:04d}",
        cb_diameter_range_mm=(min(7.5, cb_diameter_mm[0]), max(20.0, cb_diameter_mm[1])),
        ob_diameter_range_mm=(min(10.0, ob_diameter_mm[0]), max(25.0, ob_diameter_mm[1])),
    )
