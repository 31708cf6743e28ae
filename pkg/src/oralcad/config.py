"""Run settings loaded from an INI-style ``key = value`` file.

Every size constant of the detectors is a named key. Example::

    [geometry]
    in_plane_mm = 0.2
    slice_thickness_mm = 0.2

    [cb]
    small_fill_mm = 5
    min_candidate_mm = 5
    glcm_levels = 32
    score_threshold = 0.5

    [ob]
    large_fill_mm = 30
    min_gap_mm = 5
    max_gap_mm = 30

    [cluster]
    link_radius_mm = 5
    min_persistence = 5

    [training]
    learning_rate = 0.1
    epochs = 500
    seed = 0
    shuffle = true

    [phantom]
    cb_min_mm = 7.5
    cb_max_mm = 20
    ob_min_mm = 10
    ob_max_mm = 25

Unknown sections or keys are rejected so typos do not pass silently.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .errors import SpecError
from .mlp import TrainingConfig
from .volume_io import VoxelSpacing


@dataclass(frozen=True)
class Settings:
    in_plane_mm: float = 0.2
    slice_thickness_mm: float = 0.2
    small_fill_mm: float = 5.0
    min_candidate_mm: float = 5.0
    glcm_levels: int = 32
    score_threshold: float = 0.5
    large_fill_mm: float = 30.0
    min_gap_mm: float = 5.0
    max_gap_mm: float = 30.0
    link_radius_mm: float = 5.0
    min_persistence: int = 5
    training: TrainingConfig = field(default_factory=TrainingConfig)
    cb_min_mm: float = 7.5
    cb_max_mm: float = 20.0
    ob_min_mm: float = 10.0
    ob_max_mm: float = 25.0

    @property
    def spacing(self) -> VoxelSpacing:
        return VoxelSpacing(self.in_plane_mm, self.slice_thickness_mm)


SECTIONS = {
    "geometry": ("in_plane_mm", "slice_thickness_mm"),
    "cb": ("small_fill_mm", "min_candidate_mm", "glcm_levels", "score_threshold"),
    "ob": ("large_fill_mm", "min_gap_mm", "max_gap_mm"),
    "cluster": ("link_radius_mm", "min_persistence"),
    "phantom": ("cb_min_mm", "cb_max_mm", "ob_min_mm", "ob_max_mm"),
}
TRAINING_KEYS = tuple(f.name for f in fields(TrainingConfig))


def _coerce(kind, raw: str, where: str):
    try:
        if kind is bool:
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        return kind(raw)
    except (KeyError, ValueError) as exc:
        raise SpecError(f"{where}: cannot parse {raw!r} as {kind.__name__}") from exc


def parse_settings(text: str, source: str = "<config>") -> Settings:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise SpecError(f"{source}: {exc}") from exc
    types = {f.name: f.type for f in fields(Settings)}
    kinds = {"float": float, "int": int}
    values, training = {}, {}
    for section in cp.sections():
        if section == "training":
            allowed = TRAINING_KEYS
        elif section in SECTIONS:
            allowed = SECTIONS[section]
        else:
            raise SpecError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in allowed:
                raise SpecError(f"{source}: unknown key {key!r} in [{section}]")
            where = f"{source} [{section}] {key}"
            if section == "training":
                kind = {f.name: f.type for f in fields(TrainingConfig)}[key]
                training[key] = _coerce({"float": float, "int": int, "bool": bool}[kind], raw, where)
            else:
                values[key] = _coerce(kinds[types[key]], raw, where)
    try:
        s = Settings(**values)
        if training:
            s = replace(s, training=replace(s.training, **training))
        s.spacing  # validates positivity
    except ValueError as exc:
        raise SpecError(f"{source}: {exc}") from exc
    return s


def load_settings(path=None) -> Settings:
    if path is None:
        return Settings()
    with open(path) as fh:
        text = fh.read()
    return parse_settings(text, str(path))
