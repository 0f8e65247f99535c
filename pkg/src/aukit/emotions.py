"""FACS emotion intensities derived from AU intensities by summation.

Each named emotion is defined by a fixed combination of action units; its
per-frame intensity is the sum of the component AU intensities. Component AUs
missing from a recording contribute zero, and the fraction of components that
were actually present is reported as ``coverage`` so downstream consumers can
judge data quality.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import AUFrameSeries, normalize_au_id

# Standard FACS emotion -> AU combinations. The Surprise combination is often
# written with an intensity grade on AU5 ("AU5B"); grades are not separate
# units, so it maps to AU05 here.
BUILTIN_EMOTIONS: dict[str, tuple[str, ...]] = {
    "Happiness": ("AU06", "AU12"),
    "Sadness": ("AU01", "AU04", "AU15"),
    "Surprise": ("AU01", "AU02", "AU05", "AU26"),
    "Fear": ("AU01", "AU02", "AU04", "AU05", "AU20", "AU26", "AU28"),
    "Disgust": ("AU09", "AU15", "AU16"),
    "Anger": ("AU04", "AU05", "AU07", "AU23"),
}


@dataclass(frozen=True)
class EmotionDefinition:
    name: str
    components: tuple[str, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError(f"emotion {self.name!r} has no component AUs")
        if len(set(self.components)) != len(self.components):
            raise ValueError(f"emotion {self.name!r} repeats a component AU")


@dataclass(eq=False)
class EmotionSeries:
    participant_id: str
    emotion: str
    values: np.ndarray
    fps: float
    coverage: float


def default_definitions() -> dict[str, EmotionDefinition]:
    return {
        name: EmotionDefinition(name, components)
        for name, components in BUILTIN_EMOTIONS.items()
    }


def load_definitions(source: str | Path | Mapping) -> dict[str, EmotionDefinition]:
    """Load a user registry ({name: [AU ids]}) replacing the built-in table."""
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text(encoding="utf-8"))
    out = {}
    for name, components in source.items():
        out[name] = EmotionDefinition(
            name, tuple(normalize_au_id(a) for a in components)
        )
    return out


def emotion_frame_intensity(
    frame: Mapping[str, float], definition: EmotionDefinition
) -> float:
    """Sum of component AU intensities for one frame; absent AUs count as 0."""
    return float(sum(frame.get(au, 0.0) for au in definition.components))


def emotion_series(
    series: AUFrameSeries,
    definition: EmotionDefinition,
    *,
    normalize: bool = False,
) -> EmotionSeries:
    """Per-frame emotion intensity over a whole recording.

    coverage = (component AUs present in the source) / (components defined).
    With ``normalize`` the raw sum is divided by the component count.
    """
    present = [au for au in definition.components if series.has_au(au)]
    if present:
        cols = [series.au_ids.index(au) for au in present]
        values = series.values[:, cols].sum(axis=1)
    else:
        values = np.zeros(series.frame_count)
    if normalize:
        values = values / len(definition.components)
    return EmotionSeries(
        participant_id=series.participant_id,
        emotion=definition.name,
        values=values,
        fps=series.fps,
        coverage=len(present) / len(definition.components),
    )
