"""Loading of per-frame action-unit intensity recordings.

Recordings arrive as one CSV per participant (one row per video frame, one
column per AU intensity channel) plus a JSON timing file giving the start and
end of each experimental phase. A cohort manifest ties participants, files,
and diagnostic labels together.

Parsing is pure per file; a loaded Cohort is immutable afterwards and safe to
share between threads.
"""

from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AukitError,
    DuplicateParticipant,
    EmptySeries,
    IngestFileError,
    MalformedFile,
    MalformedNumber,
    MissingColumn,
    NegativeDuration,
    OutOfRange,
    OverlappingPhases,
    PhaseOutOfBounds,
    UnknownPhase,
)

DEPRESSED = "Depressed"
HEALTHY = "Healthy"
SUBCLINICAL = "SubClinical"
LABELS = (DEPRESSED, HEALTHY, SUBCLINICAL)

_AU_COLUMN_RE = re.compile(r"^au(\d{1,2})_int$", re.IGNORECASE)
_AU_ID_RE = re.compile(r"^au\s*0*(\d{1,2})$", re.IGNORECASE)

DEFAULT_FPS = 30.0


def normalize_au_id(name: str) -> str:
    """Canonicalize an AU identifier: "au1", "AU01", "AU 1" -> "AU01"."""
    m = _AU_ID_RE.match(name.strip())
    if not m:
        raise ValueError(f"not an AU identifier: {name!r}")
    return f"AU{int(m.group(1)):02d}"


def normalize_label(label: str) -> str:
    key = label.strip().replace("-", "").replace("_", "").lower()
    for canonical in LABELS:
        if key == canonical.lower():
            return canonical
    raise MalformedFile(f"unknown label {label!r}; expected one of {LABELS}")


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for an AU intensity CSV.

    When ``au_columns`` is None, AU columns are discovered from the header by
    the OpenDBM-style pattern ``au<digits>_int``. An explicit mapping (AU id
    -> column name) makes every listed column mandatory.
    """

    frame_column: str = "frame"
    au_columns: dict[str, str] | None = None
    valid_range: tuple[float, float] = (0.0, 1.0)


DEFAULT_SCHEMA = CsvSchema()


@dataclass(eq=False)
class AUFrameSeries:
    """One participant's per-frame AU intensity matrix.

    values has shape (frames, len(au_ids)); intensities are unitless, with
    range validation applied at parse time rather than here.
    """

    participant_id: str
    fps: float
    au_ids: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D frames x AUs matrix")
        if self.values.shape[0] < 1:
            raise ValueError("series needs at least one frame")
        if len(self.au_ids) < 1:
            raise ValueError("series needs at least one AU column")
        if self.values.shape[1] != len(self.au_ids):
            raise ValueError("row width does not match au_ids")
        if len(set(self.au_ids)) != len(self.au_ids):
            raise ValueError("au_ids must be unique")
        if not self.fps > 0:
            raise ValueError("fps must be positive")

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.fps

    def has_au(self, au_id: str) -> bool:
        return au_id in self.au_ids

    def column(self, au_id: str) -> np.ndarray:
        try:
            j = self.au_ids.index(au_id)
        except ValueError:
            raise KeyError(au_id) from None
        return self.values[:, j]


@dataclass(frozen=True)
class Phase:
    name: str
    start_s: float
    end_s: float


@dataclass(eq=False)
class PhaseTiming:
    participant_id: str
    phases: list[Phase]

    def phase(self, name: str) -> Phase:
        for p in self.phases:
            if p.name == name:
                return p
        raise UnknownPhase(
            f"phase {name!r} not in timing for {self.participant_id!r} "
            f"(have: {[p.name for p in self.phases]})"
        )


@dataclass(eq=False)
class Cohort:
    """Labeled set of participants. ``merged`` records whether the
    SubClinical -> Depressed relabeling was applied at load time."""

    participants: list[tuple[AUFrameSeries, str]]
    merged: bool = False

    def __post_init__(self):
        ids = [s.participant_id for s, _ in self.participants]
        if len(set(ids)) != len(ids):
            raise DuplicateParticipant("cohort contains duplicate participant ids")
        for _, label in self.participants:
            if label not in LABELS:
                raise ValueError(f"unknown label {label!r}")
            if self.merged and label == SUBCLINICAL:
                raise ValueError("merged cohort may not contain SubClinical labels")

    def __len__(self) -> int:
        return len(self.participants)

    def counts(self) -> dict[str, int]:
        out = {label: 0 for label in LABELS}
        for _, label in self.participants:
            out[label] += 1
        return out

    def members(self, label: str) -> list[AUFrameSeries]:
        return [s for s, lab in self.participants if lab == label]


def _parse_cell(raw: str | None, row: int, column: str) -> float:
    if raw is None or raw.strip() == "":
        raise MalformedNumber(f"row {row}, column {column!r}: empty value")
    try:
        value = float(raw)
    except ValueError:
        raise MalformedNumber(
            f"row {row}, column {column!r}: cannot parse {raw!r}"
        ) from None
    if not math.isfinite(value):
        raise MalformedNumber(f"row {row}, column {column!r}: non-finite value")
    return value


def parse_au_csv(
    data: bytes | str,
    schema: CsvSchema = DEFAULT_SCHEMA,
    *,
    participant_id: str = "",
    fps: float = DEFAULT_FPS,
) -> AUFrameSeries:
    """Parse an AU intensity CSV into an AUFrameSeries.

    Raises EmptySeries / MissingColumn / MalformedNumber / OutOfRange; the
    latter two name the offending data row (1-based) and column.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    if not lines:
        raise EmptySeries("no header row")
    header = [h.strip() for h in lines[0].split(",")]
    positions = {name: i for i, name in enumerate(header)}

    if schema.frame_column not in positions:
        raise MissingColumn(f"frame column {schema.frame_column!r} not in header")

    if schema.au_columns is None:
        au_ids, au_cols = [], []
        for name in header:
            m = _AU_COLUMN_RE.match(name)
            if m:
                au_ids.append(f"AU{int(m.group(1)):02d}")
                au_cols.append(name)
        if not au_ids:
            raise MissingColumn("no AU intensity columns (au<nn>_int) in header")
    else:
        missing = [c for c in schema.au_columns.values() if c not in positions]
        if missing:
            raise MissingColumn(f"schema columns absent from header: {missing}")
        au_ids = [normalize_au_id(a) for a in schema.au_columns]
        au_cols = list(schema.au_columns.values())

    col_idx = [positions[c] for c in au_cols]
    lo, hi = schema.valid_range

    rows: list[list[float]] = []
    data_row = 0
    for line in lines[1:]:
        if line.strip() == "":
            continue
        data_row += 1
        cells = line.split(",")
        values = []
        for au, j in zip(au_ids, col_idx):
            raw = cells[j] if j < len(cells) else None
            v = _parse_cell(raw, data_row, au)
            if not (lo <= v <= hi):
                raise OutOfRange(
                    f"row {data_row}, column {au!r}: value {v} outside "
                    f"[{lo}, {hi}]",
                    row=data_row,
                    column=au,
                )
            values.append(v)
        rows.append(values)

    if not rows:
        raise EmptySeries("header only: no data rows")

    return AUFrameSeries(
        participant_id=participant_id,
        fps=fps,
        au_ids=au_ids,
        values=np.array(rows, dtype=np.float64),
    )


def au_csv_text(series: AUFrameSeries, schema: CsvSchema = DEFAULT_SCHEMA) -> str:
    """Serialize a series back to CSV. repr() keeps floats round-trip exact."""
    if schema.au_columns is None:
        columns = [f"au{int(a[2:]):02d}_int" for a in series.au_ids]
    else:
        by_id = {normalize_au_id(a): c for a, c in schema.au_columns.items()}
        columns = [by_id[a] for a in series.au_ids]
    lines = [",".join([schema.frame_column] + columns)]
    for i, row in enumerate(series.values):
        lines.append(",".join([str(i)] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def parse_phase_timing(data: bytes | str) -> PhaseTiming:
    """Parse a JSON timing file: a list of
    {participant_id, phase_name, start_s, end_s} records for one participant.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        records = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedFile(f"timing file is not valid JSON: {e}") from None
    if not isinstance(records, list) or not records:
        raise MalformedFile("timing file must be a non-empty JSON array")

    phases = []
    pids = set()
    for rec in records:
        if not isinstance(rec, dict):
            raise MalformedFile("timing records must be JSON objects")
        try:
            pid = rec["participant_id"]
            name = rec["phase_name"]
            start = float(rec["start_s"])
            end = float(rec["end_s"])
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedFile(f"bad timing record {rec!r}: {e}") from None
        if start < 0:
            raise MalformedFile(f"phase {name!r}: negative start_s")
        if end <= start:
            raise NegativeDuration(f"phase {name!r}: end_s {end} <= start_s {start}")
        pids.add(pid)
        phases.append(Phase(name=name, start_s=start, end_s=end))
    if len(pids) != 1:
        raise MalformedFile(f"timing file mixes participant ids: {sorted(pids)}")

    phases.sort(key=lambda p: p.start_s)
    for a, b in zip(phases, phases[1:]):
        if b.start_s < a.end_s:
            raise OverlappingPhases(
                f"phases {a.name!r} and {b.name!r} overlap "
                f"([{a.start_s}, {a.end_s}) vs [{b.start_s}, {b.end_s}))"
            )
    return PhaseTiming(participant_id=pids.pop(), phases=phases)


def phase_timing_json(timing: PhaseTiming) -> str:
    records = [
        {
            "participant_id": timing.participant_id,
            "phase_name": p.name,
            "start_s": p.start_s,
            "end_s": p.end_s,
        }
        for p in timing.phases
    ]
    return json.dumps(records, indent=2) + "\n"


def trim_to_phase(
    series: AUFrameSeries, timing: PhaseTiming, phase_name: str
) -> AUFrameSeries:
    """Keep exactly the frames i with start_s <= i/fps < end_s (half-open)."""
    phase = timing.phase(phase_name)
    t = np.arange(series.frame_count) / series.fps
    mask = (t >= phase.start_s) & (t < phase.end_s)
    if not mask.any():
        raise PhaseOutOfBounds(
            f"phase {phase_name!r} [{phase.start_s}, {phase.end_s}) contains no "
            f"frame of a {series.duration_s:.2f}s recording"
        )
    return AUFrameSeries(
        participant_id=series.participant_id,
        fps=series.fps,
        au_ids=list(series.au_ids),
        values=series.values[mask],
    )


def merge_subclinical_labels(cohort: Cohort) -> Cohort:
    """Relabel every SubClinical participant as Depressed and set merged."""
    relabeled = [
        (s, DEPRESSED if label == SUBCLINICAL else label)
        for s, label in cohort.participants
    ]
    return Cohort(participants=relabeled, merged=True)


@dataclass(eq=False)
class ManifestEntry:
    participant_id: str
    au_csv_path: str
    timing_path: str
    label: str
    fps: float = DEFAULT_FPS


def _parse_manifest(manifest, base_dir: Path | None):
    if isinstance(manifest, (str, Path)):
        path = Path(manifest)
        base = base_dir if base_dir is not None else path.parent
        try:
            records = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise MalformedFile(f"manifest is not valid JSON: {e}") from None
    else:
        records = manifest
        base = base_dir if base_dir is not None else Path(".")
    if not isinstance(records, list) or not records:
        raise MalformedFile("manifest must be a non-empty JSON array")

    entries = []
    for rec in records:
        try:
            entries.append(
                ManifestEntry(
                    participant_id=str(rec["participant_id"]),
                    au_csv_path=str(rec["au_csv_path"]),
                    timing_path=str(rec["timing_path"]),
                    label=normalize_label(rec["label"]),
                    fps=float(rec.get("fps", DEFAULT_FPS)),
                )
            )
        except (KeyError, TypeError) as e:
            raise MalformedFile(f"bad manifest record {rec!r}: {e}") from None
    return entries, base


def _load_participant(entry: ManifestEntry, base: Path, schema: CsvSchema, phase):
    csv_path = base / entry.au_csv_path
    try:
        series = parse_au_csv(
            csv_path.read_bytes(),
            schema,
            participant_id=entry.participant_id,
            fps=entry.fps,
        )
    except (OSError, AukitError) as e:
        raise IngestFileError(entry.participant_id, csv_path, e) from e
    if phase is not None:
        timing_path = base / entry.timing_path
        try:
            timing = parse_phase_timing(timing_path.read_bytes())
            series = trim_to_phase(series, timing, phase)
        except (OSError, AukitError) as e:
            raise IngestFileError(entry.participant_id, timing_path, e) from e
    return series, entry.label


def load_cohort(
    manifest,
    merge_subclinical: bool = False,
    *,
    schema: CsvSchema = DEFAULT_SCHEMA,
    phase: str | None = None,
    base_dir: str | Path | None = None,
    threads: int = 1,
) -> Cohort:
    """Assemble a labeled cohort from a manifest (path or parsed list).

    Relative file paths resolve against the manifest's directory. When
    ``phase`` is given, each series is trimmed to that phase using its timing
    file. Files are independent, so ``threads`` > 1 parses them concurrently;
    results keep manifest order either way.
    """
    base_dir = Path(base_dir) if base_dir is not None else None
    entries, base = _parse_manifest(manifest, base_dir)

    seen = set()
    for e in entries:
        if e.participant_id in seen:
            raise DuplicateParticipant(
                f"participant {e.participant_id!r} appears twice in the manifest"
            )
        seen.add(e.participant_id)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            loaded = list(
                pool.map(lambda e: _load_participant(e, base, schema, phase), entries)
            )
    else:
        loaded = [_load_participant(e, base, schema, phase) for e in entries]

    cohort = Cohort(participants=loaded, merged=False)
    if merge_subclinical:
        cohort = merge_subclinical_labels(cohort)
    return cohort


def manifest_json(entries: list[ManifestEntry]) -> str:
    records = [
        {
            "participant_id": e.participant_id,
            "au_csv_path": e.au_csv_path,
            "timing_path": e.timing_path,
            "label": e.label,
            "fps": e.fps,
        }
        for e in entries
    ]
    return json.dumps(records, indent=2) + "\n"
