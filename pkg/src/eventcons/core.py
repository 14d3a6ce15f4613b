"""Domain types, ingestion and serialization for annotation data.

All timestamps are integer milliseconds from recording start.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

CSV_COLUMNS = ("annotator_id", "recording_id", "onset_ms", "confidence", "origin")
REQUIRED_COLUMNS = CSV_COLUMNS[:3]


class ValidationError(ValueError):
    """Input failed a domain check (exit code 2 at the CLI)."""


class ParseError(ValidationError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Confidence(str, enum.Enum):
    VERY_UNCERTAIN = "very_uncertain"
    UNCERTAIN = "uncertain"
    CONFIDENT = "confident"
    VERY_CONFIDENT = "very_confident"
    FULLY_CONFIDENT = "fully_confident"


class Origin(str, enum.Enum):
    MANUAL = "manual"
    ACCEPTED_AI = "accepted_ai"


def natural_key(s: str):
    """Sort key that orders ``HU-2`` before ``HU-10``."""
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s)]


@dataclass(frozen=True)
class Annotation:
    annotator_id: str
    recording_id: str
    onset_ms: int
    confidence: Confidence | None = None
    origin: Origin = Origin.MANUAL

    def __post_init__(self):
        if isinstance(self.onset_ms, bool) or not isinstance(self.onset_ms, (int, np.integer)):
            raise ValidationError(f"onset_ms must be an integer, got {self.onset_ms!r}")
        if self.onset_ms < 0:
            raise ValidationError(f"negative onset {self.onset_ms} ms")
        object.__setattr__(self, "onset_ms", int(self.onset_ms))
        if self.confidence is not None:
            object.__setattr__(self, "confidence", Confidence(self.confidence))
        object.__setattr__(self, "origin", Origin(self.origin))

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.annotator_id, self.recording_id, self.onset_ms)

    def sort_key(self):
        return (natural_key(self.recording_id), self.onset_ms, natural_key(self.annotator_id))

    def to_dict(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "recording_id": self.recording_id,
            "onset_ms": self.onset_ms,
            "confidence": self.confidence.value if self.confidence else None,
            "origin": self.origin.value,
        }


@dataclass(frozen=True)
class AnnotationSet:
    """Canonically sorted, de-duplicated annotations of K annotators."""

    annotations: tuple[Annotation, ...]
    annotators: tuple[str, ...]
    recordings: tuple[str, ...]
    duplicate_count: int = 0

    @classmethod
    def from_annotations(
        cls,
        annotations: Iterable[Annotation],
        annotators: Sequence[str] | None = None,
        recordings: Sequence[str] | None = None,
    ) -> "AnnotationSet":
        seen: dict[tuple, Annotation] = {}
        dupes = 0
        for a in annotations:
            if a.key in seen:
                dupes += 1
                continue
            seen[a.key] = a
        anns = tuple(sorted(seen.values(), key=Annotation.sort_key))
        found_k = {a.annotator_id for a in anns}
        found_r = {a.recording_id for a in anns}
        if annotators is None:
            annotators = sorted(found_k, key=natural_key)
        elif not found_k <= set(annotators):
            raise ValidationError(f"unregistered annotators: {sorted(found_k - set(annotators))}")
        if recordings is None:
            recordings = sorted(found_r, key=natural_key)
        elif not found_r <= set(recordings):
            raise ValidationError(f"unregistered recordings: {sorted(found_r - set(recordings))}")
        if len(set(annotators)) != len(annotators):
            raise ValidationError("annotator registry has duplicates")
        if dupes:
            log.warning("collapsed %d duplicate annotation(s)", dupes)
        return cls(anns, tuple(annotators), tuple(recordings), dupes)

    @property
    def K(self) -> int:
        return len(self.annotators)

    def __len__(self) -> int:
        return len(self.annotations)

    def require_nonempty(self) -> None:
        if self.K == 0 or not self.annotations:
            raise ValidationError("annotation set is empty")

    def by_recording(self) -> dict[str, list[Annotation]]:
        out: dict[str, list[Annotation]] = {r: [] for r in self.recordings}
        for a in self.annotations:
            out[a.recording_id].append(a)
        return out

    def subset(self, annotators: Iterable[str]) -> "AnnotationSet":
        keep = set(annotators)
        return AnnotationSet.from_annotations(
            (a for a in self.annotations if a.annotator_id in keep),
            annotators=[k for k in self.annotators if k in keep],
            recordings=self.recordings,
        )

    def times(self, annotator_id: str) -> dict[str, list[int]]:
        """Sorted onsets of one annotator per recording."""
        out: dict[str, list[int]] = {r: [] for r in self.recordings}
        for a in self.annotations:
            if a.annotator_id == annotator_id:
                out[a.recording_id].append(a.onset_ms)
        return {r: sorted(v) for r, v in out.items()}

    def counts(self, annotator_id: str) -> dict[str, int]:
        return {r: len(v) for r, v in self.times(annotator_id).items()}


class GroundTruthKind(str, enum.Enum):
    CPS = "cps"
    CONSENSUS = "consensus"


@dataclass(frozen=True)
class GroundTruth:
    kind: GroundTruthKind
    events: tuple[tuple[str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", GroundTruthKind(self.kind))
        ev = tuple(sorted(((str(r), float(t)) for r, t in self.events),
                          key=lambda e: (natural_key(e[0]), e[1])))
        object.__setattr__(self, "events", ev)

    @classmethod
    def from_annotations(cls, aset: AnnotationSet, kind="cps") -> "GroundTruth":
        return cls(kind, tuple((a.recording_id, a.onset_ms) for a in aset.annotations))

    def times(self, recording_id: str | None = None) -> dict[str, list[float]] | list[float]:
        per: dict[str, list[float]] = {}
        for r, t in self.events:
            per.setdefault(r, []).append(t)
        if recording_id is not None:
            return per.get(recording_id, [])
        return per

    def count(self, recording_id: str) -> int:
        return sum(1 for r, _ in self.events if r == recording_id)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value,
                "events": [{"recording_id": r, "time_ms": t} for r, t in self.events]}


@dataclass(frozen=True)
class ScoreSeries:
    recording_id: str
    sample_interval_ms: int
    scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        if isinstance(self.sample_interval_ms, float):
            if not self.sample_interval_ms.is_integer():
                raise ValidationError(
                    f"sample_interval_ms must be an integer number of ms, got "
                    f"{self.sample_interval_ms}; resample the series first")
            object.__setattr__(self, "sample_interval_ms", int(self.sample_interval_ms))
        if self.sample_interval_ms <= 0:
            raise ValidationError("sample_interval_ms must be positive")
        arr = np.asarray(self.scores, dtype=float)
        if arr.ndim != 1:
            raise ValidationError("scores must be one-dimensional")
        bad = np.flatnonzero(~((arr >= 0.0) & (arr <= 1.0)))
        if bad.size:
            i = int(bad[0])
            raise ValidationError(f"score out of [0, 1] at index {i}: {arr[i]}")
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)

    def __len__(self) -> int:
        return len(self.scores)

    def time_of(self, index: int) -> int:
        return index * self.sample_interval_ms


# --- ingestion -------------------------------------------------------------

def _parse_row(row: dict, line: int) -> Annotation:
    try:
        onset_raw = str(row["onset_ms"]).strip()
    except KeyError:
        raise ParseError("missing onset_ms", line)
    try:
        onset = int(onset_raw)
    except ValueError:
        try:
            f = float(onset_raw)
        except ValueError:
            raise ParseError(f"onset_ms is not a number: {onset_raw!r}", line)
        if not f.is_integer():
            raise ParseError(f"onset_ms must be integer milliseconds: {onset_raw!r}", line)
        onset = int(f)
    ann_id = str(row.get("annotator_id") or "").strip()
    rec_id = str(row.get("recording_id") or "").strip()
    if not ann_id or not rec_id:
        raise ParseError("empty annotator_id or recording_id", line)
    conf = row.get("confidence") or None
    origin = row.get("origin") or "manual"
    try:
        conf = Confidence(str(conf).strip()) if conf else None
        origin = Origin(str(origin).strip())
    except ValueError as e:
        raise ParseError(str(e), line)
    if onset < 0:
        raise ValidationError(f"line {line}: negative onset {onset} ms")
    return Annotation(ann_id, rec_id, onset, conf, origin)


def ingest_annotations(path: str | Path, format: str | None = None) -> AnnotationSet:
    """Read annotations from CSV (header row required) or a JSON array."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    fmt = (format or path.suffix.lstrip(".")).lower()
    text = path.read_text(encoding="utf-8")
    rows: list[Annotation] = []
    if fmt == "csv":
        if not text.strip():
            return AnnotationSet.from_annotations([])
        reader = csv.DictReader(text.splitlines())
        missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"missing column(s) {missing}", 1)
        for i, row in enumerate(reader, start=2):
            if None in row or any(row.get(c) is None for c in REQUIRED_COLUMNS):
                raise ParseError("wrong number of fields", i)
            rows.append(_parse_row(row, i))
    elif fmt == "json":
        if not text.strip():
            return AnnotationSet.from_annotations([])
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, e.lineno)
        if isinstance(data, dict) and "annotations" in data:
            data = data["annotations"]
        if not isinstance(data, list):
            raise ParseError("expected a JSON array of objects")
        for i, obj in enumerate(data):
            if not isinstance(obj, dict):
                raise ParseError(f"element {i} is not an object")
            try:
                rows.append(_parse_row(obj, i + 1))
            except ParseError as e:
                raise ParseError(f"element {i}: {e}") from None
    else:
        raise ValidationError(f"unknown annotation format {fmt!r}")
    return AnnotationSet.from_annotations(rows)


def write_annotations(aset: AnnotationSet, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for a in aset.annotations:
                d = a.to_dict()
                w.writerow([d[c] if d[c] is not None else "" for c in CSV_COLUMNS])
    elif fmt == "json":
        path.write_text(json.dumps([a.to_dict() for a in aset.annotations], indent=1),
                        encoding="utf-8")
    else:
        raise ValidationError(f"unknown annotation format {fmt!r}")


def ingest_scores(path: str | Path, sample_interval_ms: int | float,
                  recording_id: str | None = None) -> ScoreSeries:
    """Read a confidence-score series.

    Accepts a JSON array, or text with one value per line (a single-column
    CSV header is skipped).
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    text = path.read_text(encoding="utf-8")
    values: list[float] = []
    if path.suffix.lower() == ".json":
        data = json.loads(text)
        if isinstance(data, dict):
            recording_id = recording_id or data.get("recording_id")
            sample_interval_ms = data.get("sample_interval_ms", sample_interval_ms)
            data = data["scores"]
        for i, v in enumerate(data):
            try:
                values.append(float(v))
            except (TypeError, ValueError):
                raise ParseError(f"score {i} is not a number: {v!r}")
    else:
        for i, line in enumerate(text.splitlines(), start=1):
            s = line.strip().split(",")[-1].strip()
            if not s:
                continue
            try:
                values.append(float(s))
            except ValueError:
                if i == 1:
                    continue
                raise ParseError(f"not a number: {s!r}", i)
    if any(math.isnan(v) for v in values):
        raise ValidationError(f"NaN score at index {next(i for i, v in enumerate(values) if math.isnan(v))}")
    return ScoreSeries(recording_id or path.stem, sample_interval_ms, np.array(values))
