"""Subject manifest, segment annotations, clinical labels and vowel sampling.

Manifest CSV columns: ``subject_id,dcl,tfc,sv_wav,gfp_wav`` (paths relative to
the manifest's directory). Annotation CSV columns:
``subject_id,task,phone,start_s,end_s`` with task in {SV, GFP}.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, ms_to_samples, seconds_to_index
from .errors import BoundsError, DuplicateError, SchemaError, TooShortError, ValidationError

MANIFEST_COLUMNS = ("subject_id", "dcl", "tfc", "sv_wav", "gfp_wav")
ANNOTATION_COLUMNS = ("subject_id", "task", "phone", "start_s", "end_s")

SSV_MEAN_MS = 105.0
SSV_SD_MS = 49.0
SSV_MIN_MS = 25.0
SSV_COUNT = 10


class StageLabel(enum.Enum):
    PREMANIFEST = "premanifest"
    EARLY_MANIFEST = "early_manifest"
    LATE_MANIFEST = "late_manifest"

    @property
    def manifest(self) -> int:
        return 0 if self is StageLabel.PREMANIFEST else 1


class Task(str, enum.Enum):
    SV = "SV"
    GFP = "GFP"


class VowelKind(str, enum.Enum):
    SV = "SV"
    SSV = "SSV"
    GFPV = "GFPV"


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    dcl: int
    tfc: int
    sv_wav: Path
    gfp_wav: Path

    @property
    def label(self) -> StageLabel:
        return derive_label(self.dcl, self.tfc)


@dataclass(frozen=True)
class SegmentAnnotation:
    subject_id: str
    task: Task
    phone: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise ValidationError(
                f"{self.subject_id}: bad segment [{self.start_s}, {self.end_s}]")


@dataclass(frozen=True, eq=False)
class VowelSample:
    kind: VowelKind
    clip: AudioClip
    subject_id: str
    start_s: float
    end_s: float
    phone: str = ""

    @property
    def length_ms(self) -> float:
        return self.clip.duration_ms


def derive_label(dcl: int, tfc: int) -> StageLabel:
    """Map diagnostic confidence level and functional capacity to a stage.

    DCL below 4 is premanifest; at DCL 4, TFC 7-13 is early and 0-6 late.
    """
    if not (0 <= dcl <= 4):
        raise ValidationError(f"dcl must be in 0..4, got {dcl}")
    if not (0 <= tfc <= 13):
        raise ValidationError(f"tfc must be in 0..13, got {tfc}")
    if dcl < 4:
        return StageLabel.PREMANIFEST
    return StageLabel.EARLY_MANIFEST if tfc >= 7 else StageLabel.LATE_MANIFEST


def _read_csv(path: Path, required: tuple[str, ...]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        return list(reader)


def _as_int(value: str, column: str, where: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: column {column!r} is not an integer: {value!r}") from None


def load_manifest(path: str | Path) -> list[SubjectRecord]:
    path = Path(path)
    base = path.parent
    records = []
    seen = set()
    for i, row in enumerate(_read_csv(path, MANIFEST_COLUMNS), start=2):
        sid = row["subject_id"].strip()
        if not sid:
            raise ValidationError(f"{path}:{i}: empty subject_id")
        if sid in seen:
            raise DuplicateError(f"{path}:{i}: duplicate subject_id {sid!r}")
        seen.add(sid)
        where = f"{path}:{i}"
        dcl = _as_int(row["dcl"], "dcl", where)
        tfc = _as_int(row["tfc"], "tfc", where)
        derive_label(dcl, tfc)
        records.append(SubjectRecord(sid, dcl, tfc, base / row["sv_wav"], base / row["gfp_wav"]))
    return records


def load_annotations(path: str | Path) -> list[SegmentAnnotation]:
    path = Path(path)
    out = []
    for i, row in enumerate(_read_csv(path, ANNOTATION_COLUMNS), start=2):
        try:
            task = Task(row["task"].strip())
        except ValueError:
            raise ValidationError(f"{path}:{i}: task must be SV or GFP, got {row['task']!r}") from None
        try:
            start, end = float(row["start_s"]), float(row["end_s"])
        except ValueError:
            raise ValidationError(f"{path}:{i}: non-numeric segment bounds") from None
        out.append(SegmentAnnotation(row["subject_id"].strip(), task, row["phone"], start, end))
    return out


def cut_segments(clip: AudioClip, annotations: list[SegmentAnnotation]) -> list[VowelSample]:
    """Cut one vowel per annotation; boundaries round half-up to sample indices."""
    out = []
    n = len(clip)
    rate = clip.sample_rate_hz
    for ann in annotations:
        i0 = seconds_to_index(ann.start_s, rate)
        i1 = seconds_to_index(ann.end_s, rate)
        if i1 > n:
            raise BoundsError(
                f"{ann.subject_id}: segment ends at {ann.end_s:.4f} s, clip is {clip.duration_s:.4f} s")
        if i1 <= i0:
            raise BoundsError(f"{ann.subject_id}: segment [{ann.start_s}, {ann.end_s}] is empty")
        kind = VowelKind.SV if ann.task is Task.SV else VowelKind.GFPV
        out.append(VowelSample(kind, AudioClip(clip.samples[i0:i1], rate), ann.subject_id,
                               i0 / rate, i1 / rate, ann.phone))
    return out


def sample_ssv(sv: VowelSample, count: int = SSV_COUNT, rng: np.random.Generator | None = None,
               *, mean_ms: float = SSV_MEAN_MS, sd_ms: float = SSV_SD_MS,
               min_ms: float = SSV_MIN_MS) -> list[VowelSample]:
    """Draw ``count`` shortened segments from a sustained vowel.

    Lengths ~ Normal(mean_ms, sd_ms) clipped to [min_ms, SV length]; start
    positions uniform over the admissible range. Segments may overlap.
    """
    if sv.kind is not VowelKind.SV:
        raise ValidationError(f"sample_ssv needs an SV sample, got {sv.kind.value}")
    if rng is None:
        raise ValueError("sample_ssv needs an explicit numpy Generator")
    rate = sv.clip.sample_rate_hz
    n = len(sv.clip)
    n_min = ms_to_samples(min_ms, rate)
    if n < n_min:
        raise TooShortError(f"{sv.subject_id}: SV is {sv.length_ms:.1f} ms, need >= {min_ms} ms")
    out = []
    for _ in range(count):
        length_ms = rng.normal(mean_ms, sd_ms)
        m = min(max(ms_to_samples(max(length_ms, min_ms), rate), n_min), n)
        start = int(rng.integers(0, n - m + 1))
        seg = AudioClip(sv.clip.samples[start:start + m], rate)
        out.append(VowelSample(VowelKind.SSV, seg, sv.subject_id,
                               sv.start_s + start / rate, sv.start_s + (start + m) / rate))
    return out
