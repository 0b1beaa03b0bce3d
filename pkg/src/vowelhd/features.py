"""Per-vowel measures, per-subject aggregation and the subject x feature matrix."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, load_wav, ms_to_samples, normalize_peak
from .dataset import (SSV_COUNT, SSV_MIN_MS, SegmentAnnotation, StageLabel, SubjectRecord, Task,
                      VowelKind, VowelSample, cut_segments, sample_ssv)
from .emd import SiftConfig, decompose, dump_imfs_csv
from .errors import (DataError, DecompositionError, DegenerateSignalError, EmptyAggregateError,
                     SchemaError, TooShortError)
from .fluctuation import HURST_WINDOW_MS, R2_GATE, dfa_exponent, dump_curve_csv, hurst_first_imf
from .trends import IMF_TREND_CUTOFF, additive_trend, multiplicative_trend

log = logging.getLogger(__name__)

MIN_VOWEL_MS = 25.0
STATS = ("min", "median", "max", "range", "mean", "sd")
MEASURES = ("length_ms", "dfa", "sd_mult", "sd_add", "hurst_imf1")
LABEL_COLUMNS = ("label_manifest", "label_stage")


@dataclass(frozen=True)
class FeatureConfig:
    imf_trend_cutoff: int = IMF_TREND_CUTOFF
    r2_gate: float = R2_GATE
    hurst_integrate: bool = True
    hurst_window_ms: tuple[float, float] = HURST_WINDOW_MS
    ssv_count: int = SSV_COUNT
    sift: SiftConfig = field(default_factory=SiftConfig)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["hurst_window_ms"] = list(self.hurst_window_ms)
        return d


@dataclass(frozen=True)
class DebugDump:
    """Directories for optional per-vowel IMF and fluctuation-curve CSV dumps."""

    imf_dir: Path | None = None
    curve_dir: Path | None = None


@dataclass(frozen=True)
class VowelFeatures:
    """Measures of one vowel. ``None`` marks a value that could not be computed.

    ``hurst_imf1`` is the gated Hurst estimate; ``hurst_slope`` is the fitted
    slope regardless of the gate.
    """

    length_ms: float
    dfa_exponent: float | None
    sd_mult_trend_db: float
    sd_add_trend: float | None
    hurst_imf1: float | None
    hurst_slope: float | None
    gate_r2: float | None
    n_imfs: int = 0

    def measure(self, name: str, gated: bool = True) -> float | None:
        if name == "length_ms":
            return self.length_ms
        if name == "dfa":
            return self.dfa_exponent
        if name == "sd_mult":
            return self.sd_mult_trend_db
        if name == "sd_add":
            return self.sd_add_trend
        if name == "hurst_imf1":
            return self.hurst_imf1 if gated else self.hurst_slope
        raise KeyError(name)


def extract_vowel_features(vowel: VowelSample | AudioClip, config: FeatureConfig | None = None,
                           dump: DebugDump | None = None, tag: str = "vowel") -> VowelFeatures:
    """Run the per-vowel pipeline.

    DFA uses the raw vowel. The trend/fluctuation chain is: level correction,
    peak normalization, EMD, additive trend from high-index IMFs, gated Hurst
    estimate of the first IMF. A failed EMD leaves the EMD-derived fields None.
    """
    cfg = config or FeatureConfig()
    clip = vowel.clip if isinstance(vowel, VowelSample) else vowel
    rate = clip.sample_rate_hz
    x = clip.samples
    if x.size < ms_to_samples(MIN_VOWEL_MS, rate):
        raise TooShortError(f"vowel is {clip.duration_ms:.1f} ms, need >= {MIN_VOWEL_MS} ms")

    try:
        dfa = dfa_exponent(x, rate)
    except DegenerateSignalError:
        dfa = None
    mult, corrected = multiplicative_trend(x, rate)
    normalized = normalize_peak(AudioClip(corrected, rate)).samples

    sd_add = hurst = slope = r2 = None
    n_imfs = 0
    try:
        decomp = decompose(normalized, cfg.sift)
    except DecompositionError as exc:
        log.warning("EMD failed on %.1f ms vowel: %s", clip.duration_ms, exc)
    else:
        n_imfs = decomp.n_imfs
        if dump is not None and dump.imf_dir is not None:
            dump_imfs_csv(decomp, Path(dump.imf_dir) / f"{tag}_imfs.csv")
        sd_add = additive_trend(decomp, cfg.imf_trend_cutoff).sd
        if decomp.imfs:
            try:
                est = hurst_first_imf(decomp.imfs[0], rate, cfg.r2_gate, cfg.hurst_integrate,
                                      cfg.hurst_window_ms)
            except (DegenerateSignalError, TooShortError) as exc:
                log.warning("Hurst estimate failed: %s", exc)
            else:
                hurst, slope, r2 = est.value, est.slope, est.curve.r2
                if dump is not None and dump.curve_dir is not None:
                    dump_curve_csv(est.curve, Path(dump.curve_dir) / f"{tag}_curve.csv")
    return VowelFeatures(clip.duration_ms, dfa, mult.sd_db, sd_add, hurst, slope, r2, n_imfs)


def aggregate(values) -> dict[str, float]:
    """min, median, max, range, mean and population SD of a nonempty list."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise EmptyAggregateError("cannot aggregate an empty list")
    lo, hi = float(v.min()), float(v.max())
    return {"min": lo, "median": float(np.median(v)), "max": hi, "range": hi - lo,
            "mean": float(v.mean()), "sd": float((v - v[0]).std())}


@dataclass
class SubjectFeatures:
    subject_id: str
    stage: StageLabel
    sv: VowelFeatures
    ssv: list[VowelFeatures] = field(default_factory=list)
    gfpv: list[VowelFeatures] = field(default_factory=list)

    def gate_counts(self) -> dict[str, tuple[int, int]]:
        out = {}
        for kind, vowels in (("SSV", self.ssv), ("GFPV", self.gfpv)):
            out[kind] = (len(vowels), sum(v.hurst_imf1 is not None for v in vowels))
        return out


def feature_names() -> list[str]:
    names = [f"sv.{m}" for m in MEASURES]
    for kind, measures in (("ssv", MEASURES[1:]), ("gfpv", MEASURES)):
        names += [f"{kind}.{m}.{s}" for m in measures for s in STATS]
    return names


@dataclass(eq=False)
class FeatureMatrix:
    """Subjects x features. Missing cells hold 0.0 and are flagged in ``missing``."""

    subject_ids: list[str]
    feature_names: list[str]
    values: np.ndarray
    missing: np.ndarray
    labels: np.ndarray
    stages: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.missing = np.asarray(self.missing, dtype=bool)
        self.labels = np.asarray(self.labels, dtype=int)
        n, p = len(self.subject_ids), len(self.feature_names)
        if self.values.shape != (n, p) or self.missing.shape != (n, p):
            raise SchemaError(f"matrix shape {self.values.shape} does not match {n} x {p}")
        if self.labels.shape != (n,) or len(self.stages) != n:
            raise SchemaError("labels/stages length does not match subject count")
        if np.any(~np.isfinite(self.values[~self.missing])):
            raise SchemaError("non-finite value in a non-missing cell")
        self.values = np.where(self.missing, 0.0, self.values)

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        j = self.feature_names.index(name)
        return self.values[:, j], self.missing[:, j]

    def as_nan(self) -> np.ndarray:
        """Values with NaN in missing cells (for computation, never for storage)."""
        return np.where(self.missing, np.nan, self.values)

    def select_columns(self, names: list[str]) -> "FeatureMatrix":
        idx = [self.feature_names.index(n) for n in names]
        return FeatureMatrix(list(self.subject_ids), list(names), self.values[:, idx],
                             self.missing[:, idx], self.labels.copy(), list(self.stages))

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subject_id", *self.feature_names, *LABEL_COLUMNS])
        for i, sid in enumerate(self.subject_ids):
            cells = ["" if self.missing[i, j] else repr(float(self.values[i, j]))
                     for j in range(len(self.feature_names))]
            w.writerow([sid, *cells, int(self.labels[i]), self.stages[i]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path: str | Path, require_labels: bool = True) -> "FeatureMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "subject_id":
            raise SchemaError(f"{path}: first column must be subject_id")
        header = rows[0]
        has_labels = header[-2:] == list(LABEL_COLUMNS)
        if require_labels and not has_labels:
            raise SchemaError(f"{path}: missing {', '.join(LABEL_COLUMNS)} columns")
        names = header[1:-2] if has_labels else header[1:]
        ids, vals, miss, labels, stages = [], [], [], [], []
        for k, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path}:{k}: expected {len(header)} cells, got {len(row)}")
            ids.append(row[0])
            cells = row[1:1 + len(names)]
            try:
                vals.append([float(c) if c != "" else 0.0 for c in cells])
            except ValueError:
                raise SchemaError(f"{path}:{k}: non-numeric feature value") from None
            miss.append([c == "" for c in cells])
            if has_labels:
                labels.append(int(row[-2]))
                stages.append(row[-1])
            else:
                labels.append(-1)
                stages.append("")
        if len(set(ids)) != len(ids):
            raise SchemaError(f"{path}: duplicate subject_id")
        p = len(names)
        return cls(ids, names, np.array(vals, dtype=np.float64).reshape(len(ids), p),
                   np.array(miss, dtype=bool).reshape(len(ids), p), np.array(labels), stages)


def build_feature_matrix(subjects: list[SubjectFeatures]) -> FeatureMatrix:
    """Assemble the fixed 59-column matrix.

    SV gives single values (its Hurst slope is not gated). SSV gives six
    statistics for every measure except length; GFPV for all five. Hurst
    statistics use gate-passing vowels only and are missing when none pass.
    """
    names = feature_names()
    col = {n: j for j, n in enumerate(names)}
    vals = np.zeros((len(subjects), len(names)))
    miss = np.zeros_like(vals, dtype=bool)
    for i, subj in enumerate(subjects):
        for m in MEASURES:
            v = subj.sv.measure(m, gated=False)
            if v is None:
                miss[i, col[f"sv.{m}"]] = True
            else:
                vals[i, col[f"sv.{m}"]] = v
        for kind, vowels, measures in (("ssv", subj.ssv, MEASURES[1:]), ("gfpv", subj.gfpv, MEASURES)):
            for m in measures:
                present = [v.measure(m) for v in vowels if v.measure(m) is not None]
                try:
                    stats = aggregate(present)
                except EmptyAggregateError:
                    for s in STATS:
                        miss[i, col[f"{kind}.{m}.{s}"]] = True
                    continue
                for s in STATS:
                    vals[i, col[f"{kind}.{m}.{s}"]] = stats[s]
    return FeatureMatrix([s.subject_id for s in subjects], names, vals, miss,
                         np.array([s.stage.manifest for s in subjects], dtype=int),
                         [s.stage.value for s in subjects])


def subject_vowels(record: SubjectRecord, annotations: list[SegmentAnnotation],
                   rng: np.random.Generator, ssv_count: int = SSV_COUNT
                   ) -> tuple[VowelSample, list[VowelSample], list[VowelSample]]:
    """Load one subject's recordings and cut SV, SSV and GFPV samples.

    The SV is the whole SV recording unless an SV annotation narrows it.
    """
    own = [a for a in annotations if a.subject_id == record.subject_id]
    sv_clip = load_wav(record.sv_wav)
    sv_ann = [a for a in own if a.task is Task.SV]
    if sv_ann:
        sv = cut_segments(sv_clip, sv_ann[:1])[0]
    else:
        sv = VowelSample(VowelKind.SV, sv_clip, record.subject_id, 0.0, sv_clip.duration_s)
    gfp_ann = [a for a in own if a.task is Task.GFP]
    gfpv = cut_segments(load_wav(record.gfp_wav), gfp_ann) if gfp_ann else []
    short = [g for g in gfpv if g.length_ms < MIN_VOWEL_MS]
    if short:
        log.warning("%s: skipping %d GFPV shorter than %.0f ms", record.subject_id, len(short), MIN_VOWEL_MS)
        gfpv = [g for g in gfpv if g.length_ms >= MIN_VOWEL_MS]
    ssv = sample_ssv(sv, ssv_count, rng, min_ms=SSV_MIN_MS)
    return sv, ssv, gfpv


def subject_rng(seed: int, subject_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, subject_index]))


def extract_subject(record: SubjectRecord, annotations: list[SegmentAnnotation], seed: int,
                    subject_index: int, config: FeatureConfig | None = None,
                    dump: DebugDump | None = None) -> SubjectFeatures:
    cfg = config or FeatureConfig()
    sv, ssv, gfpv = subject_vowels(record, annotations, subject_rng(seed, subject_index), cfg.ssv_count)
    sid = record.subject_id
    return SubjectFeatures(
        sid, record.label,
        extract_vowel_features(sv, cfg, dump, f"{sid}_sv"),
        [extract_vowel_features(v, cfg, dump, f"{sid}_ssv{k:02d}") for k, v in enumerate(ssv, 1)],
        [extract_vowel_features(v, cfg, dump, f"{sid}_gfpv{k:02d}") for k, v in enumerate(gfpv, 1)],
    )


def _extract_job(args):
    record, annotations, seed, index, cfg, dump = args
    try:
        return extract_subject(record, annotations, seed, index, cfg, dump), None
    except (DataError, OSError) as exc:
        return None, f"{record.subject_id}: {type(exc).__name__}: {exc}"


def extract_cohort(records: list[SubjectRecord], annotations: list[SegmentAnnotation], seed: int,
                   config: FeatureConfig | None = None, jobs: int = 1, dump: DebugDump | None = None
                   ) -> tuple[list[SubjectFeatures], list[str]]:
    """Extract every subject; returns (results in manifest order, error messages)."""
    cfg = config or FeatureConfig()
    tasks = [(r, annotations, seed, i, cfg, dump) for i, r in enumerate(records)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_job, tasks))
    else:
        results = [_extract_job(t) for t in tasks]
    subjects = [s for s, _ in results if s is not None]
    errors = [e for _, e in results if e is not None]
    return subjects, errors


def gate_report_rows(subjects: list[SubjectFeatures]) -> list[dict]:
    rows = []
    for s in subjects:
        for kind, (before, after) in s.gate_counts().items():
            rows.append({"subject_id": s.subject_id, "label_manifest": s.stage.manifest,
                         "kind": kind, "vowels_before": before, "vowels_after": after})
    return rows


def gate_summary(subjects: list[SubjectFeatures]) -> list[dict]:
    """Mean +- SD of before/after counts per (kind, manifest label)."""
    out = []
    for kind in ("SSV", "GFPV"):
        for label in (0, 1):
            counts = [s.gate_counts()[kind] for s in subjects if s.stage.manifest == label]
            if not counts:
                continue
            before = np.array([c[0] for c in counts], dtype=float)
            after = np.array([c[1] for c in counts], dtype=float)
            out.append({"kind": kind, "label_manifest": label, "n_subjects": len(counts),
                        "before_mean": float(before.mean()), "before_sd": float(before.std()),
                        "after_mean": float(after.mean()), "after_sd": float(after.std())})
    return out
