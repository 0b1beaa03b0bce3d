"""Command-line front end: synth, extract, correlate, classify, imf-variance.

Exit codes: 0 success, 1 usage, 2 data error, 3 statistical degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import shutil
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import AudioClip, normalize_peak
from .dataset import load_annotations, load_manifest
from .emd import SiftConfig, decompose, imf_variances, knee_index, variance_profile
from .errors import DataError, DegeneracyError, GeneratorError, JoinError, SchemaError, SingleClassError
from .features import (MEASURES, STATS, DebugDump, FeatureConfig, FeatureMatrix, build_feature_matrix,
                       extract_cohort, gate_report_rows, gate_summary)
from .fluctuation import DFA_WINDOW_MS, HURST_WINDOW_MS
from .model import ModelConfig, loso_evaluate
from .stats_select import correlate
from .synth import AmHarmonicSpec, CohortDeltas, gen_am_harmonic, gen_cohort
from .trends import FRAME_MS, HOP_MS, IMF_TREND_CUTOFF, multiplicative_trend

log = logging.getLogger("vowelhd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3
TOOL = "vowelhd"
# column order of the correlation grid
GRID_MEASURES = ("length_ms", "dfa", "hurst_imf1", "sd_mult", "sd_add")
SIGNIFICANCE = 0.05


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Resolved settings of one invocation, written next to every output."""

    command: str
    seed: int = 0
    imf_trend_cutoff: int = IMF_TREND_CUTOFF
    r2_gate: float = 0.99
    hurst_window_ms: tuple[float, float] = HURST_WINDOW_MS
    dfa_window_ms: tuple[float, float] = DFA_WINDOW_MS
    mult_frame_ms: float = FRAME_MS
    mult_hop_ms: float = HOP_MS
    p_threshold: float = 0.1
    vif_threshold: float = 5.0
    max_features: int = 10
    c: float = 1.0
    paths: dict[str, str] = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.imf_trend_cutoff < 0:
            raise UsageError("--imf-trend-cutoff must be >= 0")
        if not 0.0 < self.r2_gate <= 1.0:
            raise UsageError("--r2-gate must lie in (0, 1]")
        lo, hi = self.hurst_window_ms
        if not 0.0 < lo < hi:
            raise UsageError("--hurst-window-ms needs 0 < lo < hi")
        if not 0.0 < self.p_threshold <= 1.0:
            raise UsageError("--p-threshold must lie in (0, 1]")
        if self.vif_threshold < 1.0:
            raise UsageError("--vif-threshold must be >= 1")
        if self.max_features < 1:
            raise UsageError("--max-features must be >= 1")
        if self.c <= 0:
            raise UsageError("-C must be positive")

    def provenance(self) -> dict:
        d = asdict(self)
        d["hurst_window_ms"] = list(self.hurst_window_ms)
        d["dfa_window_ms"] = list(self.dfa_window_ms)
        return {"tool": TOOL, "version": __version__, "config": d}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _write_text(path, buf.getvalue())


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _write_meta(path: Path, cfg: RunConfig, extra: dict | None = None) -> None:
    """Sidecar ``<file>.meta.json`` carrying config and version for a CSV output."""
    meta = cfg.provenance()
    if extra:
        meta.update(extra)
    _write_json(path.with_name(path.name + ".meta.json"), meta)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _pair(text: str, what: str) -> tuple[float, float]:
    try:
        a, b = (float(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"{what} expects two comma-separated numbers, got {text!r}") from None
    return a, b


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    if args.n_per_class < 1:
        raise UsageError("--n-per-class must be >= 1")
    try:
        deltas = CohortDeltas.parse(args.deltas)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise UsageError(f"{out} is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    cfg = RunConfig("synth", seed=args.seed, paths={"out_dir": str(args.out_dir)},
                    options={"n_per_class": args.n_per_class, "deltas": asdict(deltas),
                             "sample_rate_hz": args.sample_rate})
    cfg.validate()
    manifest, segments = gen_cohort(out, args.n_per_class, deltas, args.seed, args.sample_rate)
    _write_json(out / "synth.meta.json", cfg.provenance())
    print(f"wrote {2 * args.n_per_class} subjects to {out} ({manifest.name}, {segments.name})")
    return EXIT_OK


# ---------------------------------------------------------------- extract

def cmd_extract(args) -> int:
    cfg = RunConfig("extract", seed=args.seed, imf_trend_cutoff=args.imf_trend_cutoff,
                    r2_gate=args.r2_gate, hurst_window_ms=_pair(args.hurst_window_ms, "--hurst-window-ms"),
                    paths={"manifest": str(args.manifest), "segments": str(args.segments),
                           "out": str(args.out)},
                    options={"hurst_integrate": not args.no_hurst_integrate,
                             "sift_boundary": args.boundary})
    cfg.validate()
    records = load_manifest(args.manifest)
    annotations = load_annotations(args.segments)
    fcfg = FeatureConfig(imf_trend_cutoff=cfg.imf_trend_cutoff, r2_gate=cfg.r2_gate,
                         hurst_integrate=not args.no_hurst_integrate,
                         hurst_window_ms=cfg.hurst_window_ms, sift=SiftConfig(boundary=args.boundary))
    dump = None
    if args.dump_imfs or args.dump_curves:
        for d in (args.dump_imfs, args.dump_curves):
            if d:
                Path(d).mkdir(parents=True, exist_ok=True)
        dump = DebugDump(Path(args.dump_imfs) if args.dump_imfs else None,
                         Path(args.dump_curves) if args.dump_curves else None)
    subjects, errors = extract_cohort(records, annotations, args.seed, fcfg, args.jobs, dump)
    if errors:
        print(f"extraction failed for {len(errors)} subject(s):", file=sys.stderr)
        for e in errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_DATA

    out = Path(args.out)
    matrix = build_feature_matrix(subjects)
    _write_text(out, matrix.to_csv())
    _write_meta(out, cfg, {"feature_config": fcfg.as_dict()})

    gate_path = Path(args.gate_report) if args.gate_report else _sibling(out, ".gate.csv")
    rows = gate_report_rows(subjects)
    _write_csv(gate_path, ["subject_id", "label_manifest", "kind", "vowels_before", "vowels_after"],
               [[r["subject_id"], r["label_manifest"], r["kind"], r["vowels_before"], r["vowels_after"]]
                for r in rows])
    _write_meta(gate_path, cfg)
    summary_path = _sibling(gate_path, ".summary.csv")
    srows = gate_summary(subjects)
    keys = ["kind", "label_manifest", "n_subjects", "before_mean", "before_sd", "after_mean", "after_sd"]
    _write_csv(summary_path, keys, [[r[k] if isinstance(r[k], (int, str)) else _fmt(r[k]) for k in keys]
                                    for r in srows])
    _write_meta(summary_path, cfg)
    print(f"wrote {matrix.n_subjects} x {len(matrix.feature_names)} features to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- correlate

def correlation_grid(matrix: FeatureMatrix) -> tuple[list[str], list[list]]:
    """Rows (kind, stat); per measure: rho, p, n and a significance flag.

    Cells without a column (SSV length) or with an undefined rho are blank.
    """
    y = matrix.labels
    if np.unique(y).size < 2:
        raise SingleClassError("correlation needs both manifest classes")
    X = matrix.as_nan()
    col = {n: j for j, n in enumerate(matrix.feature_names)}
    header = ["sample", "stat"]
    for m in GRID_MEASURES:
        header += [f"{m}.rho", f"{m}.p", f"{m}.n", f"{m}.significant"]
    keys = [("SV", "value", "sv.{m}")]
    keys += [("SSV", s, "ssv.{m}." + s) for s in STATS]
    keys += [("GFPV", s, "gfpv.{m}." + s) for s in STATS]
    rows = []
    for kind, stat, pattern in keys:
        row = [kind, stat]
        for m in GRID_MEASURES:
            name = pattern.format(m=m)
            if name not in col:
                row += ["", "", "", ""]
                continue
            try:
                c = correlate(name, X[:, col[name]], y)
            except ValueError:
                c = None
            if c is None or not c.defined:
                row += ["", "", str(c.n if c else 0), ""]
            else:
                row += [repr(c.rho), repr(c.p_value), str(c.n), str(int(c.p_value < SIGNIFICANCE))]
        rows.append(row)
    return header, rows


def cmd_correlate(args) -> int:
    cfg = RunConfig("correlate", paths={"features": str(args.features), "out": str(args.out)},
                    options={"significance": SIGNIFICANCE})
    matrix = FeatureMatrix.from_csv(args.features)
    header, rows = correlation_grid(matrix)
    out = Path(args.out)
    _write_csv(out, header, rows)
    _write_meta(out, cfg)
    n_sig = sum(r[i] == "1" for r in rows for i in range(5, len(r), 4))
    print(f"wrote {len(rows)}-row correlation grid to {out} ({n_sig} cells with p < {SIGNIFICANCE})")
    return EXIT_OK


# ---------------------------------------------------------------- classify

def vowel_feature_sets(names: list[str], samples: str) -> dict[str, list[str]]:
    """Named vowel feature sets restricted to GFPV columns or all sample kinds."""
    pool = [n for n in names if samples == "all" or n.startswith("gfpv.")]
    measure = {n: n.split(".")[1] for n in pool}
    return {
        "vowel_length": [n for n in pool if measure[n] == "length_ms"],
        "trend_fluctuation": [n for n in pool if measure[n] in ("hurst_imf1", "sd_mult", "sd_add")],
        "all_vowel": pool,
    }


def baseline_groups(names: list[str]) -> dict[str, list[str]]:
    """Group baseline columns by the prefix before the first dot."""
    groups: dict[str, list[str]] = {}
    for n in names:
        groups.setdefault(n.split(".", 1)[0] if "." in n else "baseline", []).append(n)
    return groups


def join_baseline(vowel: FeatureMatrix, base: FeatureMatrix) -> FeatureMatrix:
    """Merge baseline columns into the vowel matrix by subject_id."""
    vs, bs = set(vowel.subject_ids), set(base.subject_ids)
    if vs != bs:
        only_v = sorted(vs - bs)
        only_b = sorted(bs - vs)
        raise JoinError("subject mismatch between feature files: "
                        f"only in vowel features {only_v}; only in baseline {only_b}")
    clash = sorted(set(vowel.feature_names) & set(base.feature_names))
    if clash:
        raise SchemaError(f"baseline columns collide with vowel columns: {clash}")
    order = [base.subject_ids.index(s) for s in vowel.subject_ids]
    return FeatureMatrix(list(vowel.subject_ids), vowel.feature_names + base.feature_names,
                         np.hstack([vowel.values, base.values[order]]),
                         np.hstack([vowel.missing, base.missing[order]]),
                         vowel.labels.copy(), list(vowel.stages))


def _parse_quota(text: str) -> dict[str, int]:
    try:
        b, v = (int(t) for t in text.split(","))
    except ValueError:
        raise UsageError(f"--quota expects two integers 'baseline,vowel', got {text!r}") from None
    if b < 0 or v < 0:
        raise UsageError("--quota values must be non-negative")
    return {"baseline": b, "vowel": v}


def cmd_classify(args) -> int:
    if args.quota and not args.baseline_features:
        raise UsageError("--quota needs --baseline-features (two feature groups)")
    quota = _parse_quota(args.quota or "5,5")
    cfg = RunConfig("classify", p_threshold=args.p_threshold, vif_threshold=args.vif_threshold,
                    max_features=args.max_features, c=args.C,
                    paths={"features": str(args.features), "baseline_features": str(args.baseline_features or ""),
                           "out": str(args.out)},
                    options={"samples": args.samples, "quota": quota if args.baseline_features else None})
    cfg.validate()
    vowel = FeatureMatrix.from_csv(args.features)
    sets = vowel_feature_sets(vowel.feature_names, args.samples)
    experiments: list[tuple[str, list[str], dict | None]] = []
    matrix = vowel
    group_of: dict[str, str] = {}
    if args.baseline_features:
        base = FeatureMatrix.from_csv(args.baseline_features, require_labels=False)
        matrix = join_baseline(vowel, base)
        bgroups = baseline_groups(base.feature_names)
        if len(bgroups) > 1:
            for g, cols in bgroups.items():
                experiments.append((f"baseline:{g}", cols, None))
        experiments.append(("all_baseline", list(base.feature_names), None))
        group_of = {n: "baseline" for n in base.feature_names}
        group_of.update({n: "vowel" for n in sets["all_vowel"]})
    for name in ("vowel_length", "trend_fluctuation", "all_vowel"):
        experiments.append((name, sets[name], None))
    if args.baseline_features:
        experiments.append(("baseline+vowel", list(base.feature_names) + sets["all_vowel"], quota))

    results = []
    primary = None
    for name, cols, q in experiments:
        if not cols:
            log.warning("feature set %s is empty; skipped", name)
            continue
        mcfg = ModelConfig(cfg.p_threshold, cfg.vif_threshold, cfg.max_features, cfg.c, q)
        report = loso_evaluate(matrix.select_columns(cols), mcfg, group_of if q else None)
        entry = {"feature_set": name, "n_features_available": len(cols), **report.to_dict()}
        results.append(entry)
        if name == "all_vowel":
            primary = report

    out = Path(args.out)
    _write_json(out, {**cfg.provenance(), "primary": "all_vowel", "experiments": results})
    metrics_path = _sibling(out, ".metrics.csv")
    _write_csv(metrics_path, ["feature_set", "n_features_available", "accuracy", "f1", "n_degenerate_folds"],
               [[e["feature_set"], e["n_features_available"], repr(e["accuracy"]), repr(e["f1"]),
                 e["n_degenerate_folds"]] for e in results])
    _write_meta(metrics_path, cfg)
    coef_path = _sibling(out, ".coefficients.csv")
    coef_rows = primary.coefficients if primary is not None else []
    _write_csv(coef_path, ["feature", "mean_beta", "sd_beta", "p", "selection_count", "majority"],
               [[r.feature, repr(r.mean_beta), repr(r.sd_beta), repr(r.p_value), r.selection_count,
                 int(r.majority)] for r in coef_rows])
    _write_meta(coef_path, cfg, {"feature_set": "all_vowel"})
    for e in results:
        print(f"{e['feature_set']:<20} accuracy {e['accuracy']:.3f}  f1 {e['f1']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------- imf-variance

def _synthetic_vowels(n: int, seed: int, fs: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        spec = AmHarmonicSpec(f0_hz=rng.uniform(100, 250), duration_ms=rng.uniform(60, 200),
                              sample_rate_hz=fs, envelope_db=rng.uniform(-6, 6),
                              drift_amplitude=rng.uniform(0.1, 0.5), drift_hz=rng.uniform(15, 45),
                              noise_h=rng.uniform(0.3, 0.8), noise_level=rng.uniform(0.05, 0.2))
        out.append(gen_am_harmonic(spec, rng).samples)
    return out


def cmd_imf_variance(args) -> int:
    cfg = RunConfig("imf-variance", seed=args.seed, paths={"out": str(args.out)},
                    options={"n": args.n, "sample_rate_hz": args.sample_rate})
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    fs = args.sample_rate
    profiles = []
    for x in _synthetic_vowels(args.n, args.seed, fs):
        _, corrected = multiplicative_trend(x, fs)
        profiles.append(imf_variances(decompose(normalize_peak(AudioClip(corrected, fs)).samples)))
    mean, sd, count = variance_profile(profiles)
    knee = knee_index(mean)
    out = Path(args.out)
    _write_csv(out, ["imf", "mean_variance", "sd_variance", "n_vowels"],
               [[k + 1, repr(float(mean[k])), repr(float(sd[k])), int(count[k])] for k in range(mean.size)])
    _write_meta(out, cfg, {"knee_imf": knee})
    width = 40
    top = float(mean.max()) if mean.size else 1.0
    for k in range(mean.size):
        bar = "#" * max(1, int(round(width * mean[k] / top))) if mean[k] > 0 else ""
        print(f"IMF {k + 1:>2} {mean[k]:.3e} {bar}")
    print(f"largest drop after IMF {knee}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=TOOL, description="Vowel distortion features and manifest-stage classification.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic two-class cohort")
    s.add_argument("--n-per-class", type=int, required=True)
    s.add_argument("--deltas", default="default", help="'default', 'zero' or name=value,...")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--sample-rate", type=int, default=44100)
    s.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("extract", help="per-subject vowel features")
    e.add_argument("--manifest", required=True)
    e.add_argument("--segments", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--imf-trend-cutoff", type=int, default=IMF_TREND_CUTOFF)
    e.add_argument("--r2-gate", type=float, default=0.99)
    e.add_argument("--hurst-window-ms", default=",".join(str(v) for v in HURST_WINDOW_MS))
    e.add_argument("--no-hurst-integrate", action="store_true",
                   help="apply the window-mean fluctuation to the IMF itself, not its profile")
    e.add_argument("--boundary", choices=("mirror", "none"), default="mirror")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--gate-report", help="gate report CSV (default: <out>.gate.csv)")
    e.add_argument("--dump-imfs", metavar="DIR", help="write per-vowel IMF CSVs")
    e.add_argument("--dump-curves", metavar="DIR", help="write per-vowel fluctuation curves")
    e.set_defaults(func=cmd_extract)

    c = sub.add_parser("correlate", help="Spearman grid of features vs manifest label")
    c.add_argument("--features", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_correlate)

    k = sub.add_parser("classify", help="leave-one-subject-out classification experiments")
    k.add_argument("--features", required=True)
    k.add_argument("--baseline-features")
    k.add_argument("--quota", help="per-group caps 'baseline,vowel' for the combined experiment")
    k.add_argument("--samples", choices=("gfpv", "all"), default="gfpv")
    k.add_argument("--p-threshold", type=float, default=0.1)
    k.add_argument("--vif-threshold", type=float, default=5.0)
    k.add_argument("--max-features", type=int, default=10)
    k.add_argument("-C", type=float, default=1.0)
    k.add_argument("--out", required=True, help="report JSON; metrics and coefficient CSVs go alongside")
    k.set_defaults(func=cmd_classify)

    v = sub.add_parser("imf-variance", help="mean IMF variance profile of synthetic vowels")
    v.add_argument("--n", type=int, default=50)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--sample-rate", type=int, default=44100)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_imf_variance)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{TOOL} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GeneratorError, ValueError) as exc:
        print(f"{TOOL} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegeneracyError as exc:
        print(f"{TOOL} {args.command}: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, OSError) as exc:
        print(f"{TOOL} {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
