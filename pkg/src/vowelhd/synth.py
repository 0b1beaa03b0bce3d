"""Synthetic signals with known properties, used as estimator oracles and cohorts."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, write_wav
from .errors import GeneratorError


def fgn_autocovariance(h: float, n: int) -> np.ndarray:
    k = np.arange(n, dtype=np.float64)
    return 0.5 * (np.abs(k + 1) ** (2 * h) - 2 * np.abs(k) ** (2 * h) + np.abs(k - 1) ** (2 * h))


def gen_fgn(h: float, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """Unit-variance fractional Gaussian noise by circulant embedding (Davies-Harte).

    ``n`` must be a power of two, at least 1024.
    """
    if not (0.0 < h < 1.0):
        raise GeneratorError(f"Hurst parameter must lie in (0, 1), got {h}")
    if n < 1024 or n & (n - 1):
        raise GeneratorError(f"n must be a power of two >= 1024, got {n}")
    rng = np.random.default_rng(seed)
    gamma = fgn_autocovariance(h, n + 1)
    row = np.concatenate([gamma[:n + 1], gamma[n - 1:0:-1]])
    lam = np.fft.fft(row).real
    if np.min(lam) < -1e-10 * np.max(lam):
        raise GeneratorError(f"circulant embedding not non-negative for h={h}, n={n}")
    lam = np.clip(lam, 0.0, None)
    m = row.size
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    w = np.fft.fft(np.sqrt(lam / m) * z)
    return w.real[:n]


def gen_fgn_any(h: float, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """fGn of arbitrary length: generate the next power of two and truncate."""
    m = max(1024, 1 << (max(n, 1) - 1).bit_length())
    return gen_fgn(h, m, seed)[:n]


def gen_colored_noise(beta: float, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """Gaussian noise with power spectrum ~ 1/f^beta, scaled to unit variance."""
    rng = np.random.default_rng(seed)
    f = np.fft.rfftfreq(n)
    amp = np.zeros_like(f)
    amp[1:] = f[1:] ** (-beta / 2.0)
    spec = amp * (rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size))
    if n % 2 == 0:
        spec[-1] = spec[-1].real
    x = np.fft.irfft(spec, n)
    sd = x.std()
    return x / sd if sd > 0 else x


@dataclass(frozen=True)
class AmHarmonicSpec:
    """Harmonic vowel with a level ramp, a sinusoidal drift and fGn noise.

    ``envelope_db`` is the level change (dB, linear in time) across the vowel;
    ``noise_level`` is the fGn standard deviation relative to the unit-RMS
    harmonic part. ``gain`` scales the final sum.
    """

    f0_hz: float = 150.0
    duration_ms: float = 105.0
    sample_rate_hz: int = 44100
    n_harmonics: int = 10
    harmonic_decay: float = 0.7
    envelope_db: float = 0.0
    drift_amplitude: float = 0.0
    drift_hz: float = 30.0
    noise_h: float = 0.5
    noise_level: float = 0.0
    gain: float = 1.0

    def __post_init__(self):
        if self.f0_hz < 100.0:
            raise GeneratorError(f"f0 must be >= 100 Hz, got {self.f0_hz}")
        if not (0.0 < self.noise_h < 1.0):
            raise GeneratorError(f"noise H must lie in (0, 1), got {self.noise_h}")
        if self.duration_ms <= 0:
            raise GeneratorError("duration must be positive")


def gen_am_harmonic(spec: AmHarmonicSpec, seed: int | np.random.Generator) -> AudioClip:
    rng = np.random.default_rng(seed)
    fs = spec.sample_rate_hz
    n = max(16, int(round(spec.duration_ms * fs / 1000.0)))
    t = np.arange(n) / fs
    phases = rng.uniform(0, 2 * np.pi, spec.n_harmonics + 1)
    nyq = fs / 2.0
    x = np.zeros(n)
    for k in range(1, spec.n_harmonics + 1):
        if k * spec.f0_hz >= nyq:
            break
        x += spec.harmonic_decay ** (k - 1) * np.sin(2 * np.pi * k * spec.f0_hz * t + phases[k - 1])
    x /= np.sqrt(np.mean(x * x))
    if spec.envelope_db:
        x *= 10.0 ** (np.linspace(-0.5, 0.5, n) * spec.envelope_db / 20.0)
    if spec.drift_amplitude:
        x += spec.drift_amplitude * np.sin(2 * np.pi * spec.drift_hz * t + phases[-1])
    if spec.noise_level:
        x += spec.noise_level * gen_fgn_any(spec.noise_h, n, rng)
    return AudioClip(spec.gain * x, fs)


@dataclass(frozen=True)
class CohortDeltas:
    """Manifest-minus-premanifest shifts of the subject-level generator means."""

    gfpv_length_ms: float = 45.0
    envelope_db: float = 6.0
    noise_h: float = -0.4
    drift_scale: float = -0.5
    sv_length_ms: float = -300.0

    @classmethod
    def zero(cls) -> "CohortDeltas":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def parse(cls, text: str) -> "CohortDeltas":
        """``"default"``, ``"zero"`` or comma-separated ``name=value`` overrides."""
        text = text.strip()
        if text in ("", "default"):
            return cls()
        if text == "zero":
            return cls.zero()
        kw = {}
        names = {f.name for f in fields(cls)}
        for part in text.split(","):
            key, _, value = part.partition("=")
            key = key.strip()
            if key not in names:
                raise ValueError(f"unknown delta {key!r}; expected one of {sorted(names)}")
            kw[key] = float(value)
        return cls(**kw)


def _subject_params(rng: np.random.Generator, manifest: int, d: CohortDeltas) -> dict:
    m = float(manifest)
    return {
        "f0": rng.uniform(100.0, 220.0),
        "len_ms": rng.normal(105.0, 10.0) + m * d.gfpv_length_ms,
        "env_db": rng.uniform(2.0, 5.0) + m * d.envelope_db,
        "noise_h": float(np.clip(0.7 + m * d.noise_h + rng.normal(0, 0.05), 0.05, 0.95)),
        "noise_level": rng.uniform(0.05, 0.15),
        "drift": rng.uniform(0.2, 0.4) * (1.0 + m * d.drift_scale),
        "drift_hz": rng.uniform(20.0, 40.0),
        "sv_ms": rng.normal(1000.0, 80.0) + m * d.sv_length_ms,
    }


def _vowel_spec(p: dict, duration_ms: float, env_db: float, fs: int) -> AmHarmonicSpec:
    return AmHarmonicSpec(f0_hz=p["f0"], duration_ms=duration_ms, sample_rate_hz=fs,
                          envelope_db=env_db, drift_amplitude=p["drift"], drift_hz=p["drift_hz"],
                          noise_h=p["noise_h"], noise_level=p["noise_level"], gain=0.2)


def gen_cohort(out_dir: str | Path, n_per_class: int, deltas: CohortDeltas | None = None,
               seed: int = 0, sample_rate_hz: int = 44100) -> tuple[Path, Path]:
    """Write manifest.csv, segments.csv and per-subject SV/GFP WAVs.

    Returns the manifest and annotation paths. Manifest-class subjects get
    longer passage vowels, larger level ramps, rougher noise and less drift.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    d = deltas or CohortDeltas()
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    fs = sample_rate_hz
    manifest_rows = []
    seg_rows = []
    for idx in range(2 * n_per_class):
        manifest = idx % 2
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        sid = f"S{idx + 1:03d}"
        if manifest:
            dcl, tfc = 4, int(rng.integers(3, 14))
        else:
            dcl, tfc = int(rng.integers(0, 4)), int(rng.integers(10, 14))
        p = _subject_params(rng, manifest, d)

        sv = gen_am_harmonic(_vowel_spec(p, max(p["sv_ms"], 300.0), p["env_db"], fs), rng)
        sv_name = f"wav/{sid}_sv.wav"
        write_wav(out / sv_name, sv)

        pieces = [0.02 * rng.standard_normal(int(0.05 * fs))]
        cursor = pieces[0].size
        for _ in range(int(rng.integers(10, 13))):
            length = float(np.clip(rng.normal(p["len_ms"], 30.0), 40.0, 400.0))
            env = p["env_db"] * rng.choice([-1.0, 1.0]) + rng.normal(0.0, 1.0)
            v = gen_am_harmonic(_vowel_spec(p, length, env, fs), rng).samples
            pieces.append(v)
            seg_rows.append([sid, "GFP", "V", f"{cursor / fs:.6f}", f"{(cursor + v.size) / fs:.6f}"])
            cursor += v.size
            gap = 0.02 * rng.standard_normal(int(rng.uniform(0.04, 0.09) * fs))
            pieces.append(gap)
            cursor += gap.size
        gfp_name = f"wav/{sid}_gfp.wav"
        write_wav(out / gfp_name, AudioClip(np.concatenate(pieces), fs))
        manifest_rows.append([sid, dcl, tfc, sv_name, gfp_name])

    manifest_path = out / "manifest.csv"
    seg_path = out / "segments.csv"
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "dcl", "tfc", "sv_wav", "gfp_wav"])
        w.writerows(manifest_rows)
    with open(seg_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "task", "phone", "start_s", "end_s"])
        w.writerows(seg_rows)
    return manifest_path, seg_path
