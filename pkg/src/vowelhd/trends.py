"""Multiplicative (volume) and additive (low-frequency drift) trends of a vowel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import DBFS_FLOOR, dbfs, ms_to_samples
from .emd import ImfDecomposition
from .errors import DegenerateSignalError, TooShortError

FRAME_MS = 25.0
HOP_MS = 10.0
IMF_TREND_CUTOFF = 5


@dataclass(frozen=True, eq=False)
class MultiplicativeTrend:
    window_dbfs: np.ndarray
    window_centers: np.ndarray
    target_dbfs: float
    sd_db: float


@dataclass(frozen=True, eq=False)
class AdditiveTrend:
    trend: np.ndarray
    sd: float
    cutoff: int


def frame_dbfs(x: np.ndarray, frame: int, hop: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame RMS dBFS and frame-centre positions (in samples)."""
    count = (x.size - frame) // hop + 1
    idx = np.arange(count)[:, None] * hop + np.arange(frame)[None, :]
    ms = np.mean(x[idx] ** 2, axis=1)
    with np.errstate(divide="ignore"):
        level = np.where(ms > 0, 10.0 * np.log10(ms), DBFS_FLOOR)
    level = np.maximum(level, DBFS_FLOOR)
    centers = np.arange(count) * hop + (frame - 1) / 2.0
    return level, centers


def multiplicative_trend(signal, sample_rate_hz: int, frame_ms: float = FRAME_MS,
                         hop_ms: float = HOP_MS) -> tuple[MultiplicativeTrend, np.ndarray]:
    """Quantify the volume trend and return it with the level-corrected signal.

    The per-sample gain brings the local level (frame dBFS, linearly
    interpolated between frame centres and held constant beyond the outer
    centres) to the level of the whole vowel.
    """
    x = np.asarray(signal, dtype=np.float64).ravel()
    frame = ms_to_samples(frame_ms, sample_rate_hz)
    hop = ms_to_samples(hop_ms, sample_rate_hz)
    if x.size < frame:
        raise TooShortError(f"vowel has {x.size} samples, need >= {frame} ({frame_ms} ms)")
    if not np.any(x):
        raise DegenerateSignalError("silent vowel has no level")
    target = dbfs(x)
    level, centers = frame_dbfs(x, frame, hop)
    local = np.interp(np.arange(x.size, dtype=np.float64), centers, level)
    corrected = x * 10.0 ** ((target - local) / 20.0)
    trend = MultiplicativeTrend(level, centers, target, float(np.std(level)))
    return trend, corrected


def additive_trend(decomp: ImfDecomposition, cutoff: int = IMF_TREND_CUTOFF) -> AdditiveTrend:
    """Sum of IMFs with 1-based index above ``cutoff`` plus the residual."""
    trend = decomp.residual.copy()
    for imf in decomp.imfs[cutoff:]:
        trend += imf
    return AdditiveTrend(trend, float(np.std(trend)), cutoff)
