"""Windowed fluctuation analysis: DFA exponent and the gated first-IMF Hurst estimate."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import ms_to_samples
from .errors import DegenerateSignalError, TooShortError

N_SCALES = 10
DFA_WINDOW_MS = (2.0, 4.0)
HURST_WINDOW_MS = (2.0, 10.0)
R2_GATE = 0.99


class Detrend(str, enum.Enum):
    LINEAR_FIT = "linear"
    WINDOW_MEAN = "mean"


@dataclass(frozen=True, eq=False)
class FluctuationCurve:
    window_sizes: np.ndarray
    fluctuations: np.ndarray
    slope: float
    intercept: float
    r2: float

    @property
    def log_windows(self) -> np.ndarray:
        return np.log(self.window_sizes.astype(np.float64))

    @property
    def log_fluctuations(self) -> np.ndarray:
        return np.log(self.fluctuations)


def log_spaced_windows(lo_ms: float, hi_ms: float, sample_rate_hz: int, n: int = N_SCALES) -> np.ndarray:
    """``n`` log-spaced integer window sizes between two durations, deduplicated."""
    lo = ms_to_samples(lo_ms, sample_rate_hz)
    hi = ms_to_samples(hi_ms, sample_rate_hz)
    w = np.floor(np.geomspace(lo, hi, n) + 0.5).astype(int)
    w[0], w[-1] = lo, hi
    return np.unique(w)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    slope = float(dx @ dy) / sxx
    intercept = float(ym - slope * xm)
    ss_tot = float(dy @ dy)
    resid = dy - slope * dx
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, min(max(r2, 0.0), 1.0)


def _window_residual_ms(y: np.ndarray, n: int, detrend: Detrend) -> float:
    """Mean squared residual over all non-overlapping windows of size ``n``."""
    k = y.size // n
    seg = y[:k * n].reshape(k, n)
    seg = seg - seg.mean(axis=1, keepdims=True)
    if detrend is Detrend.LINEAR_FIT:
        u = np.arange(n, dtype=np.float64)
        u -= u.mean()
        beta = seg @ u / float(u @ u)
        seg = seg - np.outer(beta, u)
    return float(np.mean(seg * seg))


def fluctuation_curve(signal, windows, detrend: Detrend = Detrend.LINEAR_FIT,
                      integrate: bool = True) -> FluctuationCurve:
    """RMS fluctuation per window size and the log-log least-squares fit.

    With ``integrate`` the profile ``cumsum(signal - mean)`` is analysed.
    Each window is detrended by its least-squares line (LINEAR_FIT) or its
    mean (WINDOW_MEAN); tail samples beyond ``floor(N/n)*n`` are dropped.
    """
    x = np.asarray(signal, dtype=np.float64).ravel()
    w = np.asarray(windows, dtype=int)
    detrend = Detrend(detrend)
    if w.size < 2 or np.any(np.diff(w) <= 0):
        raise ValueError("window sizes must be strictly increasing, at least two of them")
    if w[0] < 4:
        raise ValueError("window sizes must be >= 4 samples")
    if x.size < 2 * w[-1]:
        raise TooShortError(f"signal has {x.size} samples, need >= {2 * w[-1]} for window {w[-1]}")
    if np.ptp(x) == 0.0:
        raise DegenerateSignalError("constant signal has no fluctuations")

    y = np.cumsum(x - x.mean()) if integrate else x
    f = np.sqrt(np.array([_window_residual_ms(y, int(n), detrend) for n in w]))
    if np.any(f <= 0):
        raise DegenerateSignalError("zero fluctuation at some window size")
    slope, intercept, r2 = _ols(np.log(w.astype(np.float64)), np.log(f))
    return FluctuationCurve(w, f, slope, intercept, r2)


def dfa_exponent(signal, sample_rate_hz: int) -> float:
    """Classical DFA exponent: linear detrending over 2-4 ms windows."""
    w = log_spaced_windows(*DFA_WINDOW_MS, sample_rate_hz)
    return fluctuation_curve(signal, w, Detrend.LINEAR_FIT, integrate=True).slope


@dataclass(frozen=True)
class HurstEstimate:
    value: float | None
    curve: FluctuationCurve

    @property
    def passed(self) -> bool:
        return self.value is not None

    @property
    def slope(self) -> float:
        return self.curve.slope


def hurst_first_imf(imf1, sample_rate_hz: int, r2_gate: float = R2_GATE,
                    integrate: bool = True,
                    window_ms: tuple[float, float] = HURST_WINDOW_MS) -> HurstEstimate:
    """Hurst exponent of the first IMF using window-mean detrending.

    The value is withheld (``None``) when the log-log fit has R^2 below
    ``r2_gate``; the curve is returned either way.
    """
    w = log_spaced_windows(*window_ms, sample_rate_hz)
    curve = fluctuation_curve(imf1, w, Detrend.WINDOW_MEAN, integrate=integrate)
    return HurstEstimate(curve.slope if curve.r2 >= r2_gate else None, curve)


def dump_curve_csv(curve: FluctuationCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["window_samples", "fluctuation", "log_window", "log_fluctuation"])
        for n, f in zip(curve.window_sizes, curve.fluctuations):
            out.writerow([int(n), repr(float(f)), repr(float(np.log(n))), repr(float(np.log(f)))])
        out.writerow(["fit", f"slope={curve.slope!r}", f"intercept={curve.intercept!r}", f"r2={curve.r2!r}"])
