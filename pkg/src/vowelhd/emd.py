"""Empirical mode decomposition.

Classical sifting: cubic-spline envelopes through local maxima and minima,
envelope-mean subtraction until the standard-deviation criterion and the
extrema/zero-crossing condition both hold.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DecompositionError

log = logging.getLogger(__name__)

MIN_LENGTH = 16


@dataclass(frozen=True)
class SiftConfig:
    """Sifting parameters.

    ``boundary`` controls envelope behaviour near the signal ends: ``"mirror"``
    reflects ``n_mirror`` extrema about each endpoint, ``"none"`` lets the
    natural spline extrapolate.
    """

    sd_threshold: float = 0.2
    max_sift: int = 50
    max_imfs: int = 12
    boundary: str = "mirror"
    n_mirror: int = 2
    require_imf_condition: bool = True

    def __post_init__(self):
        if self.boundary not in ("mirror", "none"):
            raise ValueError(f"unknown boundary policy {self.boundary!r}")


@dataclass(eq=False)
class ImfDecomposition:
    imfs: list[np.ndarray]
    residual: np.ndarray
    sift_counts: list[int] = field(default_factory=list)

    @property
    def n_imfs(self) -> int:
        return len(self.imfs)

    def reconstruct(self) -> np.ndarray:
        total = self.residual.copy()
        for imf in self.imfs:
            total += imf
        return total


def find_extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of interior local maxima and minima.

    A flat run counts as a single extremum located at the run's midpoint.
    Endpoints are never extrema.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 3:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    change = np.flatnonzero(np.diff(x) != 0)
    starts = np.r_[0, change + 1]
    ends = np.r_[change, x.size - 1]
    if starts.size < 3:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    dv = np.diff(x[starts])
    up = dv[:-1] > 0
    down = dv[1:] < 0
    kmax = np.flatnonzero(up & down) + 1
    kmin = np.flatnonzero(~up & ~down) + 1
    imax = (starts[kmax] + ends[kmax]) // 2
    imin = (starts[kmin] + ends[kmin]) // 2
    return imax, imin


def count_zero_crossings(x: np.ndarray) -> int:
    s = np.sign(np.asarray(x, dtype=np.float64))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def count_extrema(x: np.ndarray) -> int:
    imax, imin = find_extrema(x)
    return imax.size + imin.size


def is_imf(x: np.ndarray) -> bool:
    return abs(count_extrema(x) - count_zero_crossings(x)) <= 1


def _envelope(t: np.ndarray, idx: np.ndarray, x: np.ndarray, n: int, cfg: SiftConfig) -> np.ndarray:
    pos = idx.astype(np.float64)
    val = x[idx]
    if cfg.boundary == "mirror":
        k = min(cfg.n_mirror, idx.size)
        left = -pos[:k][::-1]
        right = 2.0 * (n - 1) - pos[-k:][::-1]
        pos = np.concatenate([left, pos, right])
        val = np.concatenate([val[:k][::-1], val, val[-k:][::-1]])
    if pos.size < 2:
        return np.full(n, val[0] if val.size else 0.0)
    if pos.size == 2:
        return np.interp(t, pos, val)
    return _kernels.spline_grid(pos, val, n)


def _sift(r: np.ndarray, t: np.ndarray, cfg: SiftConfig) -> tuple[np.ndarray, int]:
    h = r
    n = h.size
    imax, imin = _kernels.extrema(h)
    for it in range(1, cfg.max_sift + 1):
        if imax.size < 1 or imin.size < 1 or imax.size + imin.size < 3:
            return h, it - 1
        mean = 0.5 * (_envelope(t, imax, h, n, cfg) + _envelope(t, imin, h, n, cfg))
        denom = float(np.dot(h, h))
        sd = float(np.dot(mean, mean)) / denom if denom > 0 else 0.0
        h = h - mean
        imax, imin = _kernels.extrema(h)
        if sd < cfg.sd_threshold and (not cfg.require_imf_condition
                                      or abs(imax.size + imin.size - _kernels.zero_crossings(h)) <= 1):
            return h, it
    return h, cfg.max_sift


def decompose(signal, config: SiftConfig | None = None) -> ImfDecomposition:
    """Split ``signal`` into IMFs (highest frequency first) plus a residual.

    Stops when the residual has fewer than three extrema or ``max_imfs`` IMFs
    have been extracted. The residual is computed as ``signal - sum(imfs)``.

    Raises
    ------
    DecompositionError
        If the signal is shorter than 16 samples, constant, or non-finite.
    """
    cfg = config or SiftConfig()
    x = np.asarray(signal, dtype=np.float64).ravel()
    if x.size < MIN_LENGTH:
        raise DecompositionError(f"signal has {x.size} samples, need >= {MIN_LENGTH}")
    if not np.all(np.isfinite(x)):
        raise DecompositionError("signal contains non-finite values")
    if np.ptp(x) == 0.0:
        raise DecompositionError("cannot decompose a constant signal")

    t = np.arange(x.size, dtype=np.float64)
    imfs: list[np.ndarray] = []
    counts: list[int] = []
    r = x.copy()
    while len(imfs) < cfg.max_imfs and sum(e.size for e in _kernels.extrema(r)) >= 3:
        h, it = _sift(r, t, cfg)
        if it == 0:
            break
        imfs.append(h)
        counts.append(it)
        r = r - h
        if it == cfg.max_sift and not is_imf(h):
            log.debug("IMF %d hit the sifting cap without meeting the IMF condition", len(imfs))

    residual = x - np.sum(imfs, axis=0) if imfs else x.copy()
    return ImfDecomposition(imfs, residual, counts)


def imf_variances(decomp: ImfDecomposition) -> list[float]:
    """Variance (ddof=0) of each IMF, in IMF order."""
    return [float(np.var(imf)) for imf in decomp.imfs]


def variance_profile(profiles: list[list[float]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean, population SD and contributor count of IMF variance at each index.

    Profiles may differ in length; index k averages over profiles with a k-th IMF.
    """
    depth = max((len(p) for p in profiles), default=0)
    mean = np.zeros(depth)
    sd = np.zeros(depth)
    count = np.zeros(depth, dtype=int)
    for k in range(depth):
        vals = np.array([p[k] for p in profiles if len(p) > k])
        mean[k], sd[k], count[k] = vals.mean(), vals.std(), vals.size
    return mean, sd, count


def knee_index(mean_variance) -> int:
    """1-based IMF index followed by the largest drop in variance."""
    v = np.asarray(mean_variance, dtype=np.float64)
    if v.size < 2:
        return int(v.size)
    return int(np.argmax(v[:-1] - v[1:])) + 1


def dump_imfs_csv(decomp: ImfDecomposition, path: str | Path) -> None:
    cols = [f"imf{i}" for i in range(1, decomp.n_imfs + 1)] + ["residual"]
    data = np.column_stack(decomp.imfs + [decomp.residual])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
