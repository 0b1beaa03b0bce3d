"""Spearman correlation, variance inflation factor and greedy feature selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConstantInputError, SingleClassError

VIF_INF = math.inf
RIDGE_PENALTY = 1e-8


def _pairwise_complete(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    ok = ~(np.isnan(x) | np.isnan(y))
    return x[ok], y[ok]


def spearman(x, y) -> float:
    """Spearman's rho: Pearson correlation of average (tie-corrected) ranks.

    NaN pairs are dropped first.
    """
    x, y = _pairwise_complete(x, y)
    if x.size < 3:
        raise ValueError(f"need at least 3 complete pairs, got {x.size}")
    rx = stats.rankdata(x) - (x.size + 1) / 2.0
    ry = stats.rankdata(y) - (y.size + 1) / 2.0
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInputError("Spearman correlation undefined for constant input")
    rho = float(rx @ ry) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def spearman_pvalue(rho: float, n: int) -> float:
    """Two-sided p-value via the t approximation with n - 2 degrees of freedom."""
    if n < 4:
        raise ValueError(f"need n >= 4 for a p-value, got {n}")
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))


@dataclass(frozen=True)
class Correlation:
    feature: str
    rho: float | None
    p_value: float | None
    n: int

    @property
    def defined(self) -> bool:
        return self.rho is not None and self.p_value is not None


def correlate(name: str, x, y) -> Correlation:
    xc, yc = _pairwise_complete(x, y)
    n = int(xc.size)
    if n < 4:
        return Correlation(name, None, None, n)
    try:
        rho = spearman(xc, yc)
    except ConstantInputError:
        return Correlation(name, None, None, n)
    return Correlation(name, rho, spearman_pvalue(rho, n), n)


def correlation_report(X, y, names: list[str]) -> list[Correlation]:
    """Spearman rho, p and pairwise-complete n of every column against ``y``.

    ``X`` holds NaN in missing cells.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.unique(y[~np.isnan(y)]).size < 2:
        raise SingleClassError("labels contain a single class")
    return [correlate(name, X[:, j], y) for j, name in enumerate(names)]


def vif(candidate, confirmed) -> float:
    """Variance inflation factor of ``candidate`` regressed on ``confirmed`` columns.

    Ordinary least squares with an intercept; a rank-deficient design falls
    back to ridge with a 1e-8 penalty. Returns ``inf`` when R^2 reaches 1.
    """
    c = np.asarray(candidate, dtype=np.float64).ravel()
    Z = np.asarray(confirmed, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != c.size or Z.shape[1] == 0:
        raise ValueError("confirmed must be a nonempty matrix aligned with candidate")
    A = np.column_stack([np.ones(c.size), Z])
    if np.linalg.matrix_rank(A) < A.shape[1]:
        reg = RIDGE_PENALTY * np.eye(A.shape[1])
        reg[0, 0] = 0.0
        beta = np.linalg.solve(A.T @ A + reg, A.T @ c)
    else:
        beta = np.linalg.lstsq(A, c, rcond=None)[0]
    resid = c - A @ beta
    dc = c - c.mean()
    ss_tot = float(dc @ dc)
    if ss_tot == 0.0:
        return VIF_INF
    r2 = 1.0 - float(resid @ resid) / ss_tot
    if r2 >= 1.0 - 1e-12:
        return VIF_INF
    return max(1.0, 1.0 / (1.0 - r2))


def impute_fit(X) -> np.ndarray:
    """Column means over non-missing cells (0 for an all-missing column)."""
    X = np.asarray(X, dtype=np.float64)
    ok = ~np.isnan(X)
    counts = ok.sum(axis=0)
    sums = np.where(ok, X, 0.0).sum(axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def impute_apply(means, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.where(np.isnan(X), np.broadcast_to(means, X.shape), X)


@dataclass(frozen=True, eq=False)
class ZScore:
    means: np.ndarray
    sds: np.ndarray


def zscore_fit(X) -> ZScore:
    """Training means and population SDs; missing cells are mean-imputed first."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    means = impute_fit(X)
    filled = impute_apply(means, X)
    return ZScore(means, filled.std(axis=0))


def zscore_apply(params: ZScore, X) -> np.ndarray:
    """(x - mean) / sd per column; zero-SD columns map to 0, missing cells to 0."""
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    filled = impute_apply(params.means, X)
    safe = np.where(params.sds > 0, params.sds, 1.0)
    Z = np.where(params.sds > 0, (filled - params.means) / safe, 0.0)
    return Z[:, 0] if squeeze else Z


@dataclass
class SelectionRound:
    added: str
    rho: float
    p_value: float
    pruned: dict[str, float] = field(default_factory=dict)
    skipped_quota: list[str] = field(default_factory=list)


@dataclass
class SelectionResult:
    features: list[str]
    potential: list[Correlation]
    rounds: list[SelectionRound]

    @property
    def empty(self) -> bool:
        return not self.features


def select_features(X, y, names: list[str], p_threshold: float = 0.1, vif_threshold: float = 5.0,
                    max_features: int = 10, groups: dict[str, str] | None = None,
                    quotas: dict[str, int] | None = None) -> SelectionResult:
    """Greedy correlation/VIF selection on training rows.

    Candidates are features with Spearman p < ``p_threshold`` against ``y``
    (pairwise-complete cases). Repeatedly confirm the candidate with the
    largest |rho| (ties: ascending name), then drop every remaining candidate
    whose VIF against the confirmed set exceeds ``vif_threshold``. VIFs use
    mean-imputed, z-scored columns. ``quotas`` caps the count per group
    (``groups`` maps feature name to group).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    corr = correlation_report(X, y, names)
    potential = [c for c in corr if c.defined and c.p_value < p_threshold]
    col = {n: j for j, n in enumerate(names)}
    Z = zscore_apply(zscore_fit(X), X)

    def group_of(name):
        return (groups or {}).get(name, "")

    taken: dict[str, int] = {}

    def over_quota(name):
        if not quotas:
            return False
        g = group_of(name)
        return g in quotas and taken.get(g, 0) >= quotas[g]

    remaining = sorted((c for c in potential if not over_quota(c.feature)),
                       key=lambda c: (-abs(c.rho), c.feature))
    confirmed: list[str] = []
    rounds: list[SelectionRound] = []
    while remaining and len(confirmed) < max_features:
        best = remaining.pop(0)
        confirmed.append(best.feature)
        taken[group_of(best.feature)] = taken.get(group_of(best.feature), 0) + 1
        rnd = SelectionRound(best.feature, best.rho, best.p_value)
        keep = []
        for c in remaining:
            if over_quota(c.feature):
                rnd.skipped_quota.append(c.feature)
                continue
            v = vif(Z[:, col[c.feature]], Z[:, [col[f] for f in confirmed]])
            if v > vif_threshold:
                rnd.pruned[c.feature] = v
            else:
                keep.append(c)
        remaining = keep
        rounds.append(rnd)
    return SelectionResult(confirmed, potential, rounds)
