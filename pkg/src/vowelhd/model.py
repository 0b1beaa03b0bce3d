"""L2 logistic regression and the leave-one-subject-out evaluation harness."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .errors import DimensionError, SingleClassError
from .features import FeatureMatrix
from .stats_select import (SelectionResult, ZScore, impute_apply, impute_fit, select_features,
                           zscore_apply, zscore_fit)


@dataclass(frozen=True, eq=False)
class LogRegModel:
    weights: np.ndarray
    intercept: float
    c: float
    n_iter: int = 0
    converged: bool = True


def objective(params, X, y, c: float) -> tuple[float, np.ndarray]:
    """J(w, b) = 0.5*||w||^2 + c * sum log(1 + exp(-s_i (w.x_i + b))), s in {-1, +1}.

    Returns the value and the gradient with respect to ``[w..., b]``.
    """
    X = np.asarray(X, dtype=np.float64)
    w, b = params[:-1], params[-1]
    s = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    m = s * (X @ w + b)
    loss = float(np.sum(np.logaddexp(0.0, -m)))
    g = -c * s * special.expit(-m)
    grad = np.empty_like(params, dtype=np.float64)
    grad[:-1] = w + X.T @ g
    grad[-1] = np.sum(g)
    return 0.5 * float(w @ w) + c * loss, grad


def hessian(params, X, y, c: float) -> np.ndarray:
    """Hessian of the objective; the intercept is unpenalized."""
    X = np.asarray(X, dtype=np.float64)
    A = np.column_stack([X, np.ones(X.shape[0])])
    p = special.expit(A @ params)
    H = c * (A.T * (p * (1.0 - p))) @ A
    H[np.arange(X.shape[1]), np.arange(X.shape[1])] += 1.0
    return H


def fit(X, y, c: float = 1.0, memory: int = 10, gtol: float = 1e-6, max_iter: int = 500) -> LogRegModel:
    """Minimize the L2-penalized logistic loss with limited-memory BFGS."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DimensionError(f"X shape {X.shape} does not match {y.size} labels")
    if np.unique(y).size < 2:
        raise SingleClassError("training labels contain a single class")
    res = optimize.minimize(objective, np.zeros(X.shape[1] + 1), args=(X, y, c), jac=True,
                            method="L-BFGS-B",
                            options={"maxcor": memory, "gtol": gtol, "ftol": 1e-15, "maxiter": max_iter})
    return LogRegModel(res.x[:-1].copy(), float(res.x[-1]), c, int(res.nit), bool(res.success))


def predict_proba(model: LogRegModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.shape[1] != model.weights.size:
        raise DimensionError(f"expected {model.weights.size} features, got {X2.shape[1]}")
    p = special.expit(X2 @ model.weights + model.intercept)
    return p[0] if single else p


def predict(model: LogRegModel, x) -> tuple[float, int]:
    """Probability of the manifest class and the label (manifest iff p >= 0.5)."""
    p = float(predict_proba(model, np.asarray(x, dtype=np.float64).ravel()))
    return p, int(p >= 0.5)


def wald_pvalues(model: LogRegModel, X, y) -> np.ndarray:
    """Two-sided Wald p-values of the weights from the inverse Hessian of J."""
    params = np.r_[model.weights, model.intercept]
    H = hessian(params, X, y, model.c)
    cov = np.linalg.pinv(H)
    se = np.sqrt(np.maximum(np.diag(cov)[:-1], 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(model.weights) / se, 0.0)
    return np.clip(2.0 * stats.norm.sf(z), np.finfo(float).tiny, 1.0)


def metrics(y_true, y_pred) -> tuple[float, float]:
    """Accuracy and F1 with manifest (1) as the positive class; undefined F1 -> 0."""
    t = np.asarray(y_true, dtype=int)
    p = np.asarray(y_pred, dtype=int)
    if t.size == 0 or t.size != p.size:
        raise ValueError("y_true and y_pred must be nonempty and of equal length")
    acc = float(np.mean(t == p))
    tp = int(np.sum((t == 1) & (p == 1)))
    fp = int(np.sum((t == 0) & (p == 1)))
    fn = int(np.sum((t == 1) & (p == 0)))
    if tp + fp == 0 or tp + fn == 0 or tp == 0:
        return acc, 0.0
    prec, rec = tp / (tp + fp), tp / (tp + fn)
    return acc, 2 * prec * rec / (prec + rec)


@dataclass(frozen=True)
class ModelConfig:
    p_threshold: float = 0.1
    vif_threshold: float = 5.0
    max_features: int = 10
    c: float = 1.0
    quotas: dict[str, int] | None = None

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class FoldModel:
    """Everything learned from one fold's training rows."""

    impute_means: np.ndarray
    selection: SelectionResult
    scaler: ZScore | None
    model: LogRegModel | None
    majority_label: int
    majority_prob: float


def fit_fold(X, y, names: list[str], config: ModelConfig, groups: dict[str, str] | None = None) -> FoldModel:
    """Impute, select, standardize and fit using training rows only.

    ``X`` has NaN in missing cells.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    means = impute_fit(X)
    sel = select_features(X, y, names, config.p_threshold, config.vif_threshold,
                          config.max_features, groups, config.quotas)
    frac = float(np.mean(y))
    majority = int(frac >= 0.5)
    if sel.empty:
        return FoldModel(means, sel, None, None, majority, frac)
    idx = [names.index(f) for f in sel.features]
    Xs = impute_apply(means[idx], X[:, idx])
    scaler = zscore_fit(Xs)
    model = fit(zscore_apply(scaler, Xs), y, config.c)
    return FoldModel(means, sel, scaler, model, majority, frac)


def predict_fold(fm: FoldModel, x, names: list[str]) -> tuple[float, int]:
    if fm.model is None:
        return fm.majority_prob, fm.majority_label
    idx = [names.index(f) for f in fm.selection.features]
    xs = impute_apply(fm.impute_means[idx], np.asarray(x, dtype=np.float64)[idx][None, :])
    return predict(fm.model, zscore_apply(fm.scaler, xs)[0])


@dataclass
class FoldRecord:
    held_out: str
    label: int
    prediction: int
    probability: float
    selected: list[str]
    coefficients: dict[str, float]
    intercept: float | None
    wald_p: dict[str, float]
    degenerate: bool


@dataclass
class CoefficientRow:
    feature: str
    selection_count: int
    mean_beta: float
    sd_beta: float
    p_value: float
    majority: bool


@dataclass
class LosoReport:
    folds: list[FoldRecord]
    accuracy: float
    f1: float
    coefficients: list[CoefficientRow]
    selection_frequency: dict[str, int]
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "n_folds": len(self.folds),
            "n_degenerate_folds": sum(f.degenerate for f in self.folds),
            "config": self.config,
            "selection_frequency": self.selection_frequency,
            "coefficients": [asdict(r) for r in self.coefficients],
            "folds": [asdict(f) for f in self.folds],
        }


def _coefficient_table(folds: list[FoldRecord]) -> tuple[list[CoefficientRow], dict[str, int]]:
    betas: dict[str, list[float]] = {}
    pvals: dict[str, list[float]] = {}
    for f in folds:
        for name, b in f.coefficients.items():
            betas.setdefault(name, []).append(b)
            pvals.setdefault(name, []).append(f.wald_p[name])
    freq = {k: len(v) for k, v in sorted(betas.items())}
    rows = []
    for name in sorted(betas, key=lambda k: (-len(betas[k]), k)):
        b = np.array(betas[name])
        rows.append(CoefficientRow(name, len(b), float(b.mean()), float(b.std()),
                                   float(np.median(pvals[name])), len(b) > len(folds) / 2))
    return rows, freq


def loso_evaluate(matrix: FeatureMatrix, config: ModelConfig | None = None,
                  groups: dict[str, str] | None = None) -> LosoReport:
    """Leave-one-subject-out evaluation.

    Each fold imputes, selects features, standardizes and fits on the other
    subjects only, then predicts the held-out subject. A fold with an empty
    selection predicts the training majority class and is flagged.
    """
    cfg = config or ModelConfig()
    X = matrix.as_nan()
    y = matrix.labels
    names = list(matrix.feature_names)
    for label in (0, 1):
        if np.sum(y == label) < 2:
            raise SingleClassError(f"LOSO needs >= 2 subjects per class; class {label} has {np.sum(y == label)}")
    folds = []
    for i, sid in enumerate(matrix.subject_ids):
        train = np.arange(len(y)) != i
        fm = fit_fold(X[train], y[train], names, cfg, groups)
        prob, pred = predict_fold(fm, X[i], names)
        if fm.model is None:
            coefs, wald, icpt = {}, {}, None
        else:
            idx = [names.index(f) for f in fm.selection.features]
            Xs = zscore_apply(fm.scaler, impute_apply(fm.impute_means[idx], X[train][:, idx]))
            pv = wald_pvalues(fm.model, Xs, y[train])
            coefs = {f: float(w) for f, w in zip(fm.selection.features, fm.model.weights)}
            wald = {f: float(p) for f, p in zip(fm.selection.features, pv)}
            icpt = fm.model.intercept
        folds.append(FoldRecord(sid, int(y[i]), pred, prob, list(fm.selection.features),
                                coefs, icpt, wald, fm.model is None))
    acc, f1 = metrics(y, [f.prediction for f in folds])
    rows, freq = _coefficient_table(folds)
    return LosoReport(folds, acc, f1, rows, freq, cfg.as_dict())

