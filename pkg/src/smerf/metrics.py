"""Distance-recovery and link-prediction metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.stats import rankdata

from .core import NoPositives, ShapeMismatch, SingleClass, TooFewPoints, DegenerateRanks

__all__ = [
    "EvalReport",
    "rmse_pairs",
    "spearman_rows",
    "spearman_per_point",
    "map_at_10",
    "auc_roc",
    "auc_pr",
    "evaluate_distances",
    "evaluate_links",
]


@dataclass
class EvalReport:
    values: Dict[str, float] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key: str) -> float:
        return self.values[key]


def _pair_matrices(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[0] != pred.shape[1]:
        raise ShapeMismatch(f"need matching square matrices, got {pred.shape} and {truth.shape}")
    return pred, truth


def rmse_pairs(pred, truth) -> float:
    """RMSE over the unordered pairs ``i < j``."""
    pred, truth = _pair_matrices(pred, truth)
    if pred.shape[0] < 2:
        raise TooFewPoints("need at least two points")
    iu = np.triu_indices(pred.shape[0], 1)
    err = pred[iu] - truth[iu]
    return float(np.sqrt(np.mean(err * err)))


def _offdiag_rows(M):
    n = M.shape[0]
    return M[~np.eye(n, dtype=bool)].reshape(n, n - 1)


def spearman_rows(pred, truth) -> np.ndarray:
    """Per-point Spearman correlation against all other points (NaN if degenerate)."""
    pred, truth = _pair_matrices(pred, truth)
    if pred.shape[0] < 3:
        raise TooFewPoints("need at least three points")
    rp = rankdata(_offdiag_rows(pred), axis=1)
    rt = rankdata(_offdiag_rows(truth), axis=1)
    rp -= rp.mean(axis=1, keepdims=True)
    rt -= rt.mean(axis=1, keepdims=True)
    num = np.sum(rp * rt, axis=1)
    sp, st = np.sum(rp * rp, axis=1), np.sum(rt * rt, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = num / np.sqrt(sp * st)
    # a constant prediction carries no ranking information; a constant
    # truth row has nothing to rank against and is skipped
    rho[sp == 0] = 0.0
    rho[st == 0] = np.nan
    return np.clip(rho, -1.0, 1.0)


def spearman_per_point(pred, truth) -> float:
    """Mean per-point Spearman correlation; degenerate rows are skipped."""
    rho = spearman_rows(pred, truth)
    if np.all(np.isnan(rho)):
        raise DegenerateRanks("every point has constant predicted or true distances")
    return float(np.nanmean(rho))


def map_at_10(pred, truth, k: int = 10) -> float:
    """Mean average precision with each point's ``k`` true nearest neighbours as relevant.

    Both rankings are by ascending distance with ties broken by point index.
    """
    pred, truth = _pair_matrices(pred, truth)
    n = pred.shape[0]
    if n < k + 1:
        raise TooFewPoints(f"need at least {k + 1} points")
    others = np.arange(n - 1)
    aps = np.empty(n)
    for q in range(n):
        idx = np.delete(np.arange(n), q)
        relevant = idx[np.lexsort((idx, truth[q, idx]))[:k]]
        ranked = idx[np.lexsort((idx, pred[q, idx]))]
        hit = np.isin(ranked, relevant)
        precision = np.cumsum(hit) / (others + 1)
        aps[q] = precision[hit].sum() / k
    return float(aps.mean())


def _binary_labels(labels):
    y = np.asarray(labels)
    if y.dtype != bool:
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be binary")
        y = y.astype(bool)
    return y


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC with half credit for ties."""
    s = np.asarray(scores, dtype=np.float64)
    y = _binary_labels(labels)
    npos, nneg = int(y.sum()), int((~y).sum())
    if npos == 0 or nneg == 0:
        raise SingleClass("AUC-ROC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y].sum() - npos * (npos + 1) / 2) / (npos * nneg))


def auc_pr(scores, labels) -> float:
    """Average precision ``sum_k (R_k - R_{k-1}) P_k`` over descending distinct thresholds."""
    s = np.asarray(scores, dtype=np.float64)
    y = _binary_labels(labels)
    npos = int(y.sum())
    if npos == 0:
        raise NoPositives("AUC-PR needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    precision = tp / (last + 1)
    recall = tp / npos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def evaluate_distances(pred, truth) -> EvalReport:
    rows = spearman_rows(pred, truth)
    n = np.asarray(pred).shape[0]
    values = {"rmse": rmse_pairs(pred, truth), "spearman": float(np.nanmean(rows))}
    if n >= 11:
        values["map10"] = map_at_10(pred, truth)
    return EvalReport(values, {"points": n, "pairs": n * (n - 1) // 2,
                               "spearman_skipped": int(np.isnan(rows).sum())})


def evaluate_links(scores, labels) -> EvalReport:
    y = _binary_labels(labels)
    return EvalReport(
        {"auc_roc": auc_roc(scores, y), "auc_pr": auc_pr(scores, y), "prevalence": float(y.mean())},
        {"pairs": int(y.size), "positives": int(y.sum())},
    )
