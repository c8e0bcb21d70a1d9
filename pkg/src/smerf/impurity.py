"""Node impurities and the exhaustive split scan.

The pairwise criterion scores a node sample ``S`` by its average pairwise
distance ``I_D(S) = sum_{i,j in S} z_ij / |S|^2`` (ordered pairs, diagonal
included) and a split by ``n_s I_D(S) - n_L I_D(S_L) - n_R I_D(S_R)``.

Gini and variance scans are kept alongside it. They share the threshold
placement (midpoints of consecutive distinct projected values) and the
tie rule with the pairwise scan, so trees grown from labels or responses
can be compared node for node with trees grown from the matching distances.

Tie rule: scanning thresholds left to right and projections in draw order,
a candidate replaces the incumbent only when its gain exceeds the
incumbent's by more than ``TIE_RTOL * n_s * max|z|`` over the node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import IndexOutOfRange, NotAPartition, NoValidSplit, check_indices

__all__ = [
    "TIE_RTOL",
    "SplitScanResult",
    "avg_pairwise_distance",
    "gini_impurity",
    "sample_variance",
    "split_gain",
    "best_split_scan",
]

TIE_RTOL = 1e-10

_JIT = dict(cache=True, nogil=True)


@dataclass(frozen=True)
class SplitScanResult:
    threshold: float
    gain: float
    left_count: int
    right_count: int


def avg_pairwise_distance(Z, S) -> float:
    Z = np.asarray(Z, dtype=np.float64)
    idx = check_indices(S, Z.shape[0])
    n = idx.size
    return float(Z[np.ix_(idx, idx)].sum() / (n * n))


def gini_impurity(labels, S) -> float:
    labels = np.asarray(labels)
    idx = check_indices(S, labels.shape[0])
    _, counts = np.unique(labels[idx], return_counts=True)
    f = counts / idx.size
    return float(1.0 - np.sum(f * f))


def sample_variance(y, S) -> float:
    """Biased (divide by ``n_s``) variance of ``y`` over ``S``."""
    y = np.asarray(y, dtype=np.float64)
    idx = check_indices(S, y.shape[0])
    v = y[idx]
    return float(np.mean((v - v.mean()) ** 2))


def split_gain(Z, S, S_L, S_R) -> float:
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    s, sl, sr = (check_indices(a, n) for a in (S, S_L, S_R))
    if not np.array_equal(np.sort(s), np.sort(np.concatenate([sl, sr]))):
        raise NotAPartition("S_L and S_R must partition S")
    return (
        s.size * avg_pairwise_distance(Z, s)
        - sl.size * avg_pairwise_distance(Z, sl)
        - sr.size * avg_pairwise_distance(Z, sr)
    )


def best_split_scan(Z, S, projected_values) -> SplitScanResult:
    """Best threshold on one projection of the node sample ``S``.

    Raises ``NoValidSplit`` when all projected values coincide. The returned
    gain may be zero or negative; deciding whether to split is up to the
    caller.
    """
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    idx = check_indices(S, Z.shape[0])
    vals = np.ascontiguousarray(projected_values, dtype=np.float64)
    if vals.shape != idx.shape:
        raise IndexOutOfRange("projected_values must align with S")
    rowsum, total, maxabs = _node_stats(Z, idx)
    tol = TIE_RTOL * idx.size * maxabs
    thr, gain, nleft = _pair_scan(Z, idx, vals, rowsum, total, tol)
    if nleft == 0:
        raise NoValidSplit("all projected values are identical")
    return SplitScanResult(float(thr), float(gain), int(nleft), int(idx.size - nleft))


# ---------------------------------------------------------------------------
# jitted kernels
# ---------------------------------------------------------------------------


@njit(inline="always")
def _nadd(s, c, x):
    # Neumaier compensated add; the running value is s + c
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


@njit(**_JIT)
def _project_one(X, rows, feats, weights):
    out = np.empty(rows.size)
    for a in range(rows.size):
        r = rows[a]
        s = 0.0
        for t in range(feats.size):
            s += weights[t] * X[r, feats[t]]
        out[a] = s
    return out


@njit(**_JIT)
def _first_best(gains, valid, tol):
    best = -1
    for k in range(gains.size):
        if valid[k] and (best < 0 or gains[k] > gains[best] + tol):
            best = k
    return best


@njit(**_JIT)
def _finish(vals, order, gains, valid, tol):
    k = _first_best(gains, valid, tol)
    if k < 0:
        return np.nan, np.nan, 0
    v0 = vals[order[k]]
    v1 = vals[order[k + 1]]
    thr = 0.5 * (v0 + v1)
    if not (v0 <= thr < v1):
        thr = v0
    return thr, gains[k], k + 1


@njit(**_JIT)
def _node_stats(Z, idx):
    m = idx.size
    rowsum = np.empty(m)
    total, tc = 0.0, 0.0
    maxabs = 0.0
    for a in range(m):
        i = idx[a]
        s, c = 0.0, 0.0
        for b in range(m):
            z = Z[i, idx[b]]
            s, c = _nadd(s, c, z)
            if abs(z) > maxabs:
                maxabs = abs(z)
        rowsum[a] = s + c
        total, tc = _nadd(total, tc, rowsum[a])
    return rowsum, total + tc, maxabs


@njit(**_JIT)
def _pair_scan(Z, idx, vals, rowsum, total, tol):
    # Moves points right-to-left in sorted order; each move updates the
    # left and right within-sums in O(n_s).
    m = idx.size
    if m < 2:
        return np.nan, np.nan, 0
    order = np.argsort(vals, kind="mergesort")
    gains = np.zeros(m - 1)
    valid = np.zeros(m - 1, dtype=np.bool_)
    parent = total / m
    left, lc = 0.0, 0.0
    right, rc = total, 0.0
    for t in range(m - 1):
        a = order[t]
        o = idx[a]
        cross, cc = 0.0, 0.0
        for u in range(t):
            cross, cc = _nadd(cross, cc, Z[o, idx[order[u]]])
        cross += cc
        zoo = Z[o, o]
        left, lc = _nadd(left, lc, 2.0 * cross + zoo)
        right, rc = _nadd(right, rc, -2.0 * rowsum[a])
        right, rc = _nadd(right, rc, 2.0 * cross + zoo)
        if vals[a] < vals[order[t + 1]]:
            nl = t + 1
            valid[t] = True
            gains[t] = parent - (left + lc) / nl - (right + rc) / (m - nl)
    return _finish(vals, order, gains, valid, tol)


@njit(**_JIT)
def smerf_node_scan(Z, X, idx, ptr, feats, weights):
    """Per-projection best (threshold, gain, left count) for one node."""
    rowsum, total, maxabs = _node_stats(Z, idx)
    tol = TIE_RTOL * idx.size * maxabs
    d = ptr.size - 1
    thr = np.empty(d)
    gain = np.empty(d)
    nleft = np.zeros(d, dtype=np.int64)
    for k in range(d):
        vals = _project_one(X, idx, feats[ptr[k]:ptr[k + 1]], weights[ptr[k]:ptr[k + 1]])
        thr[k], gain[k], nleft[k] = _pair_scan(Z, idx, vals, rowsum, total, tol)
    return thr, gain, nleft, tol


@njit(**_JIT)
def variance_node_scan(X, idx, y, ptr, feats, weights):
    m = idx.size
    yn = np.empty(m)
    lo, hi = np.inf, -np.inf
    for a in range(m):
        yn[a] = y[idx[a]]
        lo = min(lo, yn[a])
        hi = max(hi, yn[a])
    tol = TIE_RTOL * m * (0.5 * (hi - lo) ** 2)
    yc = yn - yn.mean()
    s1, s2 = 0.0, 0.0
    for a in range(m):
        s1 += yc[a]
        s2 += yc[a] * yc[a]
    parent = s2 - s1 * s1 / m
    d = ptr.size - 1
    thr = np.empty(d)
    gain = np.empty(d)
    nleft = np.zeros(d, dtype=np.int64)
    for k in range(d):
        vals = _project_one(X, idx, feats[ptr[k]:ptr[k + 1]], weights[ptr[k]:ptr[k + 1]])
        if m < 2:
            thr[k], gain[k] = np.nan, np.nan
            continue
        order = np.argsort(vals, kind="mergesort")
        gains = np.zeros(m - 1)
        valid = np.zeros(m - 1, dtype=np.bool_)
        l1, l2 = 0.0, 0.0
        for t in range(m - 1):
            v = yc[order[t]]
            l1 += v
            l2 += v * v
            if vals[order[t]] < vals[order[t + 1]]:
                nl = t + 1
                nr = m - nl
                r1 = s1 - l1
                r2 = s2 - l2
                valid[t] = True
                gains[t] = parent - (l2 - l1 * l1 / nl) - (r2 - r1 * r1 / nr)
        thr[k], gain[k], nleft[k] = _finish(vals, order, gains, valid, tol)
    return thr, gain, nleft, tol


@njit(**_JIT)
def gini_node_scan(X, idx, labels, n_classes, ptr, feats, weights):
    m = idx.size
    total = np.zeros(n_classes, dtype=np.int64)
    for a in range(m):
        total[labels[idx[a]]] += 1
    distinct = 0
    for k in range(n_classes):
        if total[k] > 0:
            distinct += 1
    tol = TIE_RTOL * m * (1.0 if distinct > 1 else 0.0)
    sq = 0.0
    for k in range(n_classes):
        sq += total[k] * total[k]
    parent = m - sq / m
    d = ptr.size - 1
    thr = np.empty(d)
    gain = np.empty(d)
    nleft = np.zeros(d, dtype=np.int64)
    left = np.zeros(n_classes, dtype=np.int64)
    for k in range(d):
        vals = _project_one(X, idx, feats[ptr[k]:ptr[k + 1]], weights[ptr[k]:ptr[k + 1]])
        if m < 2:
            thr[k], gain[k] = np.nan, np.nan
            continue
        order = np.argsort(vals, kind="mergesort")
        gains = np.zeros(m - 1)
        valid = np.zeros(m - 1, dtype=np.bool_)
        left[:] = 0
        for t in range(m - 1):
            left[labels[idx[order[t]]]] += 1
            if vals[order[t]] < vals[order[t + 1]]:
                nl = t + 1
                nr = m - nl
                ql, qr = 0.0, 0.0
                for c in range(n_classes):
                    ql += left[c] * left[c]
                    r = total[c] - left[c]
                    qr += r * r
                valid[t] = True
                gains[t] = parent - (nl - ql / nl) - (nr - qr / nr)
        thr[k], gain[k], nleft[k] = _finish(vals, order, gains, valid, tol)
    return thr, gain, nleft, tol
