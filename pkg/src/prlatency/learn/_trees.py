"""Histogram tree kernels shared by the boosted-tree and forest learners.

Features are pre-binned against thresholds that are actual training values,
so ``x <= threshold`` at predict time agrees with the training-time bin test
and predictions are invariant to strictly increasing feature transforms.
NaN gets its own bin and is routed to whichever child maximizes gain.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MAX_BINS = 256
MISSING_BIN = MAX_BINS  # index of the NaN bin; value bins are 0..MAX_BINS-1


def fit_bin_edges(X: np.ndarray, max_bins: int = MAX_BINS) -> list[np.ndarray]:
    """Per-column split thresholds, each a training value (never the column max)."""
    edges = []
    for col in X.T:
        vals = col[~np.isnan(col)]
        uniq = np.unique(vals)
        if len(uniq) <= max_bins:
            cand = uniq[:-1]
        else:
            qs = np.linspace(0, 1, max_bins + 1)[1:-1]
            cand = np.unique(np.quantile(vals, qs, method="inverted_cdf"))
            cand = cand[cand < uniq[-1]]
        edges.append(np.ascontiguousarray(cand, dtype=np.float64))
    return edges


def apply_bins(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.int32)
    for j, e in enumerate(edges):
        col = X[:, j]
        b = np.searchsorted(e, col, side="left")
        b[np.isnan(col)] = MISSING_BIN
        out[:, j] = b
    return out


@njit(cache=True)
def _partition(Xb, idx, s, e, f, thr, mleft):
    """Reorder ``idx[s:e]`` so rows routed left come first; return the split point."""
    i, j = s, e - 1
    while i <= j:
        b = Xb[idx[i], f]
        go_left = mleft if b == MISSING_BIN else b <= thr
        if go_left:
            i += 1
        else:
            tmp = idx[i]
            idx[i] = idx[j]
            idx[j] = tmp
            j -= 1
    return i


@njit(cache=True)
def build_boosting_tree(Xb, g, h, idx, n_bins, max_depth, min_leaf, lam):
    """Second-order regression tree on gradients ``g`` / hessians ``h``.

    ``idx`` holds the training rows and is reordered in place.
    Leaf values are the Newton step ``-G / (H + lam)``.
    """
    p = Xb.shape[1]
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, np.int32)
    thr = np.zeros(max_nodes, np.int32)
    mleft = np.zeros(max_nodes, np.bool_)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes, np.float64)

    hg = np.zeros((p, MAX_BINS + 1))
    hh = np.zeros((p, MAX_BINS + 1))
    hc = np.zeros((p, MAX_BINS + 1), np.int64)

    st_node = np.empty(max_nodes, np.int64)
    st_s = np.empty(max_nodes, np.int64)
    st_e = np.empty(max_nodes, np.int64)
    st_d = np.empty(max_nodes, np.int64)
    top = 0
    st_node[0], st_s[0], st_e[0], st_d[0] = 0, 0, len(idx), 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node, s, e, d = st_node[top], st_s[top], st_e[top], st_d[top]
        G = 0.0
        H = 0.0
        for r in range(s, e):
            G += g[idx[r]]
            H += h[idx[r]]
        value[node] = -G / (H + lam)
        C = e - s
        if d >= max_depth or C < 2 * min_leaf:
            continue

        for f in range(p):
            for b in range(n_bins[f]):
                hg[f, b] = 0.0
                hh[f, b] = 0.0
                hc[f, b] = 0
            hg[f, MISSING_BIN] = 0.0
            hh[f, MISSING_BIN] = 0.0
            hc[f, MISSING_BIN] = 0
        for r in range(s, e):
            row = idx[r]
            gr = g[row]
            hr = h[row]
            for f in range(p):
                b = Xb[row, f]
                hg[f, b] += gr
                hh[f, b] += hr
                hc[f, b] += 1

        parent = G * G / (H + lam)
        best = 1e-12
        best_f = -1
        best_b = 0
        best_ml = True
        for f in range(p):
            Gm = hg[f, MISSING_BIN]
            Hm = hh[f, MISSING_BIN]
            Cm = hc[f, MISSING_BIN]
            GL = 0.0
            HL = 0.0
            CL = 0
            for b in range(n_bins[f] - 1):
                GL += hg[f, b]
                HL += hh[f, b]
                CL += hc[f, b]
                GR = G - Gm - GL
                HR = H - Hm - HL
                CR = C - Cm - CL
                if CL + Cm >= min_leaf and CR >= min_leaf:
                    gain = (GL + Gm) ** 2 / (HL + Hm + lam) + GR * GR / (HR + lam) - parent
                    if gain > best:
                        best, best_f, best_b, best_ml = gain, f, b, True
                if Cm > 0 and CL >= min_leaf and CR + Cm >= min_leaf:
                    gain = GL * GL / (HL + lam) + (GR + Gm) ** 2 / (HR + Hm + lam) - parent
                    if gain > best:
                        best, best_f, best_b, best_ml = gain, f, b, False
        if best_f < 0:
            continue
        if hc[best_f, MISSING_BIN] == 0:
            # unseen NaN follows the larger child
            CL = 0
            for b in range(best_b + 1):
                CL += hc[best_f, b]
            best_ml = CL >= C - CL

        mid = _partition(Xb, idx, s, e, best_f, best_b, best_ml)
        feature[node] = best_f
        thr[node] = best_b
        mleft[node] = best_ml
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_node[top], st_s[top], st_e[top], st_d[top] = n_nodes + 1, mid, e, d + 1
        top += 1
        st_node[top], st_s[top], st_e[top], st_d[top] = n_nodes, s, mid, d + 1
        top += 1
        n_nodes += 2
    return feature[:n_nodes], thr[:n_nodes], mleft[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def build_gini_tree(Xb, y, idx, n_bins, n_classes, max_features, min_leaf, max_depth, feature_keys):
    """Classification tree with Gini splits and per-node feature subsampling.

    ``feature_keys[node]`` holds random keys; the ``max_features`` smallest
    pick that node's candidate features. Leaves store class proportions.
    """
    p = Xb.shape[1]
    max_nodes = feature_keys.shape[0]
    feature = np.full(max_nodes, -1, np.int32)
    thr = np.zeros(max_nodes, np.int32)
    mleft = np.zeros(max_nodes, np.bool_)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros((max_nodes, n_classes), np.float64)

    hist = np.zeros((MAX_BINS + 1, n_classes), np.int64)
    tot = np.zeros(n_classes, np.int64)
    cl = np.zeros(n_classes, np.int64)
    cm = np.zeros(n_classes, np.int64)

    st_node = np.empty(max_nodes, np.int64)
    st_s = np.empty(max_nodes, np.int64)
    st_e = np.empty(max_nodes, np.int64)
    st_d = np.empty(max_nodes, np.int64)
    st_node[0], st_s[0], st_e[0], st_d[0] = 0, 0, len(idx), 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node, s, e, d = st_node[top], st_s[top], st_e[top], st_d[top]
        C = e - s
        tot[:] = 0
        for r in range(s, e):
            tot[y[idx[r]]] += 1
        pure = False
        for k in range(n_classes):
            value[node, k] = tot[k] / C
            if tot[k] == C:
                pure = True
        if pure or C < 2 * min_leaf or d >= max_depth or n_nodes + 2 > max_nodes:
            continue

        parent = 0.0
        for k in range(n_classes):
            parent += tot[k] * tot[k]
        parent /= C
        best = parent + 1e-12
        best_f = -1
        best_b = 0
        best_ml = True
        cand = np.argsort(feature_keys[node])[:max_features]
        for f in cand:
            nb = n_bins[f]
            for b in range(nb):
                for k in range(n_classes):
                    hist[b, k] = 0
            for k in range(n_classes):
                hist[MISSING_BIN, k] = 0
            for r in range(s, e):
                row = idx[r]
                hist[Xb[row, f], y[row]] += 1
            Cm = 0
            for k in range(n_classes):
                cm[k] = hist[MISSING_BIN, k]
                Cm += cm[k]
                cl[k] = 0
            CL = 0
            for b in range(nb - 1):
                for k in range(n_classes):
                    cl[k] += hist[b, k]
                    CL += hist[b, k]
                CR = C - Cm - CL
                if CL + Cm >= min_leaf and CR >= min_leaf:
                    sl = 0.0
                    sr = 0.0
                    for k in range(n_classes):
                        a = cl[k] + cm[k]
                        c = tot[k] - cl[k] - cm[k]
                        sl += a * a
                        sr += c * c
                    score = sl / (CL + Cm) + sr / CR
                    if score > best:
                        best, best_f, best_b, best_ml = score, f, b, True
                if Cm > 0 and CL >= min_leaf and CR + Cm >= min_leaf:
                    sl = 0.0
                    sr = 0.0
                    for k in range(n_classes):
                        a = cl[k]
                        c = tot[k] - cl[k]
                        sl += a * a
                        sr += c * c
                    score = sl / CL + sr / (CR + Cm)
                    if score > best:
                        best, best_f, best_b, best_ml = score, f, b, False
            if best_f == f and Cm == 0:
                best_ml = True
        if best_f < 0:
            continue
        # recount to route unseen NaN toward the larger child
        CL = 0
        Cm = 0
        for r in range(s, e):
            b = Xb[idx[r], best_f]
            if b == MISSING_BIN:
                Cm += 1
            elif b <= best_b:
                CL += 1
        if Cm == 0:
            best_ml = CL >= C - CL

        mid = _partition(Xb, idx, s, e, best_f, best_b, best_ml)
        feature[node] = best_f
        thr[node] = best_b
        mleft[node] = best_ml
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_node[top], st_s[top], st_e[top], st_d[top] = n_nodes + 1, mid, e, d + 1
        top += 1
        st_node[top], st_s[top], st_e[top], st_d[top] = n_nodes, s, mid, d + 1
        top += 1
        n_nodes += 2
    return feature[:n_nodes], thr[:n_nodes], mleft[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def predict_trees(X, feature, threshold, missing_left, left, right, value, roots):
    """Sum of leaf value vectors over all trees; child indices are absolute."""
    n = X.shape[0]
    out = np.zeros((n, value.shape[1]))
    for i in range(n):
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                x = X[i, feature[node]]
                if np.isnan(x):
                    go_left = missing_left[node]
                else:
                    go_left = x <= threshold[node]
                node = left[node] if go_left else right[node]
            for k in range(value.shape[1]):
                out[i, k] += value[node, k]
    return out


@njit(cache=True)
def used_features(feature, n_features):
    used = np.zeros(n_features, np.bool_)
    for f in feature:
        if f >= 0:
            used[f] = True
    return used


class TreeEnsemble:
    """Accumulates trees into flat arrays with absolute child indices."""

    def __init__(self, n_outputs: int):
        self.n_outputs = n_outputs
        self._parts = []
        self._size = 0

    def add(self, feature, thr_bin, mleft, left, right, value, edges, output: int | None = None):
        n = len(feature)
        thr = np.zeros(n)
        for node in np.flatnonzero(feature >= 0):
            thr[node] = edges[feature[node]][thr_bin[node]]
        if value.ndim == 1:
            vals = np.zeros((n, self.n_outputs))
            vals[:, output] = value
        else:
            vals = value
        off = self._size
        self._parts.append(
            (
                feature.astype(np.int32),
                thr,
                mleft.astype(np.bool_),
                np.where(left >= 0, left + off, -1).astype(np.int32),
                np.where(right >= 0, right + off, -1).astype(np.int32),
                vals,
                off,
            )
        )
        self._size += n

    def arrays(self) -> dict:
        if not self._parts:
            return {
                "feature": np.zeros(0, np.int32),
                "threshold": np.zeros(0),
                "missing_left": np.zeros(0, np.bool_),
                "left": np.zeros(0, np.int32),
                "right": np.zeros(0, np.int32),
                "value": np.zeros((0, self.n_outputs)),
                "roots": np.zeros(0, np.int64),
            }
        cols = list(zip(*self._parts))
        return {
            "feature": np.concatenate(cols[0]),
            "threshold": np.concatenate(cols[1]),
            "missing_left": np.concatenate(cols[2]),
            "left": np.concatenate(cols[3]),
            "right": np.concatenate(cols[4]),
            "value": np.vstack(cols[5]),
            "roots": np.asarray(cols[6], dtype=np.int64),
        }


@njit(cache=True)
def predict_binned(Xb, feature, thr_bin, missing_left, left, right, value):
    """Leaf value per row for one freshly built tree, routed on bin indices."""
    out = np.empty(Xb.shape[0])
    for i in range(Xb.shape[0]):
        node = 0
        while feature[node] >= 0:
            b = Xb[i, feature[node]]
            if b == MISSING_BIN:
                go_left = missing_left[node]
            else:
                go_left = b <= thr_bin[node]
            node = left[node] if go_left else right[node]
        out[i] = value[node]
    return out
