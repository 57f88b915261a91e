"""Compiled kernels for the tree learners and KNN.

All kernels are deterministic: randomness comes from an explicit splitmix64
state passed in by the caller, and ties are resolved by index order.
"""
import numpy as np
from numba import njit

@njit(cache=True)
def _splitmix_next(state):
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _randbelow(state, n):
    return np.int64(_splitmix_next(state) % np.uint64(n))


@njit(cache=True)
def _midpoint(lo, hi):
    mid = 0.5 * (lo + hi)
    # adjacent floats: the midpoint may round up to ``hi``
    if mid >= hi:
        mid = lo
    return mid


# ----------------------------------------------------------- classification tree

@njit(cache=True, nogil=True)
def grow_gini_tree(Xt, y, sample_idx, n_classes, max_features, seed):
    """Grow an unpruned Gini tree on the rows ``sample_idx`` (duplicates allowed).

    ``Xt`` is the feature-major matrix (d x n). Returns node arrays
    (feature, threshold, left, right, leaf_class, n_nodes). At each node
    ``max_features`` features are drawn without replacement; if none of them
    separates the node, the remaining features are tried in the same random
    order until one does.
    """
    d = Xt.shape[0]
    m = sample_idx.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    leaf_class = np.zeros(cap, np.int32)

    idx = sample_idx.copy()
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)
    feats = np.arange(d)
    vals = np.empty(m)
    order_buf = np.empty(m, np.int64)
    counts = np.zeros(n_classes)
    lcounts = np.zeros(n_classes)

    stack_node = np.empty(cap, np.int64)
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = m
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        size = hi - lo

        counts[:] = 0.0
        for i in range(lo, hi):
            counts[y[idx[i]]] += 1.0
        best_c = 0
        n_present = 0
        for c in range(n_classes):
            if counts[c] > counts[best_c]:
                best_c = c
            if counts[c] > 0:
                n_present += 1
        leaf_class[node] = best_c
        if n_present <= 1 or size < 2:
            continue

        best_score = -1.0
        best_f = -1
        best_t = 0.0
        # partial Fisher-Yates: feats[:k] is a fresh random draw at every node
        for j in range(d):
            r = j + _randbelow(state, d - j)
            tmp = feats[j]
            feats[j] = feats[r]
            feats[r] = tmp
            if j >= max_features and best_f >= 0:
                break
            f = feats[j]
            for i in range(size):
                vals[i] = Xt[f, idx[lo + i]]
            order = np.argsort(vals[:size])
            lcounts[:] = 0.0
            for i in range(size - 1):
                lcounts[y[idx[lo + order[i]]]] += 1.0
                v0 = vals[order[i]]
                v1 = vals[order[i + 1]]
                if v1 <= v0:
                    continue
                n_left = i + 1.0
                n_right = size - n_left
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sl += lcounts[c] * lcounts[c]
                    rc = counts[c] - lcounts[c]
                    sr += rc * rc
                score = sl / n_left + sr / n_right
                t = _midpoint(v0, v1)
                if (score > best_score or
                        (score == best_score and (f < best_f or (f == best_f and t < best_t)))):
                    best_score = score
                    best_f = f
                    best_t = t
        if best_f < 0:
            continue

        # partition idx[lo:hi] so that x <= t comes first
        n_left = 0
        for i in range(lo, hi):
            if Xt[best_f, idx[i]] <= best_t:
                order_buf[n_left] = idx[i]
                n_left += 1
        k = n_left
        for i in range(lo, hi):
            if Xt[best_f, idx[i]] > best_t:
                order_buf[k] = idx[i]
                k += 1
        for i in range(size):
            idx[lo + i] = order_buf[i]

        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes
        stack_lo[top] = lo
        stack_hi[top] = lo + n_left
        top += 1
        stack_node[top] = n_nodes + 1
        stack_lo[top] = lo + n_left
        stack_hi[top] = hi
        top += 1
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), leaf_class[:n_nodes].copy(), n_nodes)


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf node index reached by each row of ``X`` (n x d)."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


# ------------------------------------------------------------ regression tree

@njit(cache=True, nogil=True)
def grow_newton_tree(Xt, sorted_idx, sorted_vals, grad, hess, max_depth, reg_lambda,
                     min_child_weight, min_gain):
    """Depth-limited second-order regression tree, grown level by level.

    ``sorted_idx[f]`` lists sample indices in ascending order of feature f and
    ``sorted_vals[f]`` the matching values.
    Each level scans every feature once in that order, accumulating gradient
    statistics per open node. Returns (feature, threshold, left, right, weight,
    n_nodes); leaf weights are -G / (H + lambda).
    """
    d, n = Xt.shape
    cap = 2 ** (max_depth + 1)
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    weight = np.zeros(cap)
    G = np.zeros(cap)
    H = np.zeros(cap)

    node_of = np.zeros(n, np.int64)
    for i in range(n):
        G[0] += grad[i]
        H[0] += hess[i]
    n_nodes = 1
    level_lo = 0
    level_hi = 1

    gl = np.zeros(cap)
    hl = np.zeros(cap)
    last = np.zeros(cap)
    seen = np.zeros(cap, np.bool_)
    best_gain = np.zeros(cap)
    best_f = np.full(cap, -1, np.int64)
    best_t = np.zeros(cap)

    for depth in range(max_depth):
        for nd in range(level_lo, level_hi):
            best_gain[nd] = min_gain
            best_f[nd] = -1
        for f in range(d):
            for nd in range(level_lo, level_hi):
                gl[nd] = 0.0
                hl[nd] = 0.0
                seen[nd] = False
            for r in range(n):
                i = sorted_idx[f, r]
                nd = node_of[i]
                if nd < level_lo:
                    continue  # sample sits in a finished leaf
                v = sorted_vals[f, r]
                if seen[nd] and v > last[nd]:
                    hr = H[nd] - hl[nd]
                    if hl[nd] >= min_child_weight and hr >= min_child_weight:
                        gr = G[nd] - gl[nd]
                        gain = (gl[nd] * gl[nd] / (hl[nd] + reg_lambda)
                                + gr * gr / (hr + reg_lambda)
                                - G[nd] * G[nd] / (H[nd] + reg_lambda))
                        if gain > best_gain[nd]:
                            best_gain[nd] = gain
                            best_f[nd] = f
                            best_t[nd] = _midpoint(last[nd], v)
                gl[nd] += grad[i]
                hl[nd] += hess[i]
                last[nd] = v
                seen[nd] = True
        next_lo = n_nodes
        for nd in range(level_lo, level_hi):
            if best_f[nd] >= 0:
                feature[nd] = best_f[nd]
                threshold[nd] = best_t[nd]
                left[nd] = n_nodes
                right[nd] = n_nodes + 1
                n_nodes += 2
        if n_nodes == next_lo:
            break
        for i in range(n):
            nd = node_of[i]
            if nd >= level_lo and feature[nd] >= 0:
                child = left[nd] if Xt[feature[nd], i] <= threshold[nd] else right[nd]
                node_of[i] = child
                G[child] += grad[i]
                H[child] += hess[i]
            elif nd >= level_lo:
                node_of[i] = -1  # leaf closed at this level
        level_lo = next_lo
        level_hi = n_nodes

    for nd in range(n_nodes):
        if feature[nd] < 0:
            weight[nd] = -G[nd] / (H[nd] + reg_lambda)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), weight[:n_nodes].copy(), n_nodes)


# ----------------------------------------------------------------------- KNN

@njit(cache=True, nogil=True)
def knn_vote(X_train, y_train, X_query, k, n_classes):
    """Majority vote of the k nearest training rows (Euclidean).

    Neighbours are the k smallest (squared distance, training index) pairs.
    Vote ties go to the class with the smaller summed neighbour distance,
    then to the lower class index.
    """
    n, d = X_train.shape
    q = X_query.shape[0]
    k = min(k, n)
    out = np.empty(q, np.int64)
    best_d = np.empty(k)
    best_i = np.empty(k, np.int64)
    votes = np.zeros(n_classes, np.int64)
    total = np.zeros(n_classes)
    for a in range(q):
        filled = 0
        for j in range(n):
            s = 0.0
            for f in range(d):
                diff = X_query[a, f] - X_train[j, f]
                s += diff * diff
            if filled < k:
                pos = filled
                filled += 1
            elif s < best_d[k - 1]:
                pos = k - 1
            else:
                continue
            # insertion keeps (distance, index) ascending; equal distance keeps the older index first
            while pos > 0 and best_d[pos - 1] > s:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = s
            best_i[pos] = j
        votes[:] = 0
        total[:] = 0.0
        for r in range(k):
            c = y_train[best_i[r]]
            votes[c] += 1
            total[c] += np.sqrt(best_d[r])
        winner = 0
        for c in range(1, n_classes):
            if votes[c] > votes[winner] or (votes[c] == votes[winner] and total[c] < total[winner]):
                winner = c
        out[a] = winner
    return out
