"""Compiled inner loops for regression-tree growth and prediction.

Features arrive pre-encoded: ``codes[r, f]`` is the index of row r's value in
the sorted distinct values of numeric feature f (``values[f, :]``), or the
level index of a categorical feature. Categorical level sets are uint64
bitmasks, so at most 64 levels per feature.
"""
import numpy as np
from numba import njit

MAX_LEVELS = 64
TIE_RTOL = 1e-9
EXHAUSTIVE_LEVELS = 12

_ONE = np.uint64(1)


@njit(cache=True, nogil=True)
def _bit(c):
    return np.uint64(1) << np.uint64(c)


@njit(cache=True, nogil=True)
def mask_lex_less(a, b):
    """True when the sorted member list of bitmask ``a`` sorts before ``b``'s."""
    if a == b:
        return False
    diff = a ^ b
    i = 0
    while ((diff >> np.uint64(i)) & np.uint64(1)) == np.uint64(0):
        i += 1
    above = ~((np.uint64(2) << np.uint64(i)) - np.uint64(1)) if i < 63 else np.uint64(0)
    if (a >> np.uint64(i)) & np.uint64(1):
        # a holds the first differing element; a < b unless b already ended
        return (b & above) != np.uint64(0)
    return (a & above) == np.uint64(0)


@njit(cache=True, nogil=True)
def _groups(codes, y, idx, start, end, f, n_codes_f):
    """Per distinct code present in the node: (code, count, response sum), code-ascending."""
    m = end - start
    if n_codes_f <= 4 * m:
        cnt = np.zeros(n_codes_f, np.int64)
        sm = np.zeros(n_codes_f)
        for t in range(start, end):
            r = idx[t]
            c = codes[r, f]
            cnt[c] += 1
            sm[c] += y[r]
        G = 0
        for c in range(n_codes_f):
            if cnt[c] > 0:
                G += 1
        gcode = np.empty(G, np.int64)
        gcnt = np.empty(G, np.int64)
        gsum = np.empty(G)
        g = 0
        for c in range(n_codes_f):
            if cnt[c] > 0:
                gcode[g] = c
                gcnt[g] = cnt[c]
                gsum[g] = sm[c]
                g += 1
        return gcode, gcnt, gsum
    col = np.empty(m, np.int64)
    for t in range(m):
        col[t] = codes[idx[start + t], f]
    order = np.argsort(col, kind="mergesort")
    gcode = np.empty(m, np.int64)
    gcnt = np.zeros(m, np.int64)
    gsum = np.zeros(m)
    G = -1
    prev = -1
    for t in range(m):
        c = col[order[t]]
        if c != prev:
            G += 1
            gcode[G] = c
            prev = c
        gcnt[G] += 1
        gsum[G] += y[idx[start + order[t]]]
    G += 1
    return gcode[:G], gcnt[:G], gsum[:G]


@njit(cache=True, nogil=True)
def search(codes, y, idx, start, end, feats, n_codes, values, is_cat, min_leaf, min_gain, tol):
    """Best SSE-reducing split of rows idx[start:end] over candidate ``feats``.

    Candidates are scanned feature-ascending, then threshold-ascending (numeric).
    A categorical feature with at most EXHAUSTIVE_LEVELS levels in the node
    tries every bipartition; with more it tries the prefixes of its levels
    ordered by mean response, which holds the optimum when min_leaf does not
    bind. A later candidate replaces the
    incumbent only if it beats it by more than ``tol``; among equal-gain
    partitions of one categorical feature the lexicographically smallest
    left level set wins. The left set of a categorical split always holds
    the smallest level code present.

    Returns (feature, threshold, left_mask, right_mask, gain, n_left);
    feature is -1 when nothing is admissible.
    """
    m = end - start
    total = 0.0
    for t in range(start, end):
        total += y[idx[t]]
    best_f = -1
    best_thr = np.nan
    best_lm = np.uint64(0)
    best_rm = np.uint64(0)
    best_gain = 0.0
    best_nl = 0
    for fi in range(feats.shape[0]):
        f = feats[fi]
        gcode, gcnt, gsum = _groups(codes, y, idx, start, end, f, n_codes[f])
        G = gcode.shape[0]
        if G < 2:
            continue
        cat = is_cat[f]
        if cat and G <= EXHAUSTIVE_LEVELS:
            present = np.uint64(0)
            for g in range(G):
                present |= _bit(gcode[g])
            # left set always holds group 0 (the lowest code); bits pick the rest
            for sub in range((1 << (G - 1)) - 1):
                lm = _bit(gcode[0])
                nl = gcnt[0]
                sl = gsum[0]
                for g in range(1, G):
                    if (sub >> (g - 1)) & 1:
                        lm |= _bit(gcode[g])
                        nl += gcnt[g]
                        sl += gsum[g]
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                diff = sl / nl - (total - sl) / nr
                gain = nl * nr / m * diff * diff
                if gain <= min_gain or gain <= tol:
                    continue
                take = best_f < 0 or gain > best_gain + tol
                if not take and best_f == f and abs(gain - best_gain) <= tol:
                    take = mask_lex_less(lm, best_lm)
                if take:
                    best_f = f
                    best_thr = np.nan
                    best_lm = lm
                    best_rm = present ^ lm
                    best_gain = gain
                    best_nl = nl
            continue
        if cat:
            order = np.argsort(gsum / gcnt, kind="mergesort")
            present = np.uint64(0)
            for g in range(G):
                present |= _bit(gcode[g])
            lowest = _bit(gcode[0])
        else:
            order = np.arange(G)
            present = np.uint64(0)
            lowest = np.uint64(0)
        nl = 0
        sl = 0.0
        mask = np.uint64(0)
        for k in range(G - 1):
            g = order[k]
            nl += gcnt[g]
            sl += gsum[g]
            if cat:
                mask |= _bit(gcode[g])
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            diff = sl / nl - (total - sl) / nr
            gain = nl * nr / m * diff * diff
            if gain <= min_gain or gain <= tol:
                continue
            if cat:
                if mask & lowest:
                    lm = mask
                    n_left = nl
                else:
                    lm = present ^ mask
                    n_left = nr
                take = best_f < 0 or gain > best_gain + tol
                if not take and best_f == f and abs(gain - best_gain) <= tol:
                    take = mask_lex_less(lm, best_lm)
                if take:
                    best_f = f
                    best_thr = np.nan
                    best_lm = lm
                    best_rm = present ^ lm
                    best_gain = gain
                    best_nl = n_left
            elif best_f < 0 or gain > best_gain + tol:
                best_f = f
                best_thr = 0.5 * (values[f, gcode[k]] + values[f, gcode[k + 1]])
                best_lm = np.uint64(0)
                best_rm = np.uint64(0)
                best_gain = gain
                best_nl = nl
    return best_f, best_thr, best_lm, best_rm, best_gain, best_nl


@njit(cache=True, nogil=True)
def _goes_left_code(c, f, thr, lm, values, is_cat):
    if is_cat[f]:
        return (lm >> np.uint64(c)) & np.uint64(1) == np.uint64(1)
    return values[f, c] <= thr


@njit(cache=True, nogil=True)
def grow(codes, y, sample, n_codes, values, is_cat, min_leaf, max_depth, mtry, min_gain,
         uniforms):
    """Grow one tree on the multiset of rows ``sample``; depth-first, left first.

    When ``mtry`` < feature count, each split search draws its candidate
    features by partial Fisher-Yates from ``uniforms``, consumed in order.
    ``max_depth`` < 0 means unlimited.
    """
    m0 = sample.shape[0]
    p = codes.shape[1]
    cap = 2 * m0 + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.full(cap, np.nan)
    lmask = np.zeros(cap, np.uint64)
    rmask = np.zeros(cap, np.uint64)
    default_left = np.zeros(cap, np.bool_)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    sse = np.zeros(cap)
    gain = np.zeros(cap)

    idx = sample.copy()
    buf = np.empty_like(idx)
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m0
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    ptr = 0
    all_feats = np.arange(p)
    perm = np.empty(p, np.int64)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        m = end - start
        s = 0.0
        lo = y[idx[start]]
        hi = lo
        for t in range(start, end):
            v = y[idx[t]]
            s += v
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        mean = s / m
        ss = 0.0
        for t in range(start, end):
            d = y[idx[t]] - mean
            ss += d * d
        value[node] = mean
        count[node] = m
        sse[node] = ss
        if m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or lo == hi:
            continue
        if mtry < p:
            for i in range(p):
                perm[i] = i
            for i in range(mtry):
                if ptr >= uniforms.shape[0]:
                    raise ValueError("random stream exhausted during tree growth")
                j = i + int(uniforms[ptr] * (p - i))
                ptr += 1
                if j >= p:
                    j = p - 1
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
            cand = np.sort(perm[:mtry])
        else:
            cand = all_feats
        f, thr, lm, rm, g, nl = search(codes, y, idx, start, end, cand, n_codes, values,
                                       is_cat, min_leaf, min_gain, TIE_RTOL * ss)
        if f < 0:
            continue
        a = start
        b = 0
        for t in range(start, end):
            r = idx[t]
            if _goes_left_code(codes[r, f], f, thr, lm, values, is_cat):
                idx[a] = r
                a += 1
            else:
                buf[b] = r
                b += 1
        for t in range(b):
            idx[a + t] = buf[t]
        mid = a
        feature[node] = f
        threshold[node] = thr
        lmask[node] = lm
        rmask[node] = rm
        gain[node] = g
        default_left[node] = (mid - start) >= (end - mid)
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        st_node[sp] = rc
        st_start[sp] = mid
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = mid
        st_depth[sp] = depth + 1
        sp += 1

    n = n_nodes
    return (feature[:n].copy(), threshold[:n].copy(), lmask[:n].copy(), rmask[:n].copy(),
            default_left[:n].copy(), left[:n].copy(), right[:n].copy(), value[:n].copy(),
            count[:n].copy(), sse[:n].copy(), gain[:n].copy(), ptr)


@njit(cache=True, nogil=True)
def predict(X, feature, threshold, lmask, rmask, default_left, left, right, value, is_cat):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            f = feature[node]
            x = X[i, f]
            if is_cat[f]:
                go_left = default_left[node]
                if x >= 0 and x < 64 and x == np.floor(x):
                    b = np.uint64(1) << np.uint64(int(x))
                    if lmask[node] & b:
                        go_left = True
                    elif rmask[node] & b:
                        go_left = False
            else:
                go_left = x <= threshold[node]
            node = left[node] if go_left else right[node]
        out[i] = value[node]
    return out
