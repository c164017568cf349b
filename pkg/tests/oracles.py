"""Independent reference computations used by the tests.

Nothing here calls into the code under test.
"""
import itertools
import math

import numpy as np

TIE_RTOL = 1e-9


def sse(y):
    y = np.asarray(y, dtype=float)
    return float(np.sum((y - y.mean()) ** 2)) if y.size else 0.0


def enumerate_splits(X, y, categorical, min_leaf):
    """Every admissible split as (feature, order_key, rule, gain), in tie-break order."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    parent = sse(y)
    out = []
    for f in range(X.shape[1]):
        col = X[:, f]
        if categorical[f]:
            levels = sorted(set(int(v) for v in col))
            rest = levels[1:]
            cands = []
            for r in range(0, len(rest) + 1):
                for extra in itertools.combinations(rest, r):
                    left = (levels[0],) + extra
                    if len(left) == len(levels):
                        continue
                    cands.append(left)
            cands.sort()
            for left in cands:
                mask = np.isin(col.astype(int), left)
                if mask.sum() < min_leaf or (~mask).sum() < min_leaf:
                    continue
                gain = parent - sse(y[mask]) - sse(y[~mask])
                out.append((f, left, ("levels", left), gain))
        else:
            vals = sorted(set(col))
            for a, b in zip(vals, vals[1:]):
                thr = (a + b) / 2
                mask = col <= thr
                if mask.sum() < min_leaf or (~mask).sum() < min_leaf:
                    continue
                gain = parent - sse(y[mask]) - sse(y[~mask])
                out.append((f, thr, ("threshold", thr), gain))
    return out, parent


def brute_force_split(X, y, categorical, min_leaf=1, min_gain=0.0):
    """Exhaustive best split: maximal gain, then lowest feature, then smallest rule."""
    y = np.asarray(y, dtype=float)
    if y.min() == y.max():
        return None
    splits, parent = enumerate_splits(X, y, categorical, min_leaf)
    tol = TIE_RTOL * parent
    splits = [s for s in splits if s[3] > min_gain and s[3] > tol]
    if not splits:
        return None
    top = max(s[3] for s in splits)
    for s in splits:
        if s[3] >= top - tol:
            return s
    raise AssertionError("unreachable")


def brute_force_tree(X, y, categorical, min_leaf=1, max_depth=None, depth=0):
    """Nested dict tree grown with brute_force_split at every node."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    node = {"value": float(y.mean()), "n": len(y)}
    if len(y) < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
        return node
    s = brute_force_split(X, y, categorical, min_leaf)
    if s is None:
        return node
    f, _, (kind, rule), gain = s
    if kind == "threshold":
        mask = X[:, f] <= rule
    else:
        mask = np.isin(X[:, f].astype(int), rule)
    node.update(feature=f, kind=kind, rule=rule, gain=gain,
                left=brute_force_tree(X[mask], y[mask], categorical, min_leaf, max_depth, depth + 1),
                right=brute_force_tree(X[~mask], y[~mask], categorical, min_leaf, max_depth,
                                       depth + 1))
    return node


def crash_rate_mp(count, length, lanes, aadt, p="0.8", scale=10 ** 6, days=365, dps=50):
    import mpmath as mp
    with mp.workdps(dps):
        p = mp.mpf(p)
        return mp.mpf(count) / (mp.mpf(length) * (mp.mpf(lanes) * mp.mpf(aadt)) ** p) \
            * mp.mpf(scale) / mp.mpf(days) ** p


def chi2_sf_mp(x, df, dps=50):
    import mpmath as mp
    with mp.workdps(dps):
        return mp.gammainc(mp.mpf(df) / 2, mp.mpf(x) / 2, mp.inf, regularized=True)


def range_sf_monte_carlo(qs, k, draws, seed, chunk=1_000_000):
    """P(max - min of k standard normals > q), by simulation."""
    rng = np.random.default_rng(seed)
    qs = np.asarray(qs, dtype=float)
    hits = np.zeros(len(qs))
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        z = rng.standard_normal((m, k))
        r = z.max(axis=1) - z.min(axis=1)
        hits += (r[:, None] > qs[None, :]).sum(axis=0)
        done += m
    return hits / draws


def midranks(values):
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    i = 0
    sv = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def nemenyi_permutation_pvalues(groups, n_perm, seed, chunk=20_000):
    """Pairwise p-values from the permutation distribution of the largest
    standardised rank-mean difference (equal group sizes assumed)."""
    sizes = {len(g) for g in groups}
    assert len(sizes) == 1
    n = sizes.pop()
    k = len(groups)
    pooled = np.concatenate([np.asarray(g, float) for g in groups])
    ranks = midranks(pooled)
    big_n = len(pooled)
    se = math.sqrt(big_n * (big_n + 1) / 12 * (2 / n))
    obs_means = ranks.reshape(k, n).mean(axis=1)
    obs = {(i, j): abs(obs_means[i] - obs_means[j]) / se for i in range(k) for j in range(i)}
    rng = np.random.default_rng(seed)
    counts = {key: 0 for key in obs}
    done = 0
    while done < n_perm:
        m = min(chunk, n_perm - done)
        perm = rng.permuted(np.tile(ranks, (m, 1)), axis=1)
        means = perm.reshape(m, k, n).mean(axis=2)
        tmax = (means.max(axis=1) - means.min(axis=1)) / se
        for key, t in obs.items():
            counts[key] += int(np.sum(tmax >= t - 1e-12))
        done += m
    return {key: c / n_perm for key, c in counts.items()}
