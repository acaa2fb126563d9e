"""Pure numpy implementation of the Monte Carlo auction kernel.

Semantics are shared with ``_kernel.pyx``; both must agree to rounding.
"""
import numpy as np

TRUTHFUL = 0
LOWEST_SNE_GSP = 1


def simulate_linear(t, w, a, c, r, rho, slots, mode):
    """Per-auction ``[revenue, welfare, clicks, impressions]`` for a linear rule.

    ``t`` and ``w`` are ``(N, n)`` values and ad effects; bids equal values.
    Bidder ``i`` scores ``w a_i (b - c_i)`` and is eligible iff ``b >= r_i`` and
    the score is at least ``rho``.
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    a = np.asarray(a, np.float64)
    c = np.asarray(c, np.float64)
    r = np.asarray(r, np.float64)
    s = np.asarray(slots, np.float64)
    N, n = t.shape
    K = s.size
    out = np.zeros((N, 4))
    if N == 0:
        return out

    k_all = w * a
    score = k_all * (t - c)
    elig = (t >= r) & (score >= rho)
    key = np.where(elig, -score, np.inf)
    order = np.argsort(key, axis=1, kind="stable")
    S = np.take_along_axis(score, order, 1)
    n_elig = elig.sum(axis=1)
    kk = np.take_along_axis(k_all, order, 1)
    cc = c[order]
    fl = np.maximum(r[order], cc + rho / kk)
    tt = np.take_along_axis(t, order, 1)
    ww = np.take_along_axis(w, order, 1)
    s_ext = np.append(s, 0.0)
    n_shown = np.minimum(n_elig, K)

    truthful = np.zeros((N, K))
    for k in range(min(K, n)):
        valid = k < n_shown
        if not valid.any():
            break
        ck, kk_k, fl_k = cc[:, k], kk[:, k], fl[:, k]
        total = np.zeros(N)
        for m in range(k, K):
            j = m + 1
            if j < n:
                has = j < n_elig
                tau = np.where(has, np.maximum(ck + S[:, j] / kk_k, fl_k), fl_k)
            else:
                tau = fl_k
            total += (s_ext[m] - s_ext[m + 1]) * tau
        truthful[:, k] = np.where(valid, total / s[k], 0.0)

    if mode == TRUTHFUL:
        price = truthful
    else:
        price = np.zeros((N, K))
        b_cur = tt[:, 0].copy()  # constructed bid of the current rank
        for k in range(min(K, n)):
            valid = k < n_shown
            if not valid.any():
                break
            j = k + 1
            if j < n:
                below_alloc = j < n_shown
                # bid of rank j making rank k pay its truthful price, never above rank k's bid
                target = kk[:, k] * (np.minimum(truthful[:, k], b_cur) - cc[:, k])
                b_j = np.maximum(cc[:, j] + target / kk[:, j], fl[:, j])
                nxt = np.where(below_alloc, kk[:, j] * (b_j - cc[:, j]), S[:, j])
                has = j < n_elig
                p = np.where(has, np.maximum(cc[:, k] + nxt / kk[:, k], fl[:, k]), fl[:, k])
                b_cur = b_j
            else:
                p = fl[:, k]
            price[:, k] = np.where(valid, p, 0.0)

    shown = np.arange(K)[None, :] < n_shown[:, None]
    m = min(K, n)
    eff = np.where(shown[:, :m], s[None, :m], 0.0)
    clicks_each = ww[:, :m] * eff
    out[:, 0] = (price[:, :m] * clicks_each).sum(axis=1)
    out[:, 1] = (tt[:, :m] * clicks_each).sum(axis=1)
    out[:, 2] = clicks_each.sum(axis=1)
    out[:, 3] = n_shown
    return out
