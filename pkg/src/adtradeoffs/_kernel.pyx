# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Monte Carlo auction kernel; mirrors ``_kernel_py.simulate_linear``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

TRUTHFUL = 0
LOWEST_SNE_GSP = 1


cdef inline double dmax(double x, double y) nogil:
    return x if x > y else y


def simulate_linear(t, w, a, c, r, double rho, slots, int mode):
    cdef double[:, ::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef double[::1] sv = np.ascontiguousarray(slots, dtype=np.float64)
    cdef Py_ssize_t N = tv.shape[0], n = tv.shape[1], K = sv.shape[0]
    out_arr = np.zeros((N, 4))
    cdef double[:, ::1] out = out_arr

    cdef double[::1] score = np.empty(n)
    cdef double[::1] kk = np.empty(n)
    cdef Py_ssize_t[::1] order = np.empty(n, dtype=np.intp)
    cdef double[::1] truthful = np.empty(K + 1)
    cdef double[::1] s_ext = np.zeros(K + 1)
    cdef Py_ssize_t row, i, j, k, m, ne, shown, bi, bj
    cdef double total, tau, fl_k, fl_j, target, b_j, b_cur, nxt, p, rev, wel, clk, eff

    for k in range(K):
        s_ext[k] = sv[k]

    with nogil:
        for row in range(N):
            ne = 0
            for i in range(n):
                kk[i] = wv[row, i] * av[i]
                score[i] = kk[i] * (tv[row, i] - cv[i])
                if tv[row, i] >= rv[i] and score[i] >= rho:
                    # insertion sort on descending score; equal scores keep index order
                    j = ne
                    while j > 0 and score[order[j - 1]] < score[i]:
                        order[j] = order[j - 1]
                        j -= 1
                    order[j] = i
                    ne += 1
            shown = ne if ne < K else K

            for k in range(shown):
                bi = order[k]
                fl_k = dmax(rv[bi], cv[bi] + rho / kk[bi])
                total = 0.0
                for m in range(k, K):
                    if m + 1 < ne:
                        tau = dmax(cv[bi] + score[order[m + 1]] / kk[bi], fl_k)
                    else:
                        tau = fl_k
                    total = total + (s_ext[m] - s_ext[m + 1]) * tau
                truthful[k] = total / sv[k]

            rev = 0.0
            wel = 0.0
            clk = 0.0
            if shown > 0:
                b_cur = tv[row, order[0]]
            for k in range(shown):
                bi = order[k]
                fl_k = dmax(rv[bi], cv[bi] + rho / kk[bi])
                if mode == 0:
                    p = truthful[k]
                else:
                    if k + 1 < ne:
                        bj = order[k + 1]
                        if k + 1 < shown:
                            fl_j = dmax(rv[bj], cv[bj] + rho / kk[bj])
                            target = kk[bi] * ((truthful[k] if truthful[k] < b_cur else b_cur) - cv[bi])
                            b_j = dmax(cv[bj] + target / kk[bj], fl_j)
                            nxt = kk[bj] * (b_j - cv[bj])
                            b_cur = b_j
                        else:
                            nxt = score[bj]
                        p = dmax(cv[bi] + nxt / kk[bi], fl_k)
                    else:
                        p = fl_k
                eff = wv[row, bi] * sv[k]
                rev = rev + p * eff
                wel = wel + tv[row, bi] * eff
                clk = clk + eff
            out[row, 0] = rev
            out[row, 1] = wel
            out[row, 2] = clk
            out[row, 3] = shown
    return out_arr
