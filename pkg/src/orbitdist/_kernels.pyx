# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: shortest-augmenting-path assignment and the cyclic offset scan."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()


def lsap(const double[:, ::1] cost):
    """Minimum-cost perfect matching of a square matrix.

    Returns ``(col4row, u, v)``; the duals satisfy u[i] + v[j] <= cost[i, j]
    with equality on matched pairs.
    """
    cdef Py_ssize_t n = cost.shape[0]
    if cost.shape[1] != n:
        raise ValueError("cost matrix must be square")
    u_arr = np.zeros(n)
    v_arr = np.zeros(n)
    spc_arr = np.empty(n)
    path_arr = np.full(n, -1, dtype=np.intp)
    col4row_arr = np.full(n, -1, dtype=np.intp)
    row4col_arr = np.full(n, -1, dtype=np.intp)
    remaining_arr = np.empty(n, dtype=np.intp)
    sr_arr = np.zeros(n, dtype=np.uint8)
    sc_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, spc = spc_arr
    cdef Py_ssize_t[::1] path = path_arr, col4row = col4row_arr, row4col = row4col_arr
    cdef Py_ssize_t[::1] remaining = remaining_arr
    cdef unsigned char[::1] SR = sr_arr, SC = sc_arr
    cdef Py_ssize_t cur_row, i, j, it, index, sink, num_remaining, tmp
    cdef double min_val, lowest, r

    with nogil:
        for cur_row in range(n):
            for it in range(n):
                remaining[it] = n - it - 1
                SR[it] = 0
                SC[it] = 0
                spc[it] = INFINITY
            num_remaining = n
            min_val = 0.0
            sink = -1
            i = cur_row
            while sink == -1:
                SR[i] = 1
                index = -1
                lowest = INFINITY
                for it in range(num_remaining):
                    j = remaining[it]
                    r = min_val + cost[i, j] - u[i] - v[j]
                    if r < spc[j]:
                        path[j] = i
                        spc[j] = r
                    if spc[j] < lowest or (spc[j] == lowest and row4col[j] == -1):
                        lowest = spc[j]
                        index = it
                min_val = lowest
                if min_val == INFINITY or index == -1:
                    break
                j = remaining[index]
                if row4col[j] == -1:
                    sink = j
                else:
                    i = row4col[j]
                SC[j] = 1
                num_remaining -= 1
                remaining[index] = remaining[num_remaining]
            if sink == -1:
                break
            u[cur_row] += min_val
            for i in range(n):
                if SR[i] and i != cur_row:
                    u[i] += min_val - spc[col4row[i]]
            for j in range(n):
                if SC[j]:
                    v[j] -= min_val - spc[j]
            j = sink
            while True:
                i = path[j]
                row4col[j] = i
                tmp = col4row[i]
                col4row[i] = j
                j = tmp
                if i == cur_row:
                    break
    if (col4row_arr < 0).any():
        raise ValueError("cost matrix is infeasible (non-finite entries?)")
    return col4row_arr, u_arr, v_arr


def cyclic_scan(const double[::1] xs, const double[::1] ys):
    """Best cyclic offset between two sorted circle samples.

    Returns ``(best_offset, best_total, totals)`` where totals[t] is
    sum_k d(xs[k], ys[(k + t) % n]).
    """
    cdef Py_ssize_t n = xs.shape[0]
    if ys.shape[0] != n:
        raise ValueError("length mismatch")
    totals_arr = np.empty(n)
    cdef double[::1] totals = totals_arr
    cdef Py_ssize_t t, k, idx, best = 0
    cdef double s, d, best_val = INFINITY
    with nogil:
        for t in range(n):
            s = 0.0
            idx = t
            for k in range(n):
                d = fabs(xs[k] - ys[idx])
                if d > 0.5:
                    d = 1.0 - d
                s += d
                idx += 1
                if idx == n:
                    idx = 0
            totals[t] = s
            if s < best_val:
                best_val = s
                best = t
    return best, best_val, totals_arr
