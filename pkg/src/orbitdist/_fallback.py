"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and the same algorithms; the inner loops are vectorized over
columns / offsets instead of compiled.
"""
import numpy as np


def lsap(cost):
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.ndim != 2 or cost.shape[1] != n:
        raise ValueError("cost matrix must be square")
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.intp)
    row4col = np.full(n, -1, dtype=np.intp)
    path = np.full(n, -1, dtype=np.intp)
    for cur_row in range(n):
        spc = np.full(n, np.inf)
        SR = np.zeros(n, dtype=bool)
        SC = np.zeros(n, dtype=bool)
        min_val = 0.0
        sink = -1
        i = cur_row
        while sink == -1:
            SR[i] = True
            r = min_val + cost[i] - u[i] - v
            better = (r < spc) & ~SC
            path[better] = i
            spc[better] = r[better]
            cand = np.where(SC, np.inf, spc)
            lowest = cand.min()
            if not np.isfinite(lowest):
                raise ValueError("cost matrix is infeasible (non-finite entries?)")
            ties = np.flatnonzero(cand == lowest)
            free = ties[row4col[ties] == -1]
            j = int(free[0]) if free.size else int(ties[0])
            min_val = lowest
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])
            SC[j] = True
        u[cur_row] += min_val
        rows = np.flatnonzero(SR)
        rows = rows[rows != cur_row]
        u[rows] += min_val - spc[col4row[rows]]
        v[SC] -= min_val - spc[SC]
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, int(col4row[i])
            if i == cur_row:
                break
    return col4row, u, v


def cyclic_scan(xs, ys, block=256):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    n = xs.shape[0]
    if ys.shape[0] != n:
        raise ValueError("length mismatch")
    totals = np.empty(n)
    k = np.arange(n)
    for t0 in range(0, n, block):
        ts = np.arange(t0, min(t0 + block, n))
        d = np.abs(xs[None, :] - ys[(k[None, :] + ts[:, None]) % n])
        np.minimum(d, 1.0 - d, out=d)
        totals[ts] = d.sum(axis=1)
    best = int(np.argmin(totals))
    return best, float(totals[best]), totals
