"""Euclidean projection onto the probability simplex.

``simplex_project`` is Condat's scan algorithm (Math. Program. 2016),
which runs in expected linear time without sorting.  ``simplex_project_sort``
is the classical sort-and-threshold method, kept as an independent check.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _condat_tau(y, a):
    n = y.shape[0]
    v = np.empty(n)
    vt = np.empty(n)
    nv = 1
    nvt = 0
    v[0] = y[0]
    rho = y[0] - a
    for k in range(1, n):
        yk = y[k]
        if yk > rho:
            rho += (yk - rho) / (nv + 1)
            if rho > yk - a:
                v[nv] = yk
                nv += 1
            else:
                for j in range(nv):
                    vt[nvt] = v[j]
                    nvt += 1
                v[0] = yk
                nv = 1
                rho = yk - a
    for j in range(nvt):
        yk = vt[j]
        if yk > rho:
            v[nv] = yk
            nv += 1
            rho += (yk - rho) / nv
    changed = True
    while changed:
        changed = False
        j = 0
        while j < nv:
            yk = v[j]
            if yk <= rho:
                v[j] = v[nv - 1]
                nv -= 1
                rho += (rho - yk) / nv
                changed = True
            else:
                j += 1
    return rho


def simplex_project(v) -> np.ndarray:
    """Project ``v`` onto ``{x >= 0, sum(x) = 1}``."""
    y = np.ascontiguousarray(v, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError(f"expected a non-empty vector, got shape {y.shape}")
    tau = _condat_tau(y, 1.0)
    return np.maximum(y - tau, 0.0)


def simplex_project_sort(v) -> np.ndarray:
    """Sort-based projection (Held et al. / Duchi et al.)."""
    y = np.asarray(v, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, y.size + 1)
    r = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[r] / (r + 1)
    return np.maximum(y - tau, 0.0)
