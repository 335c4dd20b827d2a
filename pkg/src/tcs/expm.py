"""Matrix exponential by scaling and squaring with diagonal Pade approximants.

Degree selection and the theta thresholds follow Higham (2005), "The scaling
and squaring method for the matrix exponential revisited".  Inputs may carry
leading batch axes; one scaling exponent is chosen for the whole batch so
every member sees the same arithmetic.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError

_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}

_COEF = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
         960960.0, 16380.0, 182.0, 1.0),
}


def _pade(a, m):
    b = _COEF[m]
    eye = np.broadcast_to(np.eye(a.shape[-1]), a.shape)
    a2 = a @ a
    if m == 13:
        a4 = a2 @ a2
        a6 = a4 @ a2
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye)
    else:
        powers = [eye, a2]
        for _ in range(2, (m + 1) // 2):
            powers.append(powers[-1] @ a2)
        u = sum(b[j] * powers[j // 2] for j in range(m, 0, -2))
        u = a @ u
        v = sum(b[j] * powers[j // 2] for j in range(m - 1, -1, -2))
    return np.linalg.solve(v - u, v + u)


def matrix_exponential(M, t: float = 1.0) -> np.ndarray:
    """Return ``exp(M t)``.

    ``M`` has shape ``(..., k, k)``; batch axes are exponentiated
    independently.  ``t`` must be finite and nonnegative.
    """
    a = np.asarray(M, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValidationError(f"matrix_exponential needs square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix_exponential input has non-finite entries")
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise ValidationError(f"time must be finite and nonnegative, got {t}")
    a = a * t
    if a.shape[-1] == 0:
        return a.copy()
    norm = float(np.max(np.abs(a).sum(axis=-2))) if a.size else 0.0
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            return _pade(a, m)
    s = max(0, math.ceil(math.log2(norm / _THETA[13])))
    f = _pade(a / 2.0 ** s, 13)
    for _ in range(s):
        f = f @ f
    return f
