"""Per-node output controllability Gramians and their affine assembly.

For target node i (canonical coordinates) the output Gramian is

    W_i(T) = C [ int_0^T exp(A t) e_i e_i^T exp(A^T t) dt ] C^T,   C = (I_m 0),

and the reduced Gramian replaces A by the leading block A11 and drops C.

Two independent routes are provided:

``block-exp``
    Van Loan's augmented exponential.  For ``M = [[-A, e_i e_i^T], [0, A^T]]``
    the blocks of ``exp(M h)`` give the state Gramian over ``[0, h]`` as
    ``F22^T F12``.  Long horizons are split as ``T = 2^s h`` with
    ``||A||_1 h <= 1`` and recombined by ``W(2h) = W(h) + e^{Ah} W(h) e^{A^T h}``,
    which keeps the augmented exponential free of the huge ``exp(-A T)``
    factor.
``quadrature``
    Composite Simpson on ``P(t) = C exp(A t)``, propagated step by step,
    accumulating all m rank-one integrands in one pass; the grid is halved
    until successive results agree to ``rtol``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from .core_model import CanonicalSystem
from .errors import AccuracyError, ValidationError
from .expm import matrix_exponential

__all__ = [
    "GramianSet",
    "RankResult",
    "matrix_exponential",
    "output_gramian_set",
    "reduced_gramian_set",
    "gramian_set",
    "assemble",
    "output_controllability_rank",
    "TAU_PSD",
    "RANK_RTOL",
]

TAU_PSD = 1e-10
RANK_RTOL = 1e-10
QUAD_RTOL = 1e-10
QUAD_MAX_INTERVALS = 2 ** 18

Method = Literal["block-exp", "quadrature"]
Flavor = Literal["full", "reduced"]


@dataclass(frozen=True)
class GramianSet:
    """Stack of m symmetric m x m Gramians for one horizon.

    ``gramians[i]`` is W_i(T) (flavor ``"full"``) or W_{i,red}(T)
    (flavor ``"reduced"``).  ``tolerance`` is the method's own accuracy
    estimate: roundoff scale for ``block-exp``, the last Simpson
    refinement difference for ``quadrature``.
    """

    gramians: np.ndarray
    horizon: float
    flavor: Flavor = "full"
    method: Method = "block-exp"
    tolerance: float = 0.0

    @property
    def m(self) -> int:
        return self.gramians.shape[0]

    def __len__(self):
        return self.m

    def __getitem__(self, i):
        return self.gramians[i]

    def check(self, tau_psd: float = TAU_PSD) -> None:
        """Raise ``ValidationError`` unless every W_i is symmetric, PSD and has positive trace."""
        for i, w in enumerate(self.gramians):
            scale = np.linalg.norm(w)
            if np.linalg.norm(w - w.T) > 1e-12 * scale:
                raise ValidationError(f"W_{i + 1} is not symmetric")
            ev = np.linalg.eigvalsh(w)
            if ev[0] < -tau_psd * max(ev[-1], 0.0):
                raise ValidationError(f"W_{i + 1} is not PSD (lambda_min = {ev[0]:.3e})")
            if not np.trace(w) > 0:
                raise ValidationError(f"W_{i + 1} has nonpositive trace")


def _check_horizon(T):
    T = float(T)
    if not (math.isfinite(T) and T > 0):
        raise ValidationError(f"horizon T must be positive and finite, got {T}")
    return T


def _sym(x):
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def _block_exp(a: np.ndarray, m: int, T: float) -> np.ndarray:
    n = a.shape[0]
    norm = float(np.abs(a).sum(axis=0).max()) if n else 0.0
    s = 0 if norm * T <= 1.0 else min(60, math.ceil(math.log2(norm * T)))
    h = T / 2.0 ** s
    aug = np.zeros((m, 2 * n, 2 * n))
    aug[:, :n, :n] = -a
    aug[:, n:, n:] = a.T
    idx = np.arange(m)
    aug[idx, idx, n + idx] = 1.0
    f = matrix_exponential(aug, h)
    w = np.swapaxes(f[:, n:, n:], -1, -2) @ f[:, :n, n:]
    w = _sym(w)
    phi = matrix_exponential(a, h)
    for _ in range(s):
        w = _sym(w + phi @ w @ phi.T)
        phi = phi @ phi
    return w[:, :m, :m]


def _simpson(a: np.ndarray, m: int, T: float, rtol: float = QUAD_RTOL,
             max_intervals: int = QUAD_MAX_INTERVALS):
    n = a.shape[0]
    c = np.eye(n)[:m]
    prev = None
    diff = math.inf
    intervals = 16
    while intervals <= max_intervals:
        h = T / intervals
        step = matrix_exponential(a, h)
        p = c.copy()
        acc = np.zeros((m, m, m))
        for k in range(intervals + 1):
            wk = 1.0 if k in (0, intervals) else (4.0 if k % 2 else 2.0)
            pm = p[:, :m]
            acc += wk * np.einsum("ai,bi->iab", pm, pm)
            if k < intervals:
                p = p @ step
        w = _sym(acc * (h / 3.0))
        if prev is not None:
            diff = max(np.linalg.norm(w[i] - prev[i], 2) / np.linalg.norm(w[i], 2) for i in range(m))
            if diff <= rtol:
                return w, diff / 15.0
        prev = w
        intervals *= 2
    raise AccuracyError(
        f"Simpson quadrature did not reach rtol={rtol:g} within {max_intervals} intervals",
        residual=diff,
    )


def _compute(a, m, T, method):
    if method == "block-exp":
        w = _block_exp(a, m, T)
        return w, float(np.finfo(float).eps * max(1, a.shape[0]) * 10)
    if method == "quadrature":
        return _simpson(a, m, T)
    raise ValidationError(f"unknown Gramian method {method!r}; use 'block-exp' or 'quadrature'")


def output_gramian_set(canon: CanonicalSystem, T: float, method: Method = "block-exp") -> GramianSet:
    """W_1(T), ..., W_m(T) for the full system restricted to its targets."""
    T = _check_horizon(T)
    if not np.any(canon.a12):
        # targets are not driven by the rest: C exp(At) C^T = exp(A11 t) exactly
        w, tol = _compute(np.array(canon.a11, dtype=float), canon.m, T, method)
    else:
        w, tol = _compute(canon.matrix, canon.m, T, method)
    return GramianSet(w, T, "full", method, tol)


def reduced_gramian_set(canon: CanonicalSystem, T: float, method: Method = "block-exp") -> GramianSet:
    """W_{1,red}(T), ..., W_{m,red}(T) of the target-only system ``A11``."""
    T = _check_horizon(T)
    w, tol = _compute(np.array(canon.a11, dtype=float), canon.m, T, method)
    return GramianSet(w, T, "reduced", method, tol)


def gramian_set(canon: CanonicalSystem, T: float, flavor: Flavor = "full",
                method: Method = "block-exp") -> GramianSet:
    if flavor == "full":
        return output_gramian_set(canon, T, method)
    if flavor == "reduced":
        return reduced_gramian_set(canon, T, method)
    raise ValidationError(f"unknown flavor {flavor!r}")


def assemble(p, gset: GramianSet | np.ndarray) -> np.ndarray:
    """W(p) = sum_i p_i W_i."""
    stack = gset.gramians if isinstance(gset, GramianSet) else np.asarray(gset)
    p = np.asarray(p, dtype=float)
    if p.shape != (stack.shape[0],):
        raise ValidationError(f"weight vector has shape {p.shape}, expected ({stack.shape[0]},)")
    if not np.all(np.isfinite(p)):
        raise ValidationError("weight vector has non-finite entries")
    return _sym(np.tensordot(p, stack, axes=1))


@dataclass(frozen=True)
class RankResult:
    rank: int
    full_row_rank: bool
    smallest_singular_value: float


def output_controllability_rank(canon: CanonicalSystem, support: Iterable[int]) -> RankResult:
    """Rank of ``(CB, CAB, ..., CA^{n-1}B)`` with unit inputs on ``support``.

    ``support`` holds 1-based canonical target positions (1..m).
    """
    support = sorted(set(int(k) for k in support))
    m, n = canon.m, canon.n
    if not support:
        raise ValidationError("support must be nonempty")
    for k in support:
        if not 1 <= k <= m:
            raise ValidationError(f"support index {k} is out of range [1, {m}]")
    a = canon.matrix
    x = np.zeros((n, len(support)))
    x[[k - 1 for k in support], np.arange(len(support))] = 1.0
    blocks = []
    for _ in range(n):
        blocks.append(x[:m])
        x = a @ x
    sv = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0
    smallest = float(sv[m - 1]) if sv.size >= m else 0.0
    return RankResult(rank, rank == m, smallest)
