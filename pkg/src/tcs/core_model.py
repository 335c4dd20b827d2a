"""Dynamics matrix, target selection and the canonical block partition.

Targets are given as 1-based node indices.  ``canonicalize`` moves them,
in the caller's order, to the leading coordinates so that the output map
becomes ``C = (I_m 0)`` and ``A`` splits into ``A11, A12, A21, A22``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class SystemMatrix:
    """The n x n matrix A of ``dx/dt = A x`` together with node labels."""

    entries: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValidationError(f"system matrix must be square and non-empty, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            bad = tuple(int(k) + 1 for k in np.argwhere(~np.isfinite(a))[0])
            raise ValidationError(f"system matrix has a non-finite entry at (row, col) = {bad}")
        labels = tuple(self.labels) if len(self.labels) else tuple(f"node_{i + 1}" for i in range(a.shape[0]))
        if len(labels) != a.shape[0]:
            raise ValidationError(f"expected {a.shape[0]} labels, got {len(labels)}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class TargetSpec:
    """Ordered, distinct 1-based target node indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(self.indices)
        if len(idx) == 0:
            raise ValidationError("at least one target is required")
        clean = []
        for k in idx:
            if isinstance(k, (bool, np.bool_)) or int(k) != k:
                raise ValidationError(f"target index {k!r} is not an integer")
            clean.append(int(k))
        object.__setattr__(self, "indices", tuple(clean))

    @property
    def m(self) -> int:
        return len(self.indices)

    def validate(self, n: int) -> None:
        seen = set()
        for k in self.indices:
            if not 1 <= k <= n:
                raise ValidationError(f"target index {k} is out of range [1, {n}]")
            if k in seen:
                raise ValidationError(f"target index {k} is duplicated")
            seen.add(k)


@dataclass(frozen=True)
class CanonicalSystem:
    """A permuted so the targets occupy the first m coordinates.

    ``permutation[i]`` is the 0-based original index of canonical node ``i``.
    """

    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray
    permutation: np.ndarray
    labels: tuple[str, ...] = field(default=())

    @property
    def m(self) -> int:
        return self.a11.shape[0]

    @property
    def n(self) -> int:
        return self.a11.shape[0] + self.a22.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """The full permuted matrix P A P^T."""
        return np.block([[self.a11, self.a12], [self.a21, self.a22]])

    def restore(self) -> np.ndarray:
        """Undo the permutation and return the original A."""
        n = self.n
        out = np.empty((n, n))
        p = self.permutation
        out[np.ix_(p, p)] = self.matrix
        return out


def canonicalize(system: SystemMatrix, targets: TargetSpec | Sequence[int]) -> CanonicalSystem:
    """Permute ``system`` so that ``targets`` (in order) come first.

    Non-target nodes keep their original relative order.
    """
    if not isinstance(targets, TargetSpec):
        targets = TargetSpec(tuple(targets))
    n = system.n
    targets.validate(n)
    lead = [k - 1 for k in targets.indices]
    chosen = set(lead)
    perm = np.array(lead + [i for i in range(n) if i not in chosen], dtype=np.intp)
    a = system.entries[np.ix_(perm, perm)]
    m = targets.m
    perm.setflags(write=False)
    return CanonicalSystem(
        a11=a[:m, :m].copy(),
        a12=a[:m, m:].copy(),
        a21=a[m:, :m].copy(),
        a22=a[m:, m:].copy(),
        permutation=perm,
        labels=tuple(system.labels[i] for i in perm),
    )


def standalone(a: np.ndarray, labels: Sequence[str] = ()) -> CanonicalSystem:
    """Canonical form of ``a`` with every node targeted (no cross blocks)."""
    sys_ = SystemMatrix(a, tuple(labels))
    return canonicalize(sys_, TargetSpec(tuple(range(1, sys_.n + 1))))
