"""Target VCS / AECS: objectives, derivatives and the projected-gradient solver.

Both scores minimise a convex function of the simplex weights p through the
assembled Gramian ``W(p) = sum_i p_i W_i``:

* VCS:  f(p) = -log det W(p)
* AECS: g(p) = tr W(p)^{-1}

Everything goes through a Cholesky factor ``W = L L^T``; a failed
factorisation or ``lambda_min(W) <= 1e-12 lambda_max(W)`` means p is outside
the feasible set and raises ``FeasibilityError``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from .errors import FeasibilityError, LineSearchError, ValidationError
from .gramian import GramianSet, assemble
from .simplex import simplex_project

log = logging.getLogger(__name__)

FEAS_RTOL = 1e-12
TAU_UNIQUE = 1e-10
MAX_HALVINGS = 60


class ScoreKind(str, Enum):
    VCS = "vcs"
    AECS = "aecs"

    @classmethod
    def parse(cls, value) -> "ScoreKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(f"unknown score kind {value!r}; use 'vcs' or 'aecs'") from None


@dataclass(frozen=True)
class SolverOptions:
    """Armijo / stopping parameters.  Defaults are conventional choices."""

    sigma: float = 1e-4
    rho: float = 0.5
    alpha0: float = 1.0
    epsilon_stop: float = 1e-12
    max_iters: int = 100_000

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ValidationError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not 0 < self.rho < 1:
            raise ValidationError(f"rho must lie in (0, 1), got {self.rho}")
        if not (self.alpha0 > 0 and math.isfinite(self.alpha0)):
            raise ValidationError(f"alpha0 must be positive, got {self.alpha0}")
        if not self.epsilon_stop >= 0:
            raise ValidationError(f"epsilon_stop must be nonnegative, got {self.epsilon_stop}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValidationError(f"max_iters must be a positive integer, got {self.max_iters}")


@dataclass(frozen=True)
class UniquenessCertificate:
    smallest_normalized_singular_value: float
    det_R: float
    verdict: str  # "unique" | "indeterminate"


@dataclass(frozen=True)
class Evaluation:
    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class ArmijoStep:
    alpha: float
    p_next: np.ndarray
    value_next: float
    halvings: int


@dataclass
class ScoreResult:
    kind: ScoreKind
    p_star: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    objective_trace: list = field(repr=False)
    feasibility_margin: float
    uniqueness: UniquenessCertificate
    stationarity_residual: float
    options: SolverOptions


def _stack(gset):
    return gset.gramians if isinstance(gset, GramianSet) else np.asarray(gset, dtype=float)


def _cholesky(w):
    ev = np.linalg.eigvalsh(w)
    if not ev[0] > FEAS_RTOL * max(ev[-1], 0.0):
        raise FeasibilityError(
            f"W(p) is not positive definite (lambda_min = {ev[0]:.3e}, lambda_max = {ev[-1]:.3e})",
            lambda_min=float(ev[0]),
        )
    try:
        return np.linalg.cholesky(w)
    except np.linalg.LinAlgError:
        raise FeasibilityError("Cholesky factorisation of W(p) failed", lambda_min=float(ev[0])) from None


def _check_p(p, m):
    p = np.asarray(p, dtype=float)
    if p.shape != (m,):
        raise ValidationError(f"weight vector has shape {p.shape}, expected ({m},)")
    return p


@dataclass
class _State:
    p: np.ndarray
    low: np.ndarray
    linv: np.ndarray
    value: float
    gradient: np.ndarray | None = None


def _state(kind, p, stack, with_gradient=True):
    low = _cholesky(assemble(p, stack))
    linv = solve_triangular(low, np.eye(low.shape[0]), lower=True)
    if kind is ScoreKind.VCS:
        value = -2.0 * float(np.sum(np.log(np.diag(low))))
    else:
        value = float(np.sum(linv * linv))
    st = _State(p, low, linv, value)
    if with_gradient:
        winv = linv.T @ linv
        if kind is ScoreKind.VCS:
            st.gradient = -np.einsum("ab,iab->i", winv, stack)
        else:
            st.gradient = -np.einsum("ab,iab->i", winv @ winv, stack)
    return st


def _increment(kind, base: _State, trial: _State, d, stack) -> float:
    # h(p + d) - h(p) from W(d) directly; differencing two values of h
    # loses everything once the step drops below roundoff of h itself.
    dw = assemble(d, stack)
    if kind is ScoreKind.VCS:
        x = base.linv @ dw @ base.linv.T
        ev = np.linalg.eigvalsh(0.5 * (x + x.T))
        return -float(np.sum(np.log1p(ev)))
    winv = base.linv.T @ base.linv
    winv_trial = trial.linv.T @ trial.linv
    return -float(np.sum(winv_trial * (dw @ winv).T))


def _scaled_increment(kind, base: _State, trial: _State, d, stack):
    """Increment and directional derivative of H(q) = h(q / sum q).

    H equals h on the simplex.  Trial points miss ``sum = 1`` by a few ulps,
    and along that direction the gradient of h is large (about -m for VCS,
    -g for AECS), enough to swamp the second-order decrease near the
    optimum.  Homogeneity (f(q/s) = f(q) + m log s, g(q/s) = s g(q)) removes
    the stray component exactly.
    """
    m = d.shape[0]
    s = math.fsum(base.p)
    s_trial = math.fsum(trial.p)
    ds = math.fsum(d)
    inc = _increment(kind, base, trial, d, stack)
    g = base.gradient
    c = float(np.mean(g))
    gd = float((g - c) @ d)
    if kind is ScoreKind.VCS:
        return inc + m * math.log1p(ds / s), gd + (c + m / s) * ds
    return s_trial * inc + ds * base.value, s * gd + (s * c + base.value) * ds


def objective(kind, p, gset) -> float:
    """h(p) only; cheaper than ``evaluate`` when the gradient is not needed."""
    kind = ScoreKind.parse(kind)
    stack = _stack(gset)
    return _state(kind, _check_p(p, stack.shape[0]), stack, with_gradient=False).value


def evaluate(kind, p, gset) -> Evaluation:
    """Objective value and gradient at ``p``.

    VCS gradient: ``-tr(W^{-1} W_i)``; AECS gradient: ``-tr(W^{-1} W_i W^{-1})``.
    """
    kind = ScoreKind.parse(kind)
    stack = _stack(gset)
    st = _state(kind, _check_p(p, stack.shape[0]), stack)
    return Evaluation(st.value, st.gradient)


def _whitened(low, stack):
    # S_i = L^{-1} W_i L^{-T}
    m = low.shape[0]
    k = stack.shape[0]

    def left_solve(blocks):
        wide = blocks.transpose(1, 0, 2).reshape(m, k * m)
        out = solve_triangular(low, wide, lower=True)
        return out.reshape(m, k, m).transpose(1, 0, 2)

    y = left_solve(stack)
    s = left_solve(y.transpose(0, 2, 1))
    return 0.5 * (s + s.transpose(0, 2, 1))


def hessian(kind, p, gset) -> np.ndarray:
    """Hessian of f (VCS) or g (AECS) at ``p``."""
    kind = ScoreKind.parse(kind)
    stack = _stack(gset)
    p = _check_p(p, stack.shape[0])
    low = _cholesky(assemble(p, stack))
    s = _whitened(low, stack)
    if kind is ScoreKind.VCS:
        h = np.einsum("iab,jba->ij", s, s)
    else:
        linv = solve_triangular(low, np.eye(low.shape[0]), lower=True)
        u = s @ (linv @ linv.T)
        h1 = np.einsum("iab,jba->ij", s, u)
        h = h1 + h1.T
    return 0.5 * (h + h.T)


def stationarity_residual(kind, p, gset, grad=None) -> float:
    """``||p - Proj(p - grad h(p))||``; zero exactly at a minimiser."""
    p = np.asarray(p, dtype=float)
    if grad is None:
        grad = evaluate(kind, p, gset).gradient
    grad = np.asarray(grad) - np.mean(grad)
    return float(np.linalg.norm(p - simplex_project(p - grad)))


def _search(kind, st: _State, stack, options):
    # the projection is shift invariant, so use the centred gradient
    grad = st.gradient - np.mean(st.gradient)
    alpha = options.alpha0
    for halvings in range(MAX_HALVINGS + 1):
        trial = simplex_project(st.p - alpha * grad)
        d = trial - st.p
        if not np.any(d):
            return ArmijoStep(alpha, trial, st.value, halvings), st, 0.0
        try:
            nxt = _state(kind, trial, stack, with_gradient=False)
            inc, slope = _scaled_increment(kind, st, nxt, d, stack)
        except FeasibilityError:
            inc, slope = math.inf, 0.0
        # the exact slope along the projection arc is <= 0; clip roundoff
        if inc <= options.sigma * min(slope, 0.0):
            return ArmijoStep(alpha, trial, nxt.value, halvings), nxt, inc
        alpha *= options.rho
    raise LineSearchError(
        f"Armijo backtracking failed after {MAX_HALVINGS} reductions "
        f"(stationary or ill-conditioned point, h = {st.value:.6g})"
    )


def armijo_step(kind, p, gset, options: SolverOptions | None = None) -> ArmijoStep:
    """One backtracking search along the projection arc.

    Returns the first ``alpha`` in ``alpha0, rho*alpha0, ...`` whose projected
    trial point satisfies the sufficient-decrease test.  Trial points outside
    the feasible set count as failures.
    """
    kind = ScoreKind.parse(kind)
    options = options or SolverOptions()
    stack = _stack(gset)
    st = _state(kind, _check_p(p, stack.shape[0]), stack)
    return _search(kind, st, stack, options)[0]


def uniqueness_certificate(gset) -> UniquenessCertificate:
    """Numerical check that W_1, ..., W_m are linearly independent.

    Also reports det R(T), where ``R_ij = int_0^T P_ij(t)^2 dt`` equals the
    (i, i) diagonal entry of W_j.
    """
    stack = _stack(gset)
    m = stack.shape[0]
    if m == 0:
        raise ValidationError("empty Gramian set")
    cols = stack.reshape(m, -1)
    cols = cols / np.linalg.norm(cols, axis=1, keepdims=True)
    sv = np.linalg.svd(cols.T, compute_uv=False)
    smin = float(sv[-1]) if sv.size == m else 0.0
    r = np.diagonal(stack, axis1=1, axis2=2).T
    det_r = float(np.linalg.det(r))
    verdict = "unique" if smin > TAU_UNIQUE else "indeterminate"
    return UniquenessCertificate(smin, det_r, verdict)


def solve_score(kind, gset, options: SolverOptions | None = None, p0=None) -> ScoreResult:
    """Projected gradient with Armijo steps from the uniform weight vector.

    ``objective_trace`` starts at h(p0) and accumulates the per-step
    increments used by the line search, so it is monotone by construction;
    ``objective_value`` is a fresh evaluation at the returned point.
    """
    kind = ScoreKind.parse(kind)
    options = options or SolverOptions()
    stack = _stack(gset)
    m = stack.shape[0]
    p = np.full(m, 1.0 / m) if p0 is None else _check_p(p0, m).copy()
    try:
        st = _state(kind, p, stack)
    except FeasibilityError as exc:
        raise FeasibilityError(f"starting point is infeasible: {exc}", exc.lambda_min) from None
    trace = [st.value]
    converged = False
    it = 0
    while it < options.max_iters:
        it += 1
        try:
            step, nxt, inc = _search(kind, st, stack, options)
        except LineSearchError:
            res = stationarity_residual(kind, st.p, stack, st.gradient)
            log.warning("line search stalled at iteration %d (stationarity residual %.3e)", it, res)
            converged = res <= 1e-8
            break
        moved = float(np.linalg.norm(step.p_next - st.p))
        trace.append(trace[-1] + inc)
        st = _state(kind, step.p_next, stack)
        if moved <= options.epsilon_stop:
            converged = True
            break
    if not converged:
        log.info("%s solve stopped after %d iterations without meeting epsilon_stop", kind.value, it)
    p = st.p
    margin = float(np.linalg.eigvalsh(assemble(p, stack))[0])
    return ScoreResult(
        kind=kind,
        p_star=p,
        objective_value=st.value,
        iterations=it,
        converged=converged,
        objective_trace=trace,
        feasibility_margin=margin,
        uniqueness=uniqueness_certificate(stack),
        stationarity_residual=stationarity_residual(kind, p, stack, st.gradient),
        options=options,
    )
