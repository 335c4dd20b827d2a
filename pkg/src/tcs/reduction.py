"""Reduced-model scores and the error bounds relating them to the target scores.

The reduced problem replaces the output Gramians ``W_i`` by the Gramians of
the target-only system ``A11``.  With ``Delta W_i = W_{i,red} - W_i`` and the
logarithmic norm ``mu(A) = lambda_max((A + A^T) / 2)``:

* ``||Delta W_i(T)|| <= Phi_mu(T) ||A12||``
* ``delta* = Phi_mu(T) ||A12|| / min_{p in Z} lambda_min(W(p))`` sandwiches
  ``(1 - delta*) W(p) <= W_red(p) <= (1 + delta*) W(p)`` on ``Z``, which
  turns into objective and solution-distance bounds for both scores.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from numpy.polynomial.legendre import leggauss

from .core_model import CanonicalSystem
from .errors import FeasibilityError, ValidationError
from .gramian import GramianSet, assemble, output_gramian_set, reduced_gramian_set
from .scores import (
    FEAS_RTOL,
    ScoreKind,
    ScoreResult,
    SolverOptions,
    hessian,
    objective,
    solve_score,
)

log = logging.getLogger(__name__)

PHI_SWITCH = 1e-6
MU_STRONG_FLOOR = 1e-14
SEGMENT_POINTS = 11
LAPLACIAN_MU_TOL = 1e-8

__all__ = [
    "BoundInputs",
    "ComparisonReport",
    "DeltaQuantities",
    "GramianGap",
    "bound_inputs",
    "comparison_report",
    "delta_quantities",
    "gramian_gap",
    "integral_gap",
    "log_norm",
    "phi",
    "phi_overflows",
    "strong_convexity_estimate",
]


def log_norm(M) -> float:
    """Spectral logarithmic norm ``lambda_max((M + M^T) / 2)``."""
    a = np.asarray(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"log_norm needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("log_norm input has non-finite entries")
    if a.size == 0:
        return -math.inf
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[-1])


def _psi(x: float) -> float:
    # 2 (e^x (x - 1) + 1) / x^2 = sum_j 2 (j + 1) / (j + 2)! x^j
    if abs(x) < 1.0:
        total, term, j = 0.0, 0.5, 0  # term = x^j / (j + 2)!
        while True:
            add = 2.0 * (j + 1) * term
            total += add
            if abs(add) <= 1e-17 * abs(total):
                return total
            j += 1
            term *= x / (j + 2)
    num = x * math.exp(x) - math.expm1(x)
    return 2.0 * num / (x * x)


def phi_overflows(mu: float, T: float) -> bool:
    """True when ``phi(mu, T)`` is not representable and is reported as inf."""
    return math.isinf(phi(mu, T))


def phi(mu: float, T: float) -> float:
    """Gap prefactor ``Phi_mu(T)``.

    ``(e^{2 mu T} (2 mu T - 1) + 1) / (2 mu^2)``, or ``T^2`` when
    ``|mu| T <= 1e-6``.  Away from zero the expression is evaluated as
    ``T^2 psi(2 mu T)`` with a power series for ``|2 mu T| < 1``, which avoids
    the cancellation in the raw formula.  Returns ``inf`` on overflow.
    """
    mu, T = float(mu), float(T)
    if not (math.isfinite(T) and T > 0):
        raise ValidationError(f"horizon T must be positive and finite, got {T}")
    if not math.isfinite(mu):
        raise ValidationError(f"mu must be finite, got {mu}")
    if abs(mu) * T <= PHI_SWITCH:
        return T * T
    try:
        return T * T * _psi(2.0 * mu * T)
    except OverflowError:
        log.warning("Phi_mu(T) overflows for mu = %g, T = %g; reporting inf", mu, T)
        return math.inf


@dataclass(frozen=True)
class BoundInputs:
    mu: float
    mu11: float
    a12_norm: float
    horizon: float

    def __post_init__(self):
        if self.a12_norm < 0:
            raise ValidationError("a12_norm must be nonnegative")
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        # interlacing; allow roundoff in the two eigensolves
        if self.mu11 > self.mu + 1e-12 * max(1.0, abs(self.mu)):
            raise ValidationError(f"mu11 = {self.mu11} exceeds mu = {self.mu}")

    @property
    def phi(self) -> float:
        return phi(self.mu, self.horizon)

    @property
    def epsilon_bound(self) -> float:
        """``Phi_mu(T) ||A12||``; zero whenever ``A12 = 0``."""
        if self.a12_norm == 0:
            return 0.0
        return self.phi * self.a12_norm


def bound_inputs(canon: CanonicalSystem, T: float) -> BoundInputs:
    a12 = np.asarray(canon.a12, dtype=float)
    a12_norm = float(np.linalg.norm(a12, 2)) if a12.size else 0.0
    return BoundInputs(log_norm(canon.matrix), log_norm(canon.a11), a12_norm, float(T))


@dataclass(frozen=True)
class GramianGap:
    delta_w: np.ndarray
    delta_w_norms: np.ndarray


def gramian_gap(full: GramianSet, reduced: GramianSet) -> GramianGap:
    """``Delta W_i = W_{i,red} - W_i`` and their spectral norms."""
    if full.gramians.shape != reduced.gramians.shape:
        raise ValidationError(
            f"Gramian sets differ in shape: {full.gramians.shape} vs {reduced.gramians.shape}"
        )
    if not math.isclose(full.horizon, reduced.horizon, rel_tol=1e-15):
        raise ValidationError(f"horizons differ: {full.horizon} vs {reduced.horizon}")
    dw = reduced.gramians - full.gramians
    norms = np.array([np.linalg.norm(d, 2) for d in dw])
    return GramianGap(dw, norms)


def integral_gap(canon: CanonicalSystem, T: float, nodes: int = 40, panels: int | None = None) -> np.ndarray:
    """``Delta W_i(T)`` from the variation-of-constants representation.

    With ``U = exp(A11 t)``, ``V = C exp(A t) C^T`` and
    ``X(t) = U - V = int_0^t exp(A11 (t - s)) E exp(A s) C^T ds``,
    ``E = (0  -A12)``, the gap is ``int_0^T X e_i e_i^T U^T + V e_i e_i^T X^T dt``.
    Both integrals use composite Gauss-Legendre rules and scipy's ``expm``,
    so this is independent of the block-exponential route.
    """
    a = canon.matrix
    a11 = np.asarray(canon.a11, dtype=float)
    m = canon.m
    e = np.hstack([np.zeros((m, m)), -np.asarray(canon.a12, dtype=float)])
    if panels is None:
        panels = max(1, math.ceil(np.linalg.norm(a, 2) * T / 4.0))
    x, w = leggauss(nodes)
    u, wu = 0.5 * (x + 1.0), 0.5 * w
    edges = np.linspace(0.0, T, panels + 1)
    t = (edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * u[None, :]).ravel()
    wt = ((edges[1:] - edges[:-1])[:, None] * wu[None, :]).ravel()

    out = np.zeros((m, m, m))
    for tk, wk in zip(t, wt):
        s = tk * u
        ea = scipy.linalg.expm(a[None] * s[:, None, None])[:, :, :m]
        e11 = scipy.linalg.expm(a11[None] * (tk - s)[:, None, None])
        xk = tk * np.einsum("k,kab,bc,kcd->ad", wu, e11, e, ea)
        uk = scipy.linalg.expm(a11 * tk)
        vk = scipy.linalg.expm(a * tk)[:m, :m]
        out += wk * (np.einsum("ai,bi->iab", xk, uk) + np.einsum("ai,bi->iab", vk, xk))
    return 0.5 * (out + out.transpose(0, 2, 1))


@dataclass(frozen=True)
class DeltaQuantities:
    delta_at: list
    epsilon_at: list
    delta_star: float
    margin: float


def delta_quantities(full: GramianSet, Z: Sequence, inputs: BoundInputs,
                     delta_w_norms) -> DeltaQuantities:
    """Pointwise ``delta_T(p)`` on ``Z`` and the uniform ``delta*``.

    ``margin`` is ``min_{p in Z} lambda_min(W(p))``.  Every member of ``Z`` must
    be feasible for the full problem.
    """
    norms = np.asarray(delta_w_norms, dtype=float)
    if len(Z) == 0:
        raise ValidationError("Z must be nonempty")
    deltas, epsilons, lams = [], [], []
    for p in Z:
        p = np.asarray(p, dtype=float)
        ev = np.linalg.eigvalsh(assemble(p, full))
        if not ev[0] > FEAS_RTOL * max(ev[-1], 0.0):
            raise FeasibilityError(f"point {p.tolist()} is outside the feasible set", lambda_min=float(ev[0]))
        eps = float(p @ norms)
        epsilons.append(eps)
        deltas.append(eps / float(ev[0]))
        lams.append(float(ev[0]))
    margin = min(lams)
    bound = inputs.epsilon_bound
    return DeltaQuantities(deltas, epsilons, bound / margin if bound else 0.0, margin)


def strong_convexity_estimate(kind, full: GramianSet, p_a, p_b, points: int = SEGMENT_POINTS) -> float:
    """Smallest Hessian eigenvalue sampled on the segment ``[p_a, p_b]``.

    A sampled estimate, not a certified constant; clamped below at 1e-14.
    """
    p_a, p_b = np.asarray(p_a, float), np.asarray(p_b, float)
    lo = math.inf
    for s in np.linspace(0.0, 1.0, points):
        h = hessian(kind, (1 - s) * p_a + s * p_b, full)
        lo = min(lo, float(np.linalg.eigvalsh(h)[0]))
    return max(lo, MU_STRONG_FLOOR)


def _safe_objective(kind, p, gset) -> float:
    try:
        return objective(kind, p, gset)
    except FeasibilityError:
        return math.inf


@dataclass
class ComparisonReport:
    """Target-versus-reduced diagnostics for one system, horizon and score.

    Bound fields are ``None`` when not applicable (``delta* >= 1`` or
    ``p_reduced`` infeasible for the full problem).  ``sandwich_slack`` is the
    smallest slack over ``Z`` of the objective sandwich; negative means
    violated.
    """

    kind: ScoreKind
    horizon: float
    p_target: np.ndarray
    p_reduced: np.ndarray
    diff_norm: float
    delta_w_norms: np.ndarray
    epsilon_T: float
    epsilon_bound: float
    phi: float
    phi_overflow: bool
    delta_star: float | None
    delta_at: list | None
    margin: float | None
    objective_gap_bound: float | None
    gamma: float | None
    mu_strong_estimate: float | None
    p_diff_bound: float | None
    reduced_feasible_in_full: bool
    sandwich_slack: float | None
    sandwich_upper_applies: bool
    inputs: BoundInputs
    target_result: ScoreResult = field(repr=False)
    reduced_result: ScoreResult = field(repr=False)

    @property
    def converged(self) -> bool:
        return self.target_result.converged and self.reduced_result.converged

    @property
    def bound_holds(self) -> bool | None:
        if self.p_diff_bound is None:
            return None
        return self.diff_norm <= self.p_diff_bound


def _objective_gap_bound(kind, d):
    if kind is ScoreKind.VCS:
        return -math.log1p(-d) if d > 0 else 0.0  # dominates log(1 + d)
    return d / (1.0 - d)  # dominates d / (1 + d)


def _sandwich_slack(kind, full, reduced, Z, d, m):
    slacks = []
    upper = d < 1
    for p in Z:
        h = objective(kind, p, full)
        h_red = _safe_objective(kind, p, reduced)
        if kind is ScoreKind.VCS:
            slacks.append(h_red - (h - m * math.log1p(d)))
            if upper:
                slacks.append(h - m * math.log1p(-d) - h_red)
        else:
            slacks.append(h_red - h / (1.0 + d))
            if upper:
                slacks.append(h / (1.0 - d) - h_red)
    return min(slacks), upper


def comparison_report(kind, canon: CanonicalSystem, T: float, options: SolverOptions | None = None,
                      method: str = "block-exp") -> ComparisonReport:
    """Solve the target and reduced problems and evaluate the comparison bounds."""
    kind = ScoreKind.parse(kind)
    options = options or SolverOptions()
    full = output_gramian_set(canon, T, method)
    reduced = reduced_gramian_set(canon, T, method)
    res_full = solve_score(kind, full, options)
    res_red = solve_score(kind, reduced, options)
    p_star, p_red = res_full.p_star, res_red.p_star
    gap = gramian_gap(full, reduced)
    inputs = bound_inputs(canon, T)
    phi_val = inputs.phi if inputs.a12_norm else phi(inputs.mu, T)
    m = canon.m

    feasible = True
    try:
        objective(kind, p_red, full)
    except FeasibilityError:
        feasible = False

    eps_T = float(max(p_star @ gap.delta_w_norms, p_red @ gap.delta_w_norms))
    report = ComparisonReport(
        kind=kind, horizon=float(T), p_target=p_star, p_reduced=p_red,
        diff_norm=float(np.linalg.norm(p_red - p_star)),
        delta_w_norms=gap.delta_w_norms, epsilon_T=eps_T,
        epsilon_bound=inputs.epsilon_bound, phi=phi_val, phi_overflow=math.isinf(phi_val),
        delta_star=None, delta_at=None, margin=None, objective_gap_bound=None, gamma=None,
        mu_strong_estimate=None, p_diff_bound=None, reduced_feasible_in_full=feasible,
        sandwich_slack=None, sandwich_upper_applies=False, inputs=inputs,
        target_result=res_full, reduced_result=res_red,
    )
    if not feasible:
        log.info("reduced optimum is infeasible for the full problem; bounds not applicable")
        return report

    Z = [p_star, p_red]
    dq = delta_quantities(full, Z, inputs, gap.delta_w_norms)
    d = dq.delta_star
    report.delta_star, report.delta_at, report.margin = d, dq.delta_at, dq.margin
    if math.isfinite(d):
        report.sandwich_slack, report.sandwich_upper_applies = _sandwich_slack(kind, full, reduced, Z, d, m)
    if kind is ScoreKind.AECS:
        report.gamma = max(objective(kind, p, full) for p in Z)
    if not d < 1:
        return report

    eps = _objective_gap_bound(kind, d)
    if kind is ScoreKind.VCS:
        eps *= m
    mu_s = strong_convexity_estimate(kind, full, p_star, p_red)
    report.objective_gap_bound = eps
    report.mu_strong_estimate = mu_s
    bound = 2.0 * math.sqrt(eps / mu_s)
    if kind is ScoreKind.AECS:
        bound *= math.sqrt(report.gamma)
    report.p_diff_bound = bound
    return report
