"""Connectivity loading, Laplacian dynamics and the cohort pipeline.

A connectivity matrix ``K`` (entry (i, j) = weight of the connection from
node i to node j) becomes dynamics through ``C' = K^T``,
``L = diag(C' 1) - C'`` and ``A = -L``.

The cohort pipeline has two stages.  Stage 1 scores every node of every
subject (all nodes targeted), averages the scores over subjects and keeps
the top m nodes.  Stage 2 compares target and reduced scores on those
nodes for each subject and aggregates mean and population std.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.io

from .core_model import SystemMatrix, TargetSpec, canonicalize, standalone
from .errors import ParseError, TCSError, ValidationError
from .gramian import output_gramian_set
from .reduction import LAPLACIAN_MU_TOL, comparison_report, log_norm
from .scores import ScoreKind, SolverOptions, solve_score
from .serialize import dumps, environment_versions, write_csv, write_text

log = logging.getLogger(__name__)

Format = Literal["dense-csv", "matrix-market"]
MATRIX_SUFFIXES = (".csv", ".mtx")

__all__ = [
    "Connectivity",
    "CohortSummary",
    "SubjectRecord",
    "load_matrix",
    "load_system",
    "build_system",
    "laplacian_mu",
    "top_m",
    "node_scores",
    "cohort_run",
    "write_cohort",
]


@dataclass(frozen=True)
class Connectivity:
    """Nonnegative n x n connection weights for one subject."""

    matrix: np.ndarray
    subject_id: str = "subject"
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        k = np.array(self.matrix, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] == 0:
            raise ValidationError(f"connectivity must be square and non-empty, got shape {k.shape}")
        bad = np.argwhere(~np.isfinite(k) | (k < 0))
        if bad.size:
            r, c = (int(v) + 1 for v in bad[0])
            raise ValidationError(f"connectivity entry ({r}, {c}) = {k[r - 1, c - 1]} is negative or non-finite")
        labels = tuple(self.labels) if len(self.labels) else tuple(f"node_{i + 1}" for i in range(k.shape[0]))
        if len(labels) != k.shape[0]:
            raise ValidationError(f"expected {k.shape[0]} labels, got {len(labels)}")
        k.setflags(write=False)
        object.__setattr__(self, "matrix", k)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _guess_format(path: Path) -> Format:
    return "matrix-market" if path.suffix.lower() == ".mtx" else "dense-csv"


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _read_csv(path: Path):
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(k, row) for k, row in enumerate(csv.reader(fh), start=1)
                if any(cell.strip() for cell in row)]
    if not rows:
        raise ParseError("file is empty", path)
    labels = None
    header_line, first = rows[0]
    if not all(_is_number(c) for c in first):
        labels = tuple(c.strip() for c in first)
        rows = rows[1:]
        if not rows:
            raise ParseError("header row but no data", path, header_line)
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for r, (line, row) in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"row has {len(row)} entries, expected {width}", path, line)
        for c, cell in enumerate(row):
            try:
                data[r, c] = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric entry {cell.strip()!r}", path, line, c + 1) from None
            if not math.isfinite(data[r, c]):
                raise ParseError(f"non-finite entry {cell.strip()!r}", path, line, c + 1)
    if data.shape[0] != data.shape[1]:
        raise ParseError(f"matrix is {data.shape[0]} x {data.shape[1]}, expected square", path)
    if labels is not None and len(labels) != width:
        raise ParseError(f"header has {len(labels)} labels for {width} columns", path, header_line)
    lines = [line for line, _ in rows]
    return data, labels, lines


def _read_mtx(path: Path):
    try:
        data = scipy.io.mmread(str(path))
    except (ValueError, OSError, IndexError) as exc:
        raise ParseError(f"invalid Matrix Market file ({exc})", path) from None
    data = np.asarray(data.toarray() if hasattr(data, "toarray") else data, dtype=float)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ParseError(f"matrix has shape {data.shape}, expected square", path)
    return data, None, None


def _sidecar_labels(path: Path, n: int):
    side = path.with_suffix(".labels")
    if not side.exists():
        return None
    labels = tuple(s.strip() for s in side.read_text(encoding="utf-8").splitlines() if s.strip())
    if len(labels) != n:
        raise ParseError(f"{len(labels)} labels for a {n}-node matrix", side)
    return labels


def _read(path, format):
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"cannot read {path}: no such file")
    fmt = format or _guess_format(path)
    if fmt == "dense-csv":
        data, labels, lines = _read_csv(path)
    elif fmt == "matrix-market":
        data, labels, lines = _read_mtx(path)
    else:
        raise ValidationError(f"unknown matrix format {fmt!r}; use 'dense-csv' or 'matrix-market'")
    labels = labels or _sidecar_labels(path, data.shape[0]) or ()
    return path, data, labels, lines


def load_matrix(path, format: Format | None = None, subject_id: str | None = None) -> Connectivity:
    """Read a nonnegative connectivity matrix.

    Dense CSV may start with a header row of labels; otherwise labels come
    from a ``<stem>.labels`` file (one per line) next to the matrix, or
    default to ``node_1..node_n``.  The format is inferred from the suffix
    (``.mtx`` is Matrix Market) unless given.
    """
    path, data, labels, lines = _read(path, format)
    neg = np.argwhere(data < 0)
    if neg.size:
        r, c = (int(v) for v in neg[0])
        line = lines[r] if lines is not None else None
        where = "" if lines is not None else f" at matrix entry ({r + 1}, {c + 1})"
        raise ParseError(f"negative connection weight {data[r, c]}{where}", path, line,
                         c + 1 if lines is not None else None)
    return Connectivity(data, subject_id or path.stem, labels)


def load_system(path, format: Format | None = None) -> SystemMatrix:
    """Read a dynamics matrix A directly (negative entries allowed)."""
    _, data, labels, _ = _read(path, format)
    return SystemMatrix(data, labels)


def build_system(conn: Connectivity) -> SystemMatrix:
    """``A = -L`` with ``L = diag(C' 1) - C'`` and ``C' = K^T``."""
    cp = conn.matrix.T
    lap = np.diag(cp.sum(axis=1)) - cp
    return SystemMatrix(-lap, conn.labels)


def laplacian_mu(system: SystemMatrix) -> tuple[float, bool]:
    """Logarithmic norm of a Laplacian system and whether it is off zero.

    ``mu(-L) = 0`` needs zero column sums as well as zero row sums, which
    directed graphs need not have; the flag is set when ``|mu| > 1e-8``.
    """
    mu = log_norm(system.entries)
    return mu, abs(mu) > LAPLACIAN_MU_TOL


def top_m(scores, m: int) -> list[int]:
    """1-based indices of the m largest scores; ties go to the lower index."""
    s = np.asarray(scores, dtype=float)
    if not 1 <= m <= s.size:
        raise ValidationError(f"m = {m} is out of range [1, {s.size}]")
    order = np.lexsort((np.arange(s.size), -s))
    return [int(i) + 1 for i in order[:m]]


def node_scores(system: SystemMatrix, T: float, kind, options: SolverOptions | None = None,
                method: str = "block-exp"):
    """All-nodes score of one system (every node targeted)."""
    gset = output_gramian_set(standalone(system.entries, system.labels), T, method)
    return solve_score(kind, gset, options)


@dataclass
class SubjectRecord:
    subject_id: str
    p_target: np.ndarray
    p_reduced: np.ndarray
    diff_norm: float
    a12_norm: float
    delta_star: float | None
    p_diff_bound: float | None
    reduced_feasible_in_full: bool
    mu: float
    mu_flagged: bool


@dataclass
class CohortSummary:
    per_subject: list
    mean_diff: float
    std_diff: float
    mean_a12: float
    std_a12: float
    target_indices: list
    ranking_basis: str
    horizon: float
    m: int
    kind: ScoreKind
    labels: tuple
    subject_ids: list
    node_scores: np.ndarray = field(repr=False)
    failures: list = field(default_factory=list)
    options: SolverOptions = field(default_factory=SolverOptions)
    method: str = "block-exp"

    @property
    def n_failed(self) -> int:
        return len(self.failures)


def _population_stats(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    return float(np.mean(v)), float(np.std(v))


def _stage1(args):
    sid, system, T, kind, options, method = args
    try:
        res = node_scores(system, T, kind, options, method)
    except TCSError as exc:
        return sid, None, f"{type(exc).__name__}: {exc}"
    if not res.converged:
        return sid, None, f"all-nodes {kind.value} solve did not converge in {res.iterations} iterations"
    return sid, res.p_star, None


def _stage2(args):
    sid, system, targets, T, kind, options, method = args
    try:
        canon = canonicalize(system, TargetSpec(tuple(targets)))
        rep = comparison_report(kind, canon, T, options, method)
    except TCSError as exc:
        return sid, None, f"{type(exc).__name__}: {exc}"
    if not rep.converged:
        return sid, None, "target or reduced solve did not converge"
    mu, flagged = laplacian_mu(system)
    rec = SubjectRecord(
        subject_id=sid, p_target=rep.p_target, p_reduced=rep.p_reduced, diff_norm=rep.diff_norm,
        a12_norm=rep.inputs.a12_norm, delta_star=rep.delta_star, p_diff_bound=rep.p_diff_bound,
        reduced_feasible_in_full=rep.reduced_feasible_in_full, mu=mu, mu_flagged=flagged,
    )
    return sid, rec, None


def _map(fn, tasks, jobs):
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))  # map keeps submission order


def _load_cohort(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"cannot read cohort directory {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in MATRIX_SUFFIXES)
    if not files:
        raise ValidationError(f"no .csv or .mtx matrices in {directory}")
    conns = [load_matrix(f) for f in files]
    n, labels = conns[0].n, conns[0].labels
    for f, c in zip(files, conns):
        if c.n != n:
            raise ValidationError(f"{f} has {c.n} nodes, expected {n} (from {files[0].name})")
        if c.labels != labels:
            raise ValidationError(f"{f} has node labels that differ from {files[0].name}")
    return conns


def cohort_run(source, T: float, m: int, kind, options: SolverOptions | None = None,
               jobs: int | None = 1, ranking: Literal["score", "degree"] = "score",
               method: str = "block-exp") -> CohortSummary:
    """Two-stage cohort pipeline over a directory (or a list of ``Connectivity``).

    Subjects are processed in file-name order.  ``ranking="degree"`` ranks
    nodes by mean total strength (in plus out weight) instead of the
    all-nodes score.  Subjects whose solves fail or do not converge are
    excluded from the aggregates and listed in ``failures``.
    """
    kind = ScoreKind.parse(kind)
    options = options or SolverOptions()
    conns = list(source) if not isinstance(source, (str, os.PathLike)) else _load_cohort(source)
    if not conns:
        raise ValidationError("cohort is empty")
    n, labels = conns[0].n, conns[0].labels
    if not 1 <= m <= n:
        raise ValidationError(f"m = {m} is out of range [1, {n}]")
    ids = [c.subject_id for c in conns]
    systems = {c.subject_id: build_system(c) for c in conns}
    failures = []

    if ranking == "score":
        out = _map(_stage1, [(sid, systems[sid], T, kind, options, method) for sid in ids], jobs)
        scores = np.full((len(ids), n), np.nan)
        for k, (sid, p, err) in enumerate(out):
            if err is None:
                scores[k] = p
            else:
                failures.append({"subject_id": sid, "stage": "ranking", "error": err})
        ok = ~np.isnan(scores[:, 0])
        if not ok.any():
            raise ValidationError("every subject failed the all-nodes scoring stage")
        mean_scores = scores[ok].mean(axis=0)
        basis = f"mean-{kind.value.upper()}"
    elif ranking == "degree":
        scores = np.array([c.matrix.sum(axis=0) + c.matrix.sum(axis=1) for c in conns])
        ok = np.ones(len(ids), dtype=bool)
        mean_scores = scores.mean(axis=0)
        basis = "degree"
    else:
        raise ValidationError(f"unknown ranking {ranking!r}; use 'score' or 'degree'")
    targets = top_m(mean_scores, m)

    tasks = [(sid, systems[sid], targets, T, kind, options, method)
             for sid, good in zip(ids, ok) if good]
    records = []
    for sid, rec, err in _map(_stage2, tasks, jobs):
        if err is None:
            records.append(rec)
        else:
            failures.append({"subject_id": sid, "stage": "comparison", "error": err})
    if failures:
        log.warning("%d of %d subjects failed and are excluded", len(failures), len(ids))
    mean_diff, std_diff = _population_stats([r.diff_norm for r in records])
    mean_a12, std_a12 = _population_stats([r.a12_norm for r in records])
    return CohortSummary(
        per_subject=records, mean_diff=mean_diff, std_diff=std_diff, mean_a12=mean_a12,
        std_a12=std_a12, target_indices=targets, ranking_basis=basis, horizon=float(T), m=m,
        kind=kind, labels=labels, subject_ids=ids, node_scores=scores, failures=failures,
        options=options, method=method,
    )


def summary_dict(summary: CohortSummary) -> dict:
    labels = summary.labels
    return {
        "horizon": summary.horizon,
        "m": summary.m,
        "kind": summary.kind.value,
        "ranking_basis": summary.ranking_basis,
        "ranking_note": "stage 1 scores every node of each subject with the same horizon, "
                        "solver options and Gramian method as stage 2",
        "target_indices": summary.target_indices,
        "target_labels": [labels[i - 1] for i in summary.target_indices],
        "n_subjects": len(summary.subject_ids),
        "n_included": len(summary.per_subject),
        "n_failed": summary.n_failed,
        "n_mu_flagged": sum(r.mu_flagged for r in summary.per_subject),
        "mean_diff": summary.mean_diff,
        "std_diff": summary.std_diff,
        "mean_a12": summary.mean_a12,
        "std_a12": summary.std_a12,
        "per_subject": summary.per_subject,
        "failures": summary.failures,
        "options": summary.options,
        "method": summary.method,
    }


def write_cohort(summary: CohortSummary, out, format: Literal["json", "csv"] = "json",
                 meta: dict | None = None) -> list[Path]:
    """Write the summary; returns the files written.

    ``json``: one file at ``out``.  ``csv``: ``<out>_subjects.csv`` (one row
    per subject), ``<out>_summary.csv`` (one row), and subject x node tables
    ``<out>_scores_target.csv``, ``<out>_scores_reduced.csv`` (target nodes)
    and, for score ranking, ``<out>_scores_all_nodes.csv`` for box plots.
    """
    out = Path(out)
    if format == "json":
        doc = dict(meta or {})
        doc["versions"] = environment_versions()
        doc["result"] = summary_dict(summary)
        write_text(dumps(doc), out)
        return [out]
    if format != "csv":
        raise ValidationError(f"unknown output format {format!r}")
    base = out.with_suffix("") if out.suffix else out
    paths = []

    def path(tag):
        p = base.parent / f"{base.name}_{tag}.csv"
        paths.append(p)
        return p

    labels = summary.labels
    tl = [labels[i - 1] for i in summary.target_indices]
    write_csv(
        [[r.subject_id, r.diff_norm, r.a12_norm, r.delta_star, r.p_diff_bound,
          int(r.reduced_feasible_in_full), r.mu, int(r.mu_flagged)] for r in summary.per_subject],
        ["subject_id", "diff_norm", "a12_norm", "delta_star", "p_diff_bound",
         "reduced_feasible_in_full", "mu", "mu_flagged"],
        path("subjects"),
    )
    write_csv(
        [[summary.horizon, summary.m, summary.kind.value, summary.ranking_basis,
          " ".join(map(str, summary.target_indices)), len(summary.per_subject), summary.n_failed,
          summary.mean_diff, summary.std_diff, summary.mean_a12, summary.std_a12]],
        ["T", "m", "kind", "ranking_basis", "target_indices", "n_included", "n_failed",
         "mean_diff", "std_diff", "mean_a12", "std_a12"],
        path("summary"),
    )
    for tag, attr in (("scores_target", "p_target"), ("scores_reduced", "p_reduced")):
        write_csv([[r.subject_id, *getattr(r, attr).tolist()] for r in summary.per_subject],
                  ["subject_id", *tl], path(tag))
    if summary.ranking_basis != "degree":
        write_csv([[sid, *row.tolist()] for sid, row in zip(summary.subject_ids, summary.node_scores)],
                  ["subject_id", *labels], path("scores_all_nodes"))
    return paths
