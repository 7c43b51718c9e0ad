"""Labeled regressor matrices for the static, event-study, saturated and
interacted (common + cohort deviation) specifications.

Unit and period fixed effects are never materialized; each design carries the
group codes and the solver absorbs them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDesign, NoReferencePeriod, UnknownCohort
from .panel import PanelDataset, is_never

REFERENCE_PERIOD = -1
DEFAULT_COLLINEAR_TOL = 1e-9

_KIND_ORDER = {"treat": 0, "es": 1, "sat": 2, "dev": 3}


@dataclass(frozen=True, order=False)
class Column:
    """Role of one regressor column.

    ``kind`` is ``"treat"`` (static treatment), ``"es"`` (event time ``s``),
    ``"sat"`` (cohort ``cohort`` x event time ``s``) or ``"dev"`` (deviation of
    ``cohort`` from the reference cohort at event time ``s``). ``cohort`` is
    the raw adoption-period label.
    """

    kind: str
    cohort: object = None
    s: int | None = None

    def __post_init__(self):
        if self.kind not in _KIND_ORDER:
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.s == REFERENCE_PERIOD:
            raise ValueError("relative period -1 is the omitted reference")

    @property
    def label(self) -> str:
        if self.kind == "treat":
            return "treat"
        if self.kind == "es":
            return f"es::s={self.s}"
        return f"{self.kind}::g={self.cohort}::s={self.s}"

    def sort_key(self):
        c = self.cohort if self.cohort is not None else 0
        return (_KIND_ORDER[self.kind], c, self.s if self.s is not None else 0)

    @classmethod
    def from_label(cls, label: str) -> "Column":
        if label == "treat":
            return cls("treat")
        parts = dict(p.split("=", 1) for p in label.split("::")[1:])
        kind = label.split("::", 1)[0]
        cohort = parts.get("g")
        if cohort is not None:
            try:
                cohort = int(cohort)
            except ValueError:
                cohort = float(cohort)
        return cls(kind, cohort, int(parts["s"]))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Regressors for one specification plus absorbed fixed-effect groups."""

    X: np.ndarray
    columns: tuple
    fe_unit: np.ndarray
    fe_time: np.ndarray
    spec: str
    reference_cohort: object = None
    dropped: tuple = field(default=())

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_cols(self) -> int:
        return self.X.shape[1]

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.columns]

    @property
    def row_index(self) -> np.ndarray:
        """(unit position, 1-based period) per row."""
        return np.column_stack([self.fe_unit, self.fe_time + 1])

    def select(self, keep) -> "DesignMatrix":
        keep = np.asarray(keep, dtype=bool)
        dropped = self.dropped + tuple(c for c, k in zip(self.columns, keep) if not k)
        return DesignMatrix(
            X=self.X[:, keep],
            columns=tuple(c for c, k in zip(self.columns, keep) if k),
            fe_unit=self.fe_unit,
            fe_time=self.fe_time,
            spec=self.spec,
            reference_cohort=self.reference_cohort,
            dropped=dropped,
        )


def _assemble(d: PanelDataset, cols: list, spec: str, reference=None) -> DesignMatrix:
    order = sorted(range(len(cols)), key=lambda j: cols[j][0].sort_key())
    X = np.column_stack([cols[j][1] for j in order]) if cols else np.zeros((d.n_obs, 0))
    X = X.astype(float)
    X.setflags(write=False)
    return DesignMatrix(
        X=X,
        columns=tuple(cols[j][0] for j in order),
        fe_unit=d.unit_codes,
        fe_time=d.time_codes,
        spec=spec,
        reference_cohort=reference,
    )


def _treated_cohorts(d: PanelDataset) -> list[float]:
    g = np.unique(d.adoption)
    treated = [float(x) for x in g if np.isfinite(x)]
    if not treated:
        raise DegenerateDesign("no treated units")
    if treated[0] == 1:
        raise NoReferencePeriod(
            f"cohort adopting in the first period ({d.period_label(1)!r}) has no pre-period"
        )
    return treated


def _realized(rel: np.ndarray) -> list[int]:
    vals = np.unique(rel[np.isfinite(rel)]).astype(int)
    return [int(s) for s in vals if s != REFERENCE_PERIOD]


def build_static(d: PanelDataset) -> DesignMatrix:
    w = d.treatment_matrix().reshape(-1)
    if w.min() == w.max():
        raise DegenerateDesign("treatment indicator is constant (all treated or all untreated)")
    return _assemble(d, [(Column("treat"), w)], "static")


def build_event_study(d: PanelDataset) -> DesignMatrix:
    _treated_cohorts(d)
    rel = d.relative_time
    cols = [(Column("es", s=s), rel == s) for s in _realized(rel)]
    return _assemble(d, cols, "event")


def _cohort_cells(d: PanelDataset):
    """Yield (raw cohort label, s, indicator) for every realized (c, s) cell."""
    rel = d.relative_time
    g_row = d.row_adoption
    for g in _treated_cohorts(d):
        in_c = g_row == g
        for s in _realized(np.where(in_c, rel, np.nan)):
            yield d.period_label(g), s, in_c & (rel == s)


def realized_cells(d: PanelDataset) -> list[tuple]:
    """(raw cohort label, s) for every cohort x event-time cell in the data."""
    return [(c, s) for c, s, _ in _cohort_cells(d)]


def build_saturated(d: PanelDataset) -> DesignMatrix:
    cols = [(Column("sat", c, s), x) for c, s, x in _cohort_cells(d)]
    return _assemble(d, cols, "saturated")


def build_interacted(d: PanelDataset, reference_cohort=None) -> DesignMatrix:
    """Common event-time columns plus deviations of every non-reference cohort.

    ``reference_cohort`` is a raw adoption label; the earliest cohort by
    default. Deviation columns exist for each (c, s) cell realized by a
    non-reference cohort, so the column span equals the saturated design's.
    Cells whose s is not realized by the reference cohort duplicate part of an
    event-time column; :func:`drop_collinear` removes the redundancy.
    """
    treated = _treated_cohorts(d)
    if reference_cohort is None:
        ref = d.period_label(treated[0])
    else:
        if is_never(reference_cohort):
            raise UnknownCohort("the never-treated group cannot be the reference cohort")
        labels = [d.period_label(g) for g in treated]
        if reference_cohort not in labels:
            raise UnknownCohort(f"cohort {reference_cohort!r} not among treated cohorts {labels}")
        ref = reference_cohort
    rel = d.relative_time
    cols = [(Column("es", s=s), rel == s) for s in _realized(rel)]
    cols += [(Column("dev", c, s), x) for c, s, x in _cohort_cells(d) if c != ref]
    return _assemble(d, cols, "interacted", reference=ref)


def drop_collinear(X: DesignMatrix, tol: float = DEFAULT_COLLINEAR_TOL):
    """Drop columns that are linearly dependent after two-way demeaning.

    Columns are scanned in reporting order, so earlier columns win. Each
    demeaned column is orthogonalized (twice, for stability) against the kept
    ones; it is kept when the remaining norm exceeds ``tol`` times the column's
    raw norm. This is an in-order incremental QR factorization.

    Returns
    -------
    (DesignMatrix, list of Column)
        The reduced design and the dropped column roles.
    """
    from .fe_solver import demean_two_way

    if X.n_cols == 0:
        return X, []
    Xt = demean_two_way(X.X, X.fe_unit, X.fe_time)
    scale = np.linalg.norm(X.X, axis=0)
    q = np.zeros((X.n_rows, X.n_cols))
    rank = 0
    keep = np.zeros(X.n_cols, dtype=bool)
    for j in range(X.n_cols):
        v = Xt[:, j].copy()
        basis = q[:, :rank]
        for _ in range(2):
            v -= basis @ (basis.T @ v)
        norm = np.linalg.norm(v)
        if scale[j] > 0 and norm > tol * scale[j]:
            keep[j] = True
            q[:, rank] = v / norm
            rank += 1
    dropped = [c for c, k in zip(X.columns, keep) if not k]
    return X.select(keep), dropped
