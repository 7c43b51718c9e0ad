"""Balanced panel data model, CSV ingestion and treatment-timing bookkeeping."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from os import PathLike

import numpy as np
import pandas as pd

from .errors import (
    DuplicateObservation,
    InconsistentAdoption,
    ParseError,
    UnbalancedPanel,
)

NEVER_TREATED = math.inf
NEVER_SENTINELS = frozenset({"", "inf", "Inf", "never"})

DEFAULT_COLUMNS = {"unit": "unit", "time": "time", "outcome": "outcome", "cohort": "cohort"}

_INT_RE = re.compile(r"^[+-]?\d+$")


def is_never(g) -> bool:
    return g is None or (isinstance(g, float) and math.isinf(g))


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Immutable balanced panel in unit-major long order.

    Parameters
    ----------
    units : tuple
        Unit labels, one per row of ``outcome``.
    periods : tuple
        Raw period labels in ascending order. Internally period ``j`` of the
        tuple has time index ``j + 1``.
    outcome : ndarray, shape (N, T)
        Outcome for every (unit, period) cell.
    adoption : ndarray, shape (N,)
        Adoption time index in ``1..T`` per unit, ``inf`` for never treated.
    """

    units: tuple
    periods: tuple
    outcome: np.ndarray
    adoption: np.ndarray

    def __post_init__(self):
        y = np.array(self.outcome, dtype=float)
        g = np.array(self.adoption, dtype=float)
        n, t = len(self.units), len(self.periods)
        if y.shape != (n, t):
            raise UnbalancedPanel(f"outcome has shape {y.shape}, expected {(n, t)}")
        if g.shape != (n,):
            raise InconsistentAdoption("need exactly one adoption time per unit")
        finite = np.isfinite(g)
        if np.any(g[finite] != np.round(g[finite])) or np.any((g[finite] < 1) | (g[finite] > t)):
            raise InconsistentAdoption("adoption times must be period indices in 1..T")
        if np.any(np.isnan(g)) or np.any(g == -np.inf):
            raise InconsistentAdoption("adoption time cannot be NaN")
        if len(set(self.units)) != n:
            raise DuplicateObservation("unit labels must be unique")
        y.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "periods", tuple(self.periods))
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "adoption", g)

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.units == other.units
            and self.periods == other.periods
            and np.array_equal(self.outcome, other.outcome)
            and np.array_equal(self.adoption, other.adoption)
        )

    __hash__ = None

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def n_obs(self) -> int:
        return self.n_units * self.n_periods

    @property
    def y(self) -> np.ndarray:
        """Outcome flattened in row order."""
        return self.outcome.reshape(-1)

    @property
    def unit_codes(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_units), self.n_periods)

    @property
    def time_codes(self) -> np.ndarray:
        """0-based period codes per row."""
        return np.tile(np.arange(self.n_periods), self.n_units)

    @property
    def row_adoption(self) -> np.ndarray:
        return np.repeat(self.adoption, self.n_periods)

    @property
    def relative_time(self) -> np.ndarray:
        """``t - g`` per row; NaN for never-treated units."""
        g = self.row_adoption
        t = self.time_codes + 1.0
        with np.errstate(invalid="ignore"):
            rel = t - g
        rel[~np.isfinite(g)] = np.nan
        return rel

    def treatment_matrix(self) -> np.ndarray:
        t = np.arange(1, self.n_periods + 1)
        return (t[None, :] >= self.adoption[:, None]).astype(float)

    def period_label(self, index):
        """Raw label for a 1-based period index; ``inf`` passes through."""
        if is_never(index):
            return NEVER_TREATED
        return self.periods[int(index) - 1]

    def period_index(self, label) -> float:
        """Inverse of :meth:`period_label`."""
        if is_never(label):
            return NEVER_TREATED
        for j, p in enumerate(self.periods):
            if p == label:
                return float(j + 1)
        raise KeyError(label)

    def to_frame(self, columns: dict | None = None) -> pd.DataFrame:
        cols = {**DEFAULT_COLUMNS, **(columns or {})}
        coh = [self.period_label(g) for g in self.adoption]
        return pd.DataFrame(
            {
                cols["unit"]: np.repeat(np.array(self.units, dtype=object), self.n_periods),
                cols["time"]: np.tile(np.array(self.periods, dtype=object), self.n_units),
                cols["outcome"]: self.y,
                cols["cohort"]: np.repeat(np.array(coh, dtype=object), self.n_periods),
            }
        )


@dataclass(frozen=True)
class CohortSummary:
    """Adoption cohorts as ``(raw adoption label, unit count)``; never treated last."""

    cohorts: tuple
    has_never_treated: bool

    @property
    def treated(self) -> tuple:
        return tuple(c for c in self.cohorts if not is_never(c[0]))

    def to_dict(self) -> dict:
        return {
            "cohorts": [
                {"cohort": "inf" if is_never(g) else g, "units": n} for g, n in self.cohorts
            ],
            "has_never_treated": self.has_never_treated,
        }


def treatment_indicator(d: PanelDataset, unit: int, period: int) -> int:
    """``1(t >= g_i)`` for the unit at 0-based position ``unit`` and 1-based ``period``."""
    if not 0 <= unit < d.n_units:
        raise IndexError(f"unit position {unit} out of range 0..{d.n_units - 1}")
    if not 1 <= period <= d.n_periods:
        raise IndexError(f"period {period} out of range 1..{d.n_periods}")
    return int(period >= d.adoption[unit])


def cohort_summary(d: PanelDataset) -> CohortSummary:
    values, counts = np.unique(d.adoption, return_counts=True)
    cohorts = tuple((d.period_label(g), int(n)) for g, n in zip(values, counts))
    return CohortSummary(cohorts=cohorts, has_never_treated=bool(np.isinf(values).any()))


def _to_float(v: str):
    try:
        return float(v)
    except ValueError:
        return None


def _coerce_labels(raw: pd.Series, what: str):
    """Numeric labels become int (or float); anything else stays str."""
    s = raw.astype(str).str.strip()
    if s.map(lambda v: bool(_INT_RE.match(v))).all():
        return s.map(int)
    num = s.map(_to_float)
    if num.isna().any():
        if what == "time":
            raise ParseError(f"non-numeric time label {s[num.isna()].iloc[0]!r}")
        return s
    return num


def from_frame(df: pd.DataFrame, columns: dict | None = None) -> PanelDataset:
    """Validate a long-format frame and build a :class:`PanelDataset`."""
    cols = {**DEFAULT_COLUMNS, **(columns or {})}
    missing = [c for c in cols.values() if c not in df.columns]
    if missing:
        raise ParseError(f"missing column(s): {', '.join(missing)}")
    if len(df) == 0:
        raise UnbalancedPanel("no observations")

    units = _coerce_labels(df[cols["unit"]], "unit")
    times = _coerce_labels(df[cols["time"]], "time")
    y = np.empty(len(df))
    for j, raw in enumerate(df[cols["outcome"]]):
        try:
            y[j] = float(str(raw).strip())  # exact round trip, unlike pandas' fast parser
        except ValueError:
            raise ParseError(f"non-numeric outcome value {raw!r}") from None
    if not np.isfinite(y).all():
        raise ParseError("outcome values must be finite")

    periods = tuple(sorted(times.unique().tolist()))
    unit_labels = tuple(sorted(units.unique().tolist()))
    t_pos = {p: j for j, p in enumerate(periods)}
    u_pos = {u: i for i, u in enumerate(unit_labels)}
    ui = units.map(u_pos).to_numpy()
    ti = times.map(t_pos).to_numpy()

    flat = ui * len(periods) + ti
    uniq, counts = np.unique(flat, return_counts=True)
    if (counts > 1).any():
        cell = uniq[counts > 1][0]
        u, t = divmod(int(cell), len(periods))
        raise DuplicateObservation(f"duplicate observation for unit {unit_labels[u]!r}, period {periods[t]!r}")
    if len(uniq) != len(unit_labels) * len(periods):
        have = np.zeros(len(unit_labels) * len(periods), dtype=bool)
        have[uniq] = True
        u, t = divmod(int(np.flatnonzero(~have)[0]), len(periods))
        raise UnbalancedPanel(f"missing observation for unit {unit_labels[u]!r}, period {periods[t]!r}")

    outcome = np.empty(len(unit_labels) * len(periods))
    outcome[flat] = y

    adoption = np.full(len(unit_labels), np.nan)
    for u, raw in zip(ui, df[cols["cohort"]]):
        g = _parse_cohort(raw, t_pos)
        if np.isnan(adoption[u]):
            adoption[u] = g
        elif adoption[u] != g:
            raise InconsistentAdoption(f"unit {unit_labels[u]!r} has more than one adoption time")

    return PanelDataset(
        units=unit_labels,
        periods=periods,
        outcome=outcome.reshape(len(unit_labels), len(periods)),
        adoption=adoption,
    )


def _parse_cohort(raw, t_pos: dict) -> float:
    if raw is None or (isinstance(raw, float) and math.isnan(raw)):
        return NEVER_TREATED
    text = str(raw).strip()
    if text in NEVER_SENTINELS:
        return NEVER_TREATED
    try:
        value = int(text) if _INT_RE.match(text) else float(text)
    except ValueError:
        raise ParseError(f"cannot parse cohort value {text!r}") from None
    if isinstance(value, float) and math.isinf(value) and value > 0:
        return NEVER_TREATED
    if value in t_pos:
        return float(t_pos[value] + 1)
    if value == 0:
        return NEVER_TREATED
    raise ParseError(f"cohort value {text!r} is not a period label")


def load_csv(path: str | PathLike, columns: dict | None = None) -> PanelDataset:
    """Read a long-format CSV (header required) into a validated panel.

    ``columns`` maps the roles ``unit``, ``time``, ``outcome``, ``cohort`` to
    header names. Never-treated units carry an empty cohort, ``inf``, ``Inf``,
    ``never`` or ``0`` when 0 is not itself a period label.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ParseError(str(exc)) from exc
    return from_frame(df, columns)


def write_csv(d: PanelDataset, path: str | PathLike, columns: dict | None = None) -> None:
    cols = {**DEFAULT_COLUMNS, **(columns or {})}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([cols["unit"], cols["time"], cols["outcome"], cols["cohort"]])
        for i, u in enumerate(d.units):
            g = d.adoption[i]
            coh = "inf" if math.isinf(g) else d.period_label(g)
            for j, p in enumerate(d.periods):
                w.writerow([u, p, repr(float(d.outcome[i, j])), coh])
