"""The two TWFE diagnostics: a test for event-study dynamics and a test for
across-cohort heterogeneity in dynamic effects."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .design import (
    Column,
    build_event_study,
    build_interacted,
    build_saturated,
    build_static,
    drop_collinear,
    realized_cells,
)
from .errors import NeedTwoCohorts, NotEnoughPostPeriods
from .fe_solver import FitResult, fit
from .inference import Restriction, WaldResult, attach_vcov, wald_test
from .panel import PanelDataset, cohort_summary

Q_AGAINST_TAU = "q_against_tau"
ADJACENT_EQUALITY = "adjacent"
DYNAMICS_MODES = (Q_AGAINST_TAU, ADJACENT_EQUALITY)

ALL_PERIODS = "all"
POST_ONLY = "post"
HETEROGENEITY_SCOPES = (ALL_PERIODS, POST_ONLY)


DEFAULT_DOF = "hotelling"


def fit_robust(d: PanelDataset, X, cluster=None, small_sample: str = "nested") -> tuple[FitResult, list]:
    """Drop collinear columns, fit, attach CRV1 covariance."""
    X, dropped = drop_collinear(X)
    res = fit(d, X)
    attach_vcov(res, X, cluster, small_sample)
    return res, dropped


@dataclass(frozen=True)
class DynamicsTestReport:
    tau_hat: float
    gamma_hat: dict
    wald: WaldResult
    mode: str
    dropped: tuple = ()

    def to_dict(self) -> dict:
        return {
            "tau_hat": self.tau_hat,
            "gamma_hat": {f"es::s={s}": v for s, v in self.gamma_hat.items()},
            "mode": self.mode,
            "wald": self.wald.to_dict(),
            "dropped": [c.label for c in self.dropped],
        }


@dataclass(frozen=True)
class CohortHeterogeneityReport:
    common: dict
    deviations: dict
    reconstructed: dict
    wald: WaldResult
    reference_cohort: object
    scope: str
    dropped: tuple = ()

    def to_dict(self) -> dict:
        return {
            "reference_cohort": self.reference_cohort,
            "scope": self.scope,
            "common": {Column("es", s=s).label: v for s, v in self.common.items()},
            "deviations": {Column("dev", c, s).label: v for (c, s), v in self.deviations.items()},
            "reconstructed": {Column("sat", c, s).label: v for (c, s), v in self.reconstructed.items()},
            "wald": self.wald.to_dict(),
            "dropped": [c.label for c in self.dropped],
        }


def test_dynamics(
    d: PanelDataset,
    mode: str = Q_AGAINST_TAU,
    dof: str = DEFAULT_DOF,
    cluster=None,
    small_sample: str = "nested",
) -> DynamicsTestReport:
    """Test whether post-treatment event-study coefficients are all equal.

    ``q_against_tau`` tests every post coefficient against the static TWFE
    estimate, held fixed as the constant vector ``q``. ``adjacent`` tests
    equality of neighbouring post coefficients, which does not treat an
    estimate as known and is the better calibrated of the two.
    """
    if mode not in DYNAMICS_MODES:
        raise ValueError(f"mode must be one of {DYNAMICS_MODES}")
    tau_hat = fit(d, build_static(d)).coef("treat")
    res, dropped = fit_robust(d, build_event_study(d), cluster, small_sample)

    post = sorted((c.s, j) for j, c in enumerate(res.columns) if c.s >= 0)
    if len(post) < 2:
        raise NotEnoughPostPeriods(f"need at least 2 post-treatment coefficients, have {len(post)}")
    k = res.coefficients.size
    idx = [j for _, j in post]
    if mode == Q_AGAINST_TAU:
        R = np.zeros((len(idx), k))
        R[np.arange(len(idx)), idx] = 1.0
        q = np.full(len(idx), tau_hat)
    else:
        R = np.zeros((len(idx) - 1, k))
        for i in range(len(idx) - 1):
            R[i, idx[i]] = 1.0
            R[i, idx[i + 1]] = -1.0
        q = np.zeros(len(idx) - 1)
    wald = wald_test(res, Restriction(R, q), dof=dof)
    gamma = {s: float(res.coefficients[j]) for s, j in post}
    return DynamicsTestReport(tau_hat, gamma, wald, mode, tuple(dropped))


def test_cohort_heterogeneity(
    d: PanelDataset,
    reference_cohort=None,
    scope: str = ALL_PERIODS,
    dof: str = DEFAULT_DOF,
    cluster=None,
    small_sample: str = "nested",
) -> CohortHeterogeneityReport:
    """Joint test that every cohort deviation from the common event study is zero.

    Fits common event-time coefficients plus cohort deviations, tests the
    deviations (``scope="post"`` keeps only ``s >= 0``), and rebuilds each
    cohort's event study as common + deviation.
    """
    if scope not in HETEROGENEITY_SCOPES:
        raise ValueError(f"scope must be one of {HETEROGENEITY_SCOPES}")
    if len(cohort_summary(d).treated) < 2:
        raise NeedTwoCohorts("the heterogeneity test needs at least two treated cohorts")
    X = build_interacted(d, reference_cohort)
    res, dropped = fit_robust(d, X, cluster, small_sample)

    common, devs, tested = {}, {}, []
    for j, c in enumerate(res.columns):
        b = float(res.coefficients[j])
        if c.kind == "es":
            common[c.s] = b
        else:
            devs[(c.cohort, c.s)] = b
            if scope == ALL_PERIODS or c.s >= 0:
                tested.append(j)
    if not tested:
        raise NeedTwoCohorts("no cohort deviations left to test")

    R = np.zeros((len(tested), res.coefficients.size))
    R[np.arange(len(tested)), tested] = 1.0
    wald = wald_test(res, Restriction(R, np.zeros(len(tested))), dof=dof)

    recon = {cell: est for cell, (est, _) in reconstruct_cohort_effects(d, res).items()}
    return CohortHeterogeneityReport(common, devs, recon, wald, X.reference_cohort, scope, tuple(dropped))


def reconstruct_cohort_effects(d: PanelDataset, res: FitResult) -> dict:
    """Cohort event studies from an interacted fit: ``{(c, s): (estimate, se)}``.

    Each cell is the common coefficient plus the cohort's deviation; cells
    without a deviation column (reference cohort, dropped cells) take the
    common coefficient alone. ``se`` is None when no covariance is attached.
    """
    index = {(c.kind, c.cohort, c.s): j for j, c in enumerate(res.columns)}
    out = {}
    for c, s in realized_cells(d):
        j = index.get(("es", None, s))
        if j is None:
            continue
        w = np.zeros(res.coefficients.size)
        w[j] = 1.0
        k = index.get(("dev", c, s))
        if k is not None:
            w[k] = 1.0
        se = None if res.vcov is None else float(np.sqrt(max(w @ res.vcov @ w, 0.0)))
        out[(c, s)] = (float(w @ res.coefficients), se)
    return out


def cohort_event_study(d: PanelDataset, cluster=None) -> pd.DataFrame:
    """Cohort x event-time estimates with CRV1 standard errors, one row per cell."""
    res, _ = fit_robust(d, build_saturated(d), cluster)
    se = res.bse
    rows = [
        {"cohort": c.cohort, "s": c.s, "label": c.label, "estimate": float(b), "se": float(e)}
        for c, b, e in zip(res.columns, res.coefficients, se)
    ]
    return pd.DataFrame(rows, columns=["cohort", "s", "label", "estimate", "se"])


# keep pytest from collecting the public API as tests
test_dynamics.__test__ = False
test_cohort_heterogeneity.__test__ = False
