"""Cluster-robust covariance and joint Wald tests of linear restrictions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy import special

from .design import DesignMatrix
from .errors import (
    AlignmentError,
    RedundantRestrictions,
    SingularRestrictionCovariance,
    TooFewClusters,
    TooFewDegreesOfFreedom,
)
from .fe_solver import FitResult, demean_two_way

# |R b - q| below this (relative) counts as the null holding exactly
ZERO_DISCREPANCY_RTOL = 1e-10
SINGULAR_RTOL = 1e-12


def f_sf(x: float, dfn: float, dfd: float) -> float:
    """Upper tail of the F(dfn, dfd) distribution."""
    if x <= 0:
        return 1.0
    return float(special.fdtrc(dfn, dfd, x))


def chi2_sf(x: float, df: float) -> float:
    """Upper tail of the chi-squared(df) distribution."""
    if x <= 0:
        return 1.0
    return float(special.chdtrc(df, x))


def _nested_levels(fe, codes) -> int:
    """Number of levels of ``fe`` if every level sits inside one cluster, else 0."""
    pairs = np.unique(np.column_stack([fe, codes]), axis=0)
    levels = np.unique(fe).size
    return levels if pairs.shape[0] == levels else 0


def crv1_vcov(fit: FitResult, X: DesignMatrix, cluster=None, small_sample: str = "nested") -> np.ndarray:
    """CRV1 sandwich covariance of the coefficients in ``fit``.

    ``(X'X)^-1 [sum_g X_g' u_g u_g' X_g] (X'X)^-1`` on the demeaned design,
    scaled by ``G/(G-1) * (n-1)/(n-k)``. Clusters default to units.

    With ``small_sample="full"``, ``k`` is ``fit.k_params``. With the default
    ``"nested"``, fixed effects whose groups are nested in clusters are left
    out of ``k``; otherwise the factor tends to ``T/(T-1)`` rather than 1 as the
    number of units grows and the test becomes conservative.
    """
    if small_sample not in ("nested", "full"):
        raise ValueError(f"unknown small-sample rule {small_sample!r}")
    if X.n_rows != fit.n_obs or X.labels != list(fit.labels):
        raise AlignmentError("design does not match the fitted model")
    cluster = X.fe_unit if cluster is None else np.asarray(cluster)
    if cluster.shape != (fit.n_obs,):
        raise AlignmentError(f"cluster ids have shape {cluster.shape}, expected ({fit.n_obs},)")
    _, codes = np.unique(cluster, return_inverse=True)
    n_groups = int(codes.max()) + 1
    if n_groups < 2:
        raise TooFewClusters("cluster-robust variance needs at least two clusters")
    n, k = fit.n_obs, fit.k_params
    if n - k <= 0:
        raise TooFewDegreesOfFreedom(f"n - k = {n - k}; residuals are identically zero")
    if small_sample == "nested":
        k -= _nested_levels(X.fe_unit, codes) + _nested_levels(X.fe_time, codes)
    if n - k <= 0:
        raise TooFewDegreesOfFreedom(f"n - k = {n - k}; no residual degrees of freedom")

    xt = fit.xtilde if fit.xtilde is not None else demean_two_way(X.X, X.fe_unit, X.fe_time)
    r = fit.r_factor if fit.r_factor is not None else scipy.linalg.qr(xt, mode="r")[0][: X.n_cols]
    rinv = scipy.linalg.solve_triangular(r, np.eye(r.shape[0]))
    bread = rinv @ rinv.T

    gsum = scipy.sparse.csr_matrix((np.ones(n), (codes, np.arange(n))), shape=(n_groups, n))
    scores = gsum @ (xt * fit.residuals[:, None])
    meat = scores.T @ scores

    factor = n_groups / (n_groups - 1) * (n - 1) / (n - k)
    v = factor * bread @ meat @ bread
    return (v + v.T) / 2


def attach_vcov(fit: FitResult, X: DesignMatrix, cluster=None, small_sample: str = "nested") -> FitResult:
    fit.vcov = crv1_vcov(fit, X, cluster, small_sample)
    ids = X.fe_unit if cluster is None else np.asarray(cluster)
    fit.cluster = ids
    fit.n_clusters = len(np.unique(ids))
    return fit


@dataclass(frozen=True)
class Restriction:
    """Null hypothesis ``R beta = q`` over a fit's coefficient vector."""

    R: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if q.shape != (R.shape[0],):
            raise ValueError(f"q has shape {q.shape}, expected ({R.shape[0]},)")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "q", q)

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @classmethod
    def from_labels(cls, labels, rows, q=None) -> "Restriction":
        """Build ``R`` from rows given as ``{label: weight}`` mappings."""
        index = {lab: j for j, lab in enumerate(labels)}
        R = np.zeros((len(rows), len(labels)))
        for i, row in enumerate(rows):
            for lab, w in row.items():
                if lab not in index:
                    raise AlignmentError(f"restriction refers to unknown coefficient {lab!r}")
                R[i, index[lab]] = w
        return cls(R, np.zeros(len(rows)) if q is None else q)


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    m: int
    dof_denom: int
    p_f: float
    p_chi2: float

    def reject(self, alpha: float = 0.05, form: str = "f") -> bool:
        p = self.p_f if form == "f" else self.p_chi2
        return p <= alpha

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "m": self.m,
            "dof_denom": self.dof_denom,
            "p_f": self.p_f,
            "p_chi2": self.p_chi2,
        }


DOF_CONVENTIONS = ("residual", "cluster", "hotelling")


def wald_test(fit: FitResult, r: Restriction, dof: str = "residual") -> WaldResult:
    """Joint Wald test of ``R beta = q`` using ``fit.vcov``.

    The statistic is the quadratic form divided by ``m``, referred to
    ``F(m, n - k)`` (``dof="residual"``) or ``F(m, G - 1)``
    (``dof="cluster"``); ``m`` times the statistic is also referred to
    ``chi2(m)``.

    ``dof="hotelling"`` treats the cluster covariance as a Wishart estimate
    on ``G - 1`` degrees of freedom: the statistic is scaled by
    ``(G - m) / (G - 1)`` and referred to ``F(m, G - m)``. This keeps the
    size close to nominal when ``m`` is not small relative to ``G``.

    A discrepancy that vanishes to rounding gives statistic 0 without
    consulting the covariance, which may itself be zero.
    """
    if fit.vcov is None:
        raise ValueError("attach a covariance estimate before testing")
    R, q = r.R, r.q
    if R.shape[1] != fit.coefficients.size:
        raise AlignmentError(f"R has {R.shape[1]} columns, fit has {fit.coefficients.size} coefficients")
    m = r.m
    if m < 1:
        raise RedundantRestrictions("no restrictions")
    if np.linalg.matrix_rank(R) < m:
        raise RedundantRestrictions(f"restriction matrix has rank below m = {m}")

    if dof == "residual":
        dof_denom = fit.df_resid
    elif dof == "cluster":
        dof_denom = fit.n_clusters - 1
    elif dof == "hotelling":
        dof_denom = fit.n_clusters - m
        if dof_denom < 1:
            raise TooFewDegreesOfFreedom(f"G - m = {dof_denom}; need more clusters than restrictions")
    else:
        raise ValueError(f"unknown dof convention {dof!r}")

    rb = R @ fit.coefficients
    diff = rb - q
    scale = max(1.0, float(np.max(np.abs(rb))), float(np.max(np.abs(q))))
    if np.max(np.abs(diff)) <= ZERO_DISCREPANCY_RTOL * scale:
        return WaldResult(0.0, m, dof_denom, 1.0, 1.0)

    cov = R @ fit.vcov @ R.T
    cov = (cov + cov.T) / 2
    eig = np.linalg.eigvalsh(cov)
    if eig[-1] <= 0 or eig[0] <= SINGULAR_RTOL * eig[-1]:
        raise SingularRestrictionCovariance("R V R' is singular")
    try:
        factor = scipy.linalg.cho_factor(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularRestrictionCovariance("R V R' is not positive definite") from exc
    stat = max(float(diff @ scipy.linalg.cho_solve(factor, diff)) / m, 0.0)
    if dof == "hotelling":
        stat *= (fit.n_clusters - m) / (fit.n_clusters - 1)
    return WaldResult(stat, m, dof_denom, f_sf(stat, m, dof_denom), chi2_sf(m * stat, m))
