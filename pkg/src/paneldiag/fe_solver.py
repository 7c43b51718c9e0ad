"""Least squares with absorbed unit and period fixed effects.

The production path demeans by alternating projections and solves the reduced
problem with a QR factorization. ``dummy_oracle_fit`` materializes every dummy
and is kept only to verify the production path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .design import DesignMatrix
from .errors import (
    ConvergenceFailure,
    EmptyDesign,
    RankDeficient,
    TooLargeForOracle,
)
from .panel import PanelDataset

DEMEAN_TOL = 1e-10
DEMEAN_MAX_ITER = 100
RANK_TOL = 1e-9
ORACLE_MAX_OBS = 10_000


@dataclass(eq=False)
class FitResult:
    """Output of a fixed-effects regression.

    ``k_params`` counts design columns plus absorbed parameters,
    ``p + N + T - 1``; residual degrees of freedom are ``n_obs - k_params``.
    ``vcov`` stays ``None`` until :func:`paneldiag.inference.attach_vcov` fills
    it in.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    n_obs: int
    k_params: int
    n_clusters: int
    labels: list
    columns: tuple = ()
    vcov: np.ndarray | None = None
    xtilde: np.ndarray | None = field(default=None, repr=False)
    r_factor: np.ndarray | None = field(default=None, repr=False)
    cluster: np.ndarray | None = field(default=None, repr=False)

    @property
    def df_resid(self) -> int:
        return self.n_obs - self.k_params

    @property
    def params(self) -> dict:
        return dict(zip(self.labels, self.coefficients.tolist()))

    @property
    def bse(self) -> np.ndarray:
        if self.vcov is None:
            raise ValueError("no variance estimate attached")
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    def coef(self, label: str) -> float:
        return float(self.coefficients[self.labels.index(label)])


def _group_operator(groups):
    """Sparse group-sum matrix, group sizes and per-row group codes."""
    _, codes, counts = np.unique(groups, return_inverse=True, return_counts=True)
    n = codes.size
    m = scipy.sparse.csr_matrix((np.ones(n), (codes, np.arange(n))), shape=(counts.size, n))
    return m, counts, codes


def _group_demean(v: np.ndarray, op) -> np.ndarray:
    m, counts, codes = op
    means = (m @ v) / counts.reshape((-1,) + (1,) * (v.ndim - 1))
    return v - means[codes]


def demean_two_way(
    values,
    fe_unit,
    fe_time,
    tol: float = DEMEAN_TOL,
    max_iter: int = DEMEAN_MAX_ITER,
) -> np.ndarray:
    """Project out unit and period means by alternating projections.

    Works on a vector or on the columns of a matrix. Alternates unit and
    period demeaning until the largest absolute change in a sweep is at most
    ``tol`` (scaled by the input magnitude). On a balanced panel the first
    sweep already gives ``y_it - ybar_i - ybar_t + ybar`` and the second
    confirms it.
    """
    v = np.array(values, dtype=float)
    fe_unit = np.asarray(fe_unit)
    fe_time = np.asarray(fe_time)
    if v.shape[0] == 0 or fe_unit.size == 0 or fe_time.size == 0:
        raise ValueError("empty groups")
    if tol <= 0:
        raise ValueError("tol must be positive")
    u_op = _group_operator(fe_unit)
    t_op = _group_operator(fe_time)
    scale = max(1.0, float(np.max(np.abs(v))) if v.size else 1.0)
    for _ in range(max_iter):
        prev = v
        v = _group_demean(v, u_op)
        v = _group_demean(v, t_op)
        if v.size == 0 or np.max(np.abs(v - prev)) <= tol * scale:
            return v
    raise ConvergenceFailure(f"alternating projections did not converge in {max_iter} sweeps")


def _k_params(p: int, fe_unit, fe_time) -> int:
    return p + len(np.unique(fe_unit)) + len(np.unique(fe_time)) - 1


def fit(d: PanelDataset, X: DesignMatrix) -> FitResult:
    """Regress the outcome on ``X`` with unit and period effects absorbed.

    Raises
    ------
    EmptyDesign
        No rows or no columns.
    RankDeficient
        Some demeaned column is (numerically) a combination of earlier ones;
        run :func:`paneldiag.design.drop_collinear` first.
    """
    if X.n_rows == 0 or X.n_cols == 0:
        raise EmptyDesign("design has no rows or no columns")
    if X.n_rows != d.n_obs:
        raise ValueError("design rows do not match the dataset")
    stacked = demean_two_way(np.column_stack([d.y, X.X]), X.fe_unit, X.fe_time)
    yt, xt = stacked[:, 0], stacked[:, 1:]

    q, r = scipy.linalg.qr(xt, mode="economic")
    diag = np.abs(np.diag(r))
    scale = np.linalg.norm(X.X, axis=0)
    bad = (diag <= RANK_TOL * np.where(scale > 0, scale, 1.0)) | (scale == 0)
    if bad.any():
        cols = [lab for lab, b in zip(X.labels, bad) if b]
        raise RankDeficient(f"design is rank deficient after demeaning: {cols}", cols)

    beta = scipy.linalg.solve_triangular(r, q.T @ yt)
    resid = yt - xt @ beta
    return FitResult(
        coefficients=beta,
        residuals=resid,
        n_obs=d.n_obs,
        k_params=_k_params(X.n_cols, X.fe_unit, X.fe_time),
        n_clusters=d.n_units,
        labels=X.labels,
        columns=X.columns,
        xtilde=xt,
        r_factor=r,
    )


def dummy_oracle_fit(d: PanelDataset, X: DesignMatrix) -> FitResult:
    """OLS on ``[X | unit dummies | period dummies minus the first]``."""
    if d.n_obs > ORACLE_MAX_OBS:
        raise TooLargeForOracle(f"{d.n_obs} observations exceeds the oracle guard of {ORACLE_MAX_OBS}")
    if X.n_rows == 0 or X.n_cols == 0:
        raise EmptyDesign("design has no rows or no columns")
    unit_d = (X.fe_unit[:, None] == np.unique(X.fe_unit)[None, :]).astype(float)
    time_d = (X.fe_time[:, None] == np.unique(X.fe_time)[None, 1:]).astype(float)
    Z = np.column_stack([X.X, unit_d, time_d])
    beta, _, rank, _ = np.linalg.lstsq(Z, d.y, rcond=None)
    if rank < Z.shape[1]:
        raise RankDeficient("dummy-variable design is rank deficient", X.labels)
    p = X.n_cols
    return FitResult(
        coefficients=beta[:p],
        residuals=d.y - Z @ beta,
        n_obs=d.n_obs,
        k_params=Z.shape[1],
        n_clusters=d.n_units,
        labels=X.labels,
        columns=X.columns,
    )
