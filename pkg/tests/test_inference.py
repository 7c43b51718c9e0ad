import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paneldiag import errors
from paneldiag.design import build_event_study, build_saturated, build_static, drop_collinear
from paneldiag.fe_solver import FitResult, fit
from paneldiag.inference import (
    Restriction,
    attach_vcov,
    chi2_sf,
    crv1_vcov,
    f_sf,
    wald_test,
)

from conftest import INF, make_panel, random_panel


def toy_fit(beta, vcov, n_obs=100, k_params=10, n_clusters=50):
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    return FitResult(
        coefficients=beta,
        residuals=np.zeros(n_obs),
        n_obs=n_obs,
        k_params=k_params,
        n_clusters=n_clusters,
        labels=[f"b{j}" for j in range(beta.size)],
        vcov=np.atleast_2d(np.asarray(vcov, dtype=float)),
    )


def dense_crv1(d, X, k):
    """Sandwich from dummy-variable OLS with an explicit loop over clusters."""
    unit_d = (X.fe_unit[:, None] == np.unique(X.fe_unit)[None, :]).astype(float)
    time_d = (X.fe_time[:, None] == np.unique(X.fe_time)[None, 1:]).astype(float)
    Z = np.column_stack([X.X, unit_d, time_d])
    beta = np.linalg.solve(Z.T @ Z, Z.T @ d.y)
    u = d.y - Z @ beta
    bread = np.linalg.inv(Z.T @ Z)
    meat = np.zeros_like(bread)
    G = d.n_units
    for g in range(G):
        rows = X.fe_unit == g
        s = Z[rows].T @ u[rows]
        meat += np.outer(s, s)
    n = d.n_obs
    v = G / (G - 1) * (n - 1) / (n - k) * bread @ meat @ bread
    p = X.n_cols
    return v[:p, :p]


class TestWaldMechanics:
    def test_single_restriction(self):
        r = wald_test(toy_fit([2.0], [[1.0]]), Restriction([[1.0]], [0.0]))
        assert r.statistic == pytest.approx(4.0, abs=1e-12)
        assert r.m == 1
        assert r.p_chi2 == pytest.approx(0.0455, abs=5e-5)
        assert r.dof_denom == 90
        assert r.reject(0.05) and not r.reject(0.01)

    def test_statistic_divided_by_m(self):
        r = wald_test(toy_fit([1.0, 2.0], np.eye(2)), Restriction(np.eye(2), [0.0, 0.0]))
        assert r.statistic == pytest.approx(2.5)
        assert r.p_chi2 == pytest.approx(chi2_sf(5.0, 2))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_reparametrization_invariance(self, seed):
        rng = np.random.default_rng(seed)
        k, m = 5, int(rng.integers(1, 5))
        A = rng.normal(size=(k, k))
        fitr = toy_fit(rng.normal(size=k), A @ A.T + np.eye(k))
        R, q = rng.normal(size=(m, k)), rng.normal(size=m)
        # rounding grows with cond(M); keep it bounded
        q1, _ = np.linalg.qr(rng.normal(size=(m, m)))
        q2, _ = np.linalg.qr(rng.normal(size=(m, m)))
        M = q1 @ np.diag(rng.uniform(0.5, 5.0, m)) @ q2
        a = wald_test(fitr, Restriction(R, q))
        b = wald_test(fitr, Restriction(M @ R, M @ q))
        assert b.statistic == pytest.approx(a.statistic, rel=1e-10, abs=1e-12)

    def test_null_holding_exactly(self):
        fitr = toy_fit([1.5, -0.5], np.zeros((2, 2)))
        R = np.array([[1.0, 1.0]])
        r = wald_test(fitr, Restriction(R, R @ fitr.coefficients))
        assert r.statistic == 0.0 and r.p_f == 1.0 and r.p_chi2 == 1.0

    def test_dof_conventions(self):
        fitr = toy_fit([2.0, 1.0], np.eye(2), n_clusters=21)
        R = Restriction(np.eye(2), [0.0, 0.0])
        assert wald_test(fitr, R, dof="cluster").dof_denom == 20
        res = wald_test(fitr, R, dof="residual")
        hot = wald_test(fitr, R, dof="hotelling")
        assert hot.dof_denom == 19
        assert hot.statistic == pytest.approx(res.statistic * 19 / 20)
        assert hot.p_f == pytest.approx(f_sf(hot.statistic, 2, 19))
        with pytest.raises(ValueError):
            wald_test(fitr, R, dof="bogus")
        with pytest.raises(errors.TooFewDegreesOfFreedom):
            wald_test(toy_fit([1.0, 1.0], np.eye(2), n_clusters=2), R, dof="hotelling")

    def test_errors(self):
        fitr = toy_fit([1.0, 2.0], np.eye(2))
        with pytest.raises(errors.RedundantRestrictions):
            wald_test(fitr, Restriction([[1.0, 0.0], [2.0, 0.0]], [0.0, 0.0]))
        with pytest.raises(errors.AlignmentError):
            wald_test(fitr, Restriction([[1.0, 0.0, 0.0]], [0.0]))
        with pytest.raises(errors.SingularRestrictionCovariance):
            wald_test(toy_fit([1.0, 2.0], np.diag([1.0, 0.0])), Restriction([[0.0, 1.0]], [0.0]))
        with pytest.raises(ValueError):
            Restriction([[1.0, 0.0]], [0.0, 1.0])

    def test_from_labels(self):
        r = Restriction.from_labels(["a", "b", "c"], [{"a": 1, "c": -1}, {"b": 1}])
        np.testing.assert_array_equal(r.R, [[1, 0, -1], [0, 1, 0]])
        with pytest.raises(errors.AlignmentError):
            Restriction.from_labels(["a"], [{"z": 1}])


class TestDistributions:
    @pytest.mark.parametrize("x,d1,d2", [(0.5, 1, 10), (2.3, 3, 20), (1.7, 18, 3256), (4.0, 6, 294), (0.01, 2, 2)])
    def test_f_against_mpmath(self, x, d1, d2):
        expected = mpmath.betainc(d2 / 2, d1 / 2, 0, d2 / (d2 + d1 * x), regularized=True)
        assert f_sf(x, d1, d2) == pytest.approx(float(expected), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("x,k", [(0.3, 1), (3.841, 1), (18.307, 10), (40.0, 18), (0.001, 5)])
    def test_chi2_against_mpmath(self, x, k):
        expected = mpmath.gammainc(k / 2, x / 2, mpmath.inf, regularized=True)
        assert chi2_sf(x, k) == pytest.approx(float(expected), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("crit,d1,d2", [(4.96, 1, 10), (3.10, 3, 20)])
    def test_f_table(self, crit, d1, d2):
        assert f_sf(crit, d1, d2) == pytest.approx(0.05, abs=1e-3)

    @pytest.mark.parametrize("crit,k", [(3.841, 1), (18.307, 10)])
    def test_chi2_table(self, crit, k):
        assert chi2_sf(crit, k) == pytest.approx(0.05, abs=1e-4)

    def test_nonpositive_argument(self):
        assert f_sf(0.0, 2, 10) == 1.0 and chi2_sf(-1.0, 3) == 1.0

    @pytest.mark.parametrize("m", [1, 3, 10])
    def test_f_approaches_chi2(self, m):
        for stat in np.linspace(0.1, 5, 25):
            assert abs(f_sf(stat, m, 10_000) - chi2_sf(m * stat, m)) < 0.002


class TestCRV1:
    def test_matches_dense_sandwich(self, rng):
        d = random_panel(rng, n_units=12, n_periods=5)
        X, _ = drop_collinear(build_event_study(d))
        res = fit(d, X)
        full = crv1_vcov(res, X, small_sample="full")
        np.testing.assert_allclose(full, dense_crv1(d, X, res.k_params), rtol=1e-9, atol=1e-12)
        nested = crv1_vcov(res, X)
        # unit effects are nested in unit clusters and leave k
        np.testing.assert_allclose(nested, dense_crv1(d, X, res.k_params - d.n_units), rtol=1e-9, atol=1e-12)

    def test_hand_example(self):
        # 3 units x 3 periods: A never treated, B and C adopt at t = 2 and t = 3
        d = make_panel([[0.0, 1.0, 2.0], [1.0, 4.0, 4.5], [2.0, 2.5, 6.0]], [INF, 2, 3])
        X = build_static(d)
        res = fit(d, X)
        v = crv1_vcov(res, X, small_sample="full")[0, 0]
        assert res.k_params == 1 + 3 + 3 - 1
        assert v == pytest.approx(dense_crv1(d, X, 6)[0, 0], rel=1e-10)
        # frozen from the dense oracle
        assert res.coef("treat") == pytest.approx(2.25, rel=1e-10)
        assert v == pytest.approx(2 / 9, rel=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_psd_and_symmetric(self, seed):
        d = random_panel(np.random.default_rng(seed))
        X, _ = drop_collinear(build_saturated(d))
        if X.n_cols == 0:
            return
        res = fit(d, X)
        try:
            v = crv1_vcov(res, X)
        except errors.TooFewDegreesOfFreedom:
            return
        assert np.array_equal(v, v.T)
        assert np.linalg.eigvalsh(v).min() >= -1e-10 * max(1.0, np.abs(v).max())

    def test_errors(self, rng, did_2x2):
        d = random_panel(rng)
        X, _ = drop_collinear(build_event_study(d))
        res = fit(d, X)
        with pytest.raises(errors.TooFewClusters):
            crv1_vcov(res, X, cluster=np.zeros(d.n_obs))
        with pytest.raises(errors.AlignmentError):
            crv1_vcov(res, X, cluster=np.zeros(3))
        with pytest.raises(ValueError):
            crv1_vcov(res, X, small_sample="other")
        X2 = build_static(did_2x2)
        for rule in ("full", "nested"):
            with pytest.raises(errors.TooFewDegreesOfFreedom):
                crv1_vcov(fit(did_2x2, X2), X2, small_sample=rule)

    def test_attach_and_custom_cluster(self, rng):
        d = random_panel(rng, n_units=16)
        X, _ = drop_collinear(build_event_study(d))
        res = attach_vcov(fit(d, X), X, cluster=X.fe_unit // 2)
        assert res.n_clusters == 8
        assert res.bse.shape == (X.n_cols,)
