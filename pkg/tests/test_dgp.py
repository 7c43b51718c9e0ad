import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paneldiag import dgp, errors
from paneldiag.design import build_saturated, build_static, drop_collinear
from paneldiag.dgp import (
    CohortSpec,
    Constant,
    ConcaveLog,
    Convex,
    DgpSpec,
    Linear,
    LinearDecay,
    LogThenZero,
    Novelty,
    Sinusoid,
    scenario,
    simulate_panel,
)
from paneldiag.fe_solver import fit

S = np.arange(-3, 8)


def single(effect, **kw):
    return DgpSpec(cohorts=(CohortSpec(4, 0.5, effect),), never_treated_share=0.5, **kw)


class TestEffects:
    @pytest.mark.parametrize(
        "f",
        [Constant(2.0), Linear(0.3), LinearDecay(2, 6), ConcaveLog(1), LogThenZero(1, 3),
         Sinusoid(1, 4), Novelty(2, 0.5), Convex(1.5, 7)],
    )
    def test_no_anticipation(self, f):
        assert (f(S[S < 0]) == 0).all()

    def test_values(self):
        s = np.arange(0, 5)
        np.testing.assert_allclose(Constant(2.0)(s), 2.0)
        np.testing.assert_allclose(Linear(0.5)(s), 0.5 * (s + 1))
        np.testing.assert_allclose(ConcaveLog(2.0)(s), 2 * np.log(s + 2))
        np.testing.assert_allclose(LinearDecay(2, 4)(s), [2, 1.5, 1, 0.5, 0])
        np.testing.assert_allclose(LogThenZero(1, 2)(s), [math.log(2), math.log(3), 0, 0, 0])
        np.testing.assert_allclose(Sinusoid(1, 4)(s), [0, 1, 0, -1, 0], atol=1e-12)
        np.testing.assert_allclose(Novelty(2, 0.5)(s), 2 * np.exp(-0.5 * s))
        assert Convex(1.5, 7)(6) == pytest.approx(1.5)

    def test_shapes(self):
        s = np.arange(0, 7)
        assert (np.diff(ConcaveLog(1)(s), 2) < 0).all()
        assert (np.diff(Convex(1, 7)(s), 2) > 0).all()
        assert (np.diff(Novelty(2, 0.5)(s)) < 0).all()

    def test_to_dict(self):
        assert Linear(0.2).to_dict() == {"kind": "linear", "slope": 0.2}


class TestSpec:
    def test_validation(self):
        with pytest.raises(errors.SpecError):
            DgpSpec(cohorts=(CohortSpec(4, 0.6, Constant()),), never_treated_share=0.5)
        with pytest.raises(errors.SpecError):
            DgpSpec(cohorts=(CohortSpec(1, 0.5, Constant()),), never_treated_share=0.5)
        with pytest.raises(errors.SpecError):
            DgpSpec(cohorts=(CohortSpec(3, 0.25, Constant()), CohortSpec(3, 0.25, Constant())),
                    never_treated_share=0.5)
        with pytest.raises(errors.SpecError):
            single(Constant(), noise_sd=-1)

    def test_group_counts_largest_remainder(self):
        assert dgp._group_counts(10, [0.25] * 4) == [3, 3, 2, 2]
        assert dgp._group_counts(7, [0.5, 0.5]) == [4, 3]

    @given(n=st.integers(1, 500), k=st.integers(1, 5), seed=st.integers(0, 1000))
    def test_group_counts_sum(self, n, k, seed):
        w = np.random.default_rng(seed).dirichlet(np.ones(k))
        counts = dgp._group_counts(n, list(w))
        assert sum(counts) == n
        assert all(abs(c - n * s) < 1 for c, s in zip(counts, w))


class TestSimulate:
    def test_noiseless_constant(self):
        spec = single(Constant(2.0), N=40, T=8, noise_sd=0.0)
        d, truth = simulate_panel(spec)
        assert fit(d, build_static(d)).coef("treat") == pytest.approx(2.0, abs=1e-10)
        # the structural outcome is recovered from two-way demeaned differences
        w = d.treatment_matrix()
        y = d.outcome - 2.0 * w
        resid = y - y.mean(1, keepdims=True) - y.mean(0, keepdims=True) + y.mean()
        np.testing.assert_allclose(resid, 0, atol=1e-12)

    def test_determinism(self):
        spec = scenario("heterogeneous", N=30, seed=7)
        a, b = simulate_panel(spec, 3), simulate_panel(spec, 3)
        assert a.dataset == b.dataset
        assert simulate_panel(spec, 4).dataset != a.dataset
        assert simulate_panel(replace(spec, seed=8), 3).dataset != a.dataset

    def test_shape_and_cohorts(self):
        spec = scenario("homogeneous", N=101)
        d = simulate_panel(spec, 0).dataset
        assert (d.n_units, d.n_periods) == (101, 12)
        vals, counts = np.unique(d.adoption, return_counts=True)
        assert vals.tolist() == [4, 6, 8, math.inf]
        assert sorted(counts.tolist()) == [25, 25, 25, 26]

    def test_truth_table(self):
        truth = simulate_panel(scenario("linear"), 0).truth
        assert list(truth.columns) == ["cohort", "s", "effect"]
        assert truth["s"].min() == -5 and truth["s"].max() == 6
        assert (truth.loc[truth.s < 0, "effect"] == 0).all()
        assert truth.loc[truth.s == 0, "effect"].item() == pytest.approx(0.15)

    def test_no_noise_no_effects_but_treatment(self):
        spec = single(Constant(2.0), N=10, T=6, noise_sd=0.0, unit_fe_sd=0.0, time_fe_sd=0.0)
        d = simulate_panel(spec).dataset
        np.testing.assert_array_equal(d.outcome, 2.0 * d.treatment_matrix())

    def test_static_unbiased_under_constant_effect(self):
        spec = single(Constant(2.0), N=60, T=8, seed=3)
        est = np.array([fit(d, build_static(d)).coef("treat")
                        for d in (simulate_panel(spec, i).dataset for i in range(1000))])
        se = est.std(ddof=1) / np.sqrt(est.size)
        assert abs(est.mean() - 2.0) < 3 * se

    @pytest.mark.parametrize("name", dgp.SINGLE_COHORT_SCENARIOS + dgp.MULTI_COHORT_SCENARIOS)
    def test_no_anticipation(self, name):
        # the average lead coefficient over 1000 replications is within 3 MC SEs of 0
        spec = scenario(name, N=60, seed=19)
        means = []
        for i in range(1000):
            d = simulate_panel(spec, i).dataset
            X, _ = drop_collinear(build_saturated(d))
            res = fit(d, X)
            means.append(np.mean([b for c, b in zip(res.columns, res.coefficients) if c.s < 0]))
        means = np.array(means)
        assert abs(means.mean()) < 3 * means.std(ddof=1) / np.sqrt(means.size)


class TestCatalog:
    def test_names(self):
        assert set(dgp.SINGLE_COHORT_SCENARIOS) == {
            "constant", "linear", "concave_log", "convex", "sinusoid", "novelty", "log_then_zero"}
        assert set(dgp.MULTI_COHORT_SCENARIOS) == {
            "homogeneous", "heterogeneous", "concave_multiplier_small", "concave_multiplier_large",
            "selection_on_gains", "novelty_effects", "activity_bias"}

    def test_null_scenarios_have_shared_effects(self):
        for name in dgp.NULL_SCENARIOS["cohorts"]:
            effects = {c.effect for c in scenario(name).cohorts}
            assert len(effects) == 1
        (c,) = scenario("constant").cohorts
        assert isinstance(c.effect, Constant)

    def test_alternatives_differ_across_cohorts(self):
        for name in set(dgp.MULTI_COHORT_SCENARIOS) - set(dgp.NULL_SCENARIOS["cohorts"]):
            assert len({c.effect for c in scenario(name).cohorts}) > 1

    def test_multiplier_scenarios(self):
        small = [c.effect.scale for c in scenario("concave_multiplier_small").cohorts]
        large = [c.effect.scale for c in scenario("concave_multiplier_large").cohorts]
        assert small == pytest.approx([1, 1.25, 1.5625])
        assert large == pytest.approx([1, 2, 4])

    def test_unknown_and_overrides(self):
        with pytest.raises(errors.UnknownScenario):
            scenario("nope")
        assert scenario("linear", seed=9, N=50).seed == 9

    def test_json(self):
        doc = json.loads(dgp.catalog_json())
        assert len(doc) == 14
        assert doc["homogeneous"]["cohorts"][0]["effect"]["kind"] == "concave_log"
