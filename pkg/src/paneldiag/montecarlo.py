"""Replication harness for size and power of the diagnostics."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import diagnostics
from .dgp import DgpSpec, scenario as get_scenario, simulate_panel
from .errors import MonteCarloFailure, PanelDiagError, ScenarioMismatch

DYNAMICS = "dynamics"
COHORTS = "cohorts"
TESTS = (DYNAMICS, COHORTS)
MAX_FAILURE_RATE = 0.01


@dataclass
class MonteCarloReport:
    scenario: str
    test: str
    reps: int
    alpha: float
    seed: int
    p_values: list
    options: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return sum(1 for p in self.p_values if math.isnan(p))

    @property
    def rejection_rate(self) -> float:
        return sum(1 for p in self.p_values if p <= self.alpha) / self.reps

    @property
    def mc_stderr(self) -> float:
        r = self.rejection_rate
        return math.sqrt(r * (1 - r) / self.reps)

    @property
    def ks_distance(self) -> float:
        """Kolmogorov-Smirnov distance of the p-values from Uniform(0, 1)."""
        p = [x for x in self.p_values if not math.isnan(x)]
        return float(stats.kstest(p, "uniform").statistic)

    def histogram(self, bins: int = 20):
        p = np.array([x for x in self.p_values if not math.isnan(x)])
        counts, edges = np.histogram(p, bins=bins, range=(0.0, 1.0))
        return counts, edges

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "test": self.test,
            "reps": self.reps,
            "alpha": self.alpha,
            "seed": self.seed,
            "options": self.options,
            "rejection_rate": self.rejection_rate,
            "mc_stderr": self.mc_stderr,
            "ks_distance": self.ks_distance,
            "n_failed": self.n_failed,
            "errors": self.errors,
            "p_values": [None if math.isnan(p) else p for p in self.p_values],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def pvalues_csv(self) -> str:
        lines = ["replication,p_value"]
        lines += [f"{i},{'' if math.isnan(p) else repr(p)}" for i, p in enumerate(self.p_values)]
        return "\n".join(lines) + "\n"


def one_replication(spec: DgpSpec, test: str, options: dict, replication: int) -> float:
    """p-value (F form) of ``test`` on replication ``replication`` of ``spec``."""
    d = simulate_panel(spec, replication).dataset
    if test == DYNAMICS:
        rep = diagnostics.test_dynamics(d, mode=options.get("mode", diagnostics.Q_AGAINST_TAU),
                                        dof=options.get("dof", diagnostics.DEFAULT_DOF))
    else:
        rep = diagnostics.test_cohort_heterogeneity(d, scope=options.get("scope", diagnostics.ALL_PERIODS),
                                                    dof=options.get("dof", diagnostics.DEFAULT_DOF))
    return rep.wald.p_f


def _run_chunk(args):
    spec, test, options, indices = args
    out = []
    for i in indices:
        try:
            out.append((i, one_replication(spec, test, options, i), None))
        except PanelDiagError as exc:
            out.append((i, math.nan, type(exc).__name__))
    return out


def run_study(
    scenario,
    test: str = COHORTS,
    reps: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    jobs: int = 1,
    mode: str = diagnostics.Q_AGAINST_TAU,
    scope: str = diagnostics.ALL_PERIODS,
    dof: str = diagnostics.DEFAULT_DOF,
) -> MonteCarloReport:
    """Simulate ``reps`` panels and record the test's p-value on each.

    ``scenario`` is a catalog name or a :class:`DgpSpec`. Replication ``i``
    always draws from substream ``i`` of ``seed``, so the p-values do not depend
    on ``jobs``. Failed replications are kept as NaN and counted; more than 1%
    failures raises :class:`MonteCarloFailure`.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if test not in TESTS:
        raise ValueError(f"test must be one of {TESTS}")
    spec = get_scenario(scenario) if isinstance(scenario, str) else scenario
    spec = replace(spec, seed=seed)
    if test == COHORTS and spec.n_treated_cohorts < 2:
        raise ScenarioMismatch(f"scenario {spec.name!r} has one treated cohort; the cohort test needs two")

    options = {"dof": dof}
    if test == DYNAMICS:
        options["mode"] = mode
    else:
        options["scope"] = scope

    n_chunks = max(1, min(reps, jobs * 4))
    chunks = [(spec, test, options, list(ix)) for ix in np.array_split(np.arange(reps), n_chunks) if len(ix)]
    if jobs <= 1:
        results = [r for c in chunks for r in _run_chunk(c)]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]

    p_values = [math.nan] * reps
    errors: dict = {}
    for i, p, err in results:
        p_values[int(i)] = float(p)
        if err is not None:
            errors[err] = errors.get(err, 0) + 1

    report = MonteCarloReport(spec.name, test, reps, alpha, seed, p_values, options, errors)
    if report.n_failed > MAX_FAILURE_RATE * reps:
        raise MonteCarloFailure(f"{report.n_failed} of {reps} replications failed: {errors}")
    return report
