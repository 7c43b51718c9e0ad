"""Simulated staggered-adoption panels with known effect functions.

Outcomes follow ``y_it = a_i + l_t + f_c(t - g_i) * w_it + e_it`` with
normal unit effects, period effects and noise, and cohorts randomized across
units. Every random draw comes from one PCG64 stream per (seed, replication):
``SeedSequence(seed, spawn_key=(replication,))``. The stream does not depend
on how replications are scheduled, so parallel runs reproduce serial ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import ClassVar, NamedTuple

import numpy as np
import pandas as pd

from .errors import SpecError, UnknownScenario
from .panel import PanelDataset


# -- effect functions -------------------------------------------------------

@dataclass(frozen=True)
class EffectFunction:
    """Treatment effect as a function of event time ``s``; zero before adoption."""

    kind: ClassVar[str] = "base"

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0, self._post(np.maximum(s, 0.0)), 0.0)

    def _post(self, s):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class Constant(EffectFunction):
    c: float = 1.0
    kind: ClassVar[str] = "constant"

    def _post(self, s):
        return np.full_like(s, self.c)


@dataclass(frozen=True)
class Linear(EffectFunction):
    slope: float = 0.1
    kind: ClassVar[str] = "linear"

    def _post(self, s):
        return self.slope * (s + 1)


@dataclass(frozen=True)
class LinearDecay(EffectFunction):
    start: float = 2.0
    periods_to_zero: float = 6.0
    kind: ClassVar[str] = "linear_decay"

    def _post(self, s):
        return self.start * np.clip(1 - s / self.periods_to_zero, 0.0, None)


@dataclass(frozen=True)
class ConcaveLog(EffectFunction):
    scale: float = 1.0
    kind: ClassVar[str] = "concave_log"

    def _post(self, s):
        return self.scale * np.log(s + 2)


@dataclass(frozen=True)
class LogThenZero(EffectFunction):
    scale: float = 1.0
    cutoff: float = 4.0
    kind: ClassVar[str] = "log_then_zero"

    def _post(self, s):
        return np.where(s < self.cutoff, self.scale * np.log(s + 2), 0.0)


@dataclass(frozen=True)
class Sinusoid(EffectFunction):
    amplitude: float = 1.0
    period: float = 4.0
    phase: float = 0.0
    kind: ClassVar[str] = "sinusoid"

    def _post(self, s):
        return self.amplitude * np.sin(2 * math.pi * s / self.period + self.phase)


@dataclass(frozen=True)
class Novelty(EffectFunction):
    peak: float = 2.0
    decay_rate: float = 0.5
    kind: ClassVar[str] = "novelty"

    def _post(self, s):
        return self.peak * np.exp(-self.decay_rate * s)


@dataclass(frozen=True)
class Convex(EffectFunction):
    """``scale * ((s + 1) / horizon)^2``; reaches ``scale`` at ``s = horizon - 1``."""

    scale: float = 1.0
    horizon: float = 7.0
    kind: ClassVar[str] = "convex"

    def _post(self, s):
        return self.scale * ((s + 1) / self.horizon) ** 2


# -- scenario specification ---------------------------------------------------

@dataclass(frozen=True)
class CohortSpec:
    adoption: int
    share: float
    effect: EffectFunction

    def to_dict(self) -> dict:
        return {"adoption": self.adoption, "share": self.share, "effect": self.effect.to_dict()}


@dataclass(frozen=True)
class DgpSpec:
    cohorts: tuple
    N: int = 300
    T: int = 12
    never_treated_share: float = 0.25
    unit_fe_sd: float = 1.0
    time_fe_sd: float = 0.5
    noise_sd: float = 1.0
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "cohorts", tuple(self.cohorts))
        if self.N < 1 or self.T < 2:
            raise SpecError("need N >= 1 and T >= 2")
        shares = [c.share for c in self.cohorts] + [self.never_treated_share]
        if any(s < 0 for s in shares) or not math.isclose(sum(shares), 1.0, abs_tol=1e-9):
            raise SpecError(f"cohort and never-treated shares must be nonnegative and sum to 1, got {shares}")
        gs = [c.adoption for c in self.cohorts]
        if len(set(gs)) != len(gs):
            raise SpecError("adoption times must be distinct")
        if any(not 2 <= g <= self.T for g in gs):
            raise SpecError(f"adoption times must lie in 2..{self.T}")
        if min(self.unit_fe_sd, self.time_fe_sd, self.noise_sd) < 0:
            raise SpecError("standard deviations must be nonnegative")

    @property
    def n_treated_cohorts(self) -> int:
        return sum(1 for c in self.cohorts if c.share > 0)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "cohorts"}
        out["cohorts"] = [c.to_dict() for c in self.cohorts]
        return out


class SimulatedPanel(NamedTuple):
    dataset: PanelDataset
    truth: pd.DataFrame


def stream(seed: int, replication: int | None = None) -> np.random.Generator:
    """The generator for one replication of a study seeded with ``seed``."""
    ss = np.random.SeedSequence(seed) if replication is None else np.random.SeedSequence(seed, spawn_key=(replication,))
    return np.random.Generator(np.random.PCG64(ss))


def _group_counts(n: int, shares: list[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` units to groups."""
    raw = [n * s for s in shares]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(shares)), key=lambda j: (-(raw[j] - counts[j]), j))
    for j in order[: n - sum(counts)]:
        counts[j] += 1
    return counts


def truth_table(spec: DgpSpec) -> pd.DataFrame:
    rows = []
    for c in spec.cohorts:
        s = np.arange(1 - c.adoption, spec.T - c.adoption + 1)
        for si, e in zip(s, c.effect(s)):
            rows.append({"cohort": c.adoption, "s": int(si), "effect": float(e)})
    return pd.DataFrame(rows, columns=["cohort", "s", "effect"])


def simulate_panel(spec: DgpSpec, replication: int | None = None) -> SimulatedPanel:
    """Draw one panel. Deterministic in ``(spec.seed, replication)``."""
    rng = stream(spec.seed, replication)
    groups = [float(c.adoption) for c in spec.cohorts] + [math.inf]
    counts = _group_counts(spec.N, [c.share for c in spec.cohorts] + [spec.never_treated_share])
    adoption = rng.permutation(np.repeat(groups, counts))

    alpha = rng.normal(0.0, spec.unit_fe_sd, spec.N)
    lam = rng.normal(0.0, spec.time_fe_sd, spec.T)
    eps = rng.normal(0.0, spec.noise_sd, (spec.N, spec.T))

    t = np.arange(1, spec.T + 1)
    effect = np.zeros((spec.N, spec.T))
    for c in spec.cohorts:
        rows = adoption == c.adoption
        effect[rows] = c.effect(t - c.adoption)[None, :]

    y = alpha[:, None] + lam[None, :] + effect + eps
    d = PanelDataset(
        units=tuple(range(1, spec.N + 1)),
        periods=tuple(int(x) for x in t),
        outcome=y,
        adoption=adoption,
    )
    return SimulatedPanel(d, truth_table(spec))


# -- scenario catalog ---------------------------------------------------------
# Effect shapes are reconstructions from plotted curves; magnitudes are tuning
# constants chosen here.

SINGLE_COHORT_ADOPTION = 6
SINGLE_COHORT_SHARE = 0.5
MULTI_COHORT_ADOPTIONS = (4, 6, 8)
MULTIPLIER_SMALL = 1.25
MULTIPLIER_LARGE = 2.0

_SINGLE = {
    "constant": Constant(1.0),
    "linear": Linear(0.15),
    "concave_log": ConcaveLog(0.3),  # power well below the other shapes
    "convex": Convex(1.5, horizon=7),
    "sinusoid": Sinusoid(0.5, period=4),
    "novelty": Novelty(2.0, decay_rate=0.5),
    "log_then_zero": LogThenZero(1.0, cutoff=3),
}

_MULTI = {
    "homogeneous": (ConcaveLog(1.0), ConcaveLog(1.0), ConcaveLog(1.0)),
    "heterogeneous": (LinearDecay(2.0, 6), LogThenZero(1.0, 4), Sinusoid(1.0, 4)),
    "concave_multiplier_small": tuple(ConcaveLog(MULTIPLIER_SMALL**k) for k in range(3)),
    "concave_multiplier_large": tuple(ConcaveLog(MULTIPLIER_LARGE**k) for k in range(3)),
    # earliest adopters gain most
    "selection_on_gains": (ConcaveLog(2.0), ConcaveLog(1.0), ConcaveLog(0.5)),
    "novelty_effects": (Novelty(2.0, 0.5), Novelty(2.0, 0.5), Novelty(2.0, 0.5)),
    # immediate jump for the first cohort, slow ramps for the others
    "activity_bias": (Constant(2.0), Linear(0.2), Linear(0.2)),
}

SINGLE_COHORT_SCENARIOS = tuple(_SINGLE)
MULTI_COHORT_SCENARIOS = tuple(_MULTI)
NULL_SCENARIOS = {"dynamics": ("constant",), "cohorts": ("homogeneous", "novelty_effects")}


def scenario(name: str, **overrides) -> DgpSpec:
    """Catalog entry ``name`` with optional field overrides (e.g. ``seed``)."""
    if name in _SINGLE:
        cohorts = (CohortSpec(SINGLE_COHORT_ADOPTION, SINGLE_COHORT_SHARE, _SINGLE[name]),)
        spec = DgpSpec(cohorts=cohorts, never_treated_share=1 - SINGLE_COHORT_SHARE, name=name)
    elif name in _MULTI:
        share = 0.25
        cohorts = tuple(CohortSpec(g, share, f) for g, f in zip(MULTI_COHORT_ADOPTIONS, _MULTI[name]))
        spec = DgpSpec(cohorts=cohorts, never_treated_share=0.25, name=name)
    else:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {sorted(_SINGLE) + sorted(_MULTI)}")
    return replace(spec, **overrides) if overrides else spec


def catalog() -> dict:
    return {name: scenario(name).to_dict() for name in SINGLE_COHORT_SCENARIOS + MULTI_COHORT_SCENARIOS}


def catalog_json(indent: int = 2) -> str:
    return json.dumps(catalog(), indent=indent)
