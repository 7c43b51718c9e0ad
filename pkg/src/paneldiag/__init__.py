"""Two-way fixed-effects estimation and diagnostics for staggered-adoption panels."""

__version__ = "0.1.0"

from .design import (  # noqa: E402
    build_event_study,
    build_interacted,
    build_saturated,
    build_static,
    drop_collinear,
)
from .diagnostics import (  # noqa: E402
    cohort_event_study,
    test_cohort_heterogeneity,
    test_dynamics,
)
from .fe_solver import demean_two_way, dummy_oracle_fit, fit  # noqa: E402
from .inference import Restriction, WaldResult, crv1_vcov, wald_test  # noqa: E402
from .panel import PanelDataset, cohort_summary, load_csv, treatment_indicator, write_csv  # noqa: E402
