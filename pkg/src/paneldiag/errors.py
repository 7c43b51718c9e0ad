"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
2 usage, 3 data validation, 4 estimation, 5 inference.
"""


class PanelDiagError(Exception):
    exit_code = 1


class UsageError(PanelDiagError):
    exit_code = 2


class DataError(PanelDiagError):
    exit_code = 3


class EstimationError(PanelDiagError):
    exit_code = 4


class InferenceError(PanelDiagError):
    exit_code = 5


# data validation
class ParseError(DataError):
    pass


class UnbalancedPanel(DataError):
    pass


class DuplicateObservation(DataError):
    pass


class InconsistentAdoption(DataError):
    pass


# design / estimation
class DegenerateDesign(EstimationError):
    pass


class NoReferencePeriod(EstimationError):
    pass


class UnknownCohort(EstimationError):
    pass


class EmptyDesign(EstimationError):
    pass


class RankDeficient(EstimationError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ConvergenceFailure(EstimationError):
    pass


class TooLargeForOracle(EstimationError):
    pass


class NeedTwoCohorts(EstimationError):
    pass


class NotEnoughPostPeriods(EstimationError):
    pass


class MonteCarloFailure(EstimationError):
    pass


# inference
class TooFewClusters(InferenceError):
    pass


class AlignmentError(InferenceError):
    pass


class TooFewDegreesOfFreedom(InferenceError):
    pass


class SingularRestrictionCovariance(InferenceError):
    pass


class RedundantRestrictions(InferenceError):
    pass


# simulation
class SpecError(UsageError):
    pass


class UnknownScenario(UsageError):
    pass


class ScenarioMismatch(UsageError):
    pass
