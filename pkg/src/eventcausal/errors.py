"""Exception hierarchy.

Every error carries the name of the component that raised it so the CLI can
report failures as ``error [<component>]: <message>``.
"""


class EventStudyError(Exception):
    component = "eventcausal"


# panel ------------------------------------------------------------------
class PanelError(EventStudyError):
    component = "ReturnsPanel"


class ParseError(PanelError):
    pass


class UnbalancedPanel(PanelError):
    def __init__(self, offending):
        self.offending = list(offending)
        super().__init__(f"unbalanced panel; securities missing periods: {self.offending}")


class NonFinite(PanelError):
    def __init__(self, row, value):
        self.row = row
        super().__init__(f"non-finite value {value!r} at data row {row}")


class EmptySeries(PanelError):
    component = "FactorSeries"


class AlreadyAdjusted(PanelError):
    pass


class Misaligned(PanelError):
    pass


class ScheduleError(EventStudyError):
    component = "EventSchedule"


# numerics ---------------------------------------------------------------
class NumericsError(EventStudyError):
    component = "numerics"


class RankDeficient(NumericsError):
    pass


class TooFewObservations(NumericsError):
    pass


class NumericalFailure(NumericsError):
    pass


class RankTooLarge(NumericsError):
    pass


# dgp --------------------------------------------------------------------
class InvalidConfig(EventStudyError):
    component = "config"


class DesignError(InvalidConfig):
    component = "SimDesign"


class HistoryTooShort(DesignError):
    pass


# estimators -------------------------------------------------------------
class EstimatorError(EventStudyError):
    component = "estimators"


class EmptyCohort(EstimatorError):
    pass


class EmptyControls(EstimatorError):
    pass


class WindowTooShort(EstimatorError):
    pass


# effects ----------------------------------------------------------------
class EffectsError(EventStudyError):
    component = "effects"


class MissingHorizon(EffectsError):
    pass


class NonPositiveGrossReturn(EffectsError):
    pass


class TruthUnavailable(EffectsError):
    pass


# inference --------------------------------------------------------------
class InferenceError(EventStudyError):
    component = "inference"


class SampleTooSmall(InferenceError):
    pass


class NotEnoughControls(InferenceError):
    pass


class ModelNotFitted(InferenceError):
    pass


class LengthMismatch(InferenceError):
    pass


# montecarlo / cli -------------------------------------------------------
class NothingOmitted(EventStudyError):
    component = "montecarlo"

