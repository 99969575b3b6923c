"""Exception hierarchy."""


class SwitchMTDError(Exception):
    """Base class for every error raised by this package."""


class NotSymmetric(SwitchMTDError, ValueError):
    pass


# Both spellings are used by callers.
NonSymmetric = NotSymmetric


class WeightStructureMismatch(SwitchMTDError, ValueError):
    pass


class NonPositiveMuMin(SwitchMTDError, ValueError):
    pass


class Unsatisfiable(SwitchMTDError):
    """No assignment satisfies the sublayer constraints.

    ``constraint`` names the constraint family that rejected the last
    candidate, ``sublayer`` the 1-based sublayer index when raised from
    :func:`switchmtd.synth.generate_all_graphs`.
    """

    def __init__(self, message, constraint=None, sublayer=None, rejections=None):
        super().__init__(message)
        self.constraint = constraint
        self.sublayer = sublayer
        self.rejections = dict(rejections or {})


class NonPositiveDefiniteQ(SwitchMTDError, ValueError):
    pass


class NotPositiveDefinite(SwitchMTDError, ValueError):
    pass


class NoStabilizingSolution(SwitchMTDError):
    pass


class EbarNotPSD(SwitchMTDError):
    pass


class HypothesisNotVerified(SwitchMTDError):
    pass


class DimensionMismatch(SwitchMTDError, ValueError):
    pass


class EventOffGrid(SwitchMTDError, ValueError):
    pass


class UnknownCatalogId(SwitchMTDError, KeyError):
    pass


class ScenarioError(SwitchMTDError, ValueError):
    """Schema violation in a scenario or artifact file.

    ``field`` is a dotted path to the offending entry.
    """

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class NonPositiveParameter(SwitchMTDError, ValueError):
    pass
