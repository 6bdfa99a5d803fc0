"""Exception hierarchy shared by every geonet module."""


class GeonetError(Exception):
    """Base class for all geonet failures."""

    stage = None

    def __init__(self, message, stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


class DomainError(GeonetError):
    pass


class PreconditionError(GeonetError):
    pass


class IntegrationError(GeonetError):
    pass


class ConvergenceError(GeonetError):
    pass


class AmbiguityError(GeonetError):
    pass


class IntersectionError(GeonetError):
    pass


class OutOfRangeError(GeonetError):
    pass


class GeometryError(GeonetError):
    pass


class ResolutionError(GeonetError):
    pass


class ParametrizationError(GeonetError):
    pass


class DegeneracyError(GeonetError):
    pass


class SeparationError(GeonetError):
    pass


class AssemblyError(GeonetError):
    pass


class TubeExitError(GeonetError):
    pass


class ConsistencyError(GeonetError):
    pass


class SupportOverlapError(GeonetError):
    pass


class ContinuationError(GeonetError):
    pass


class ConstructionError(GeonetError):
    """Final verification of a construction failed; ``report`` holds details."""

    def __init__(self, message, stage=None, report=None, stack=None, net=None, plan=None):
        super().__init__(message, stage=stage)
        self.report = report
        self.stack, self.net, self.plan = stack, net, plan
