"""Error hierarchy for the prescribed-curvature pipeline."""


class PrescurvError(Exception):
    """Base class for every failure raised by prescurv."""


class ShrinkSignal(PrescurvError):
    """A side condition of the construction failed; the ball radius must shrink."""

    reason = "shrink"


class RTooLarge(ShrinkSignal):
    reason = "r_too_large"


class NegativeCoefficient(ShrinkSignal):
    reason = "negative_coefficient"


class SpeedMarginViolated(ShrinkSignal):
    reason = "speed_margin"


class OutsideBall(ShrinkSignal):
    reason = "outside_ball"


class TantrixEscape(ShrinkSignal):
    reason = "tantrix_escape"


class DegenerateCurve(PrescurvError):
    pass


class NonpositiveDensity(PrescurvError):
    pass


class DomainMismatch(PrescurvError):
    pass


class PerturbationFailed(PrescurvError):
    pass


class BadK(PrescurvError):
    pass


class CannotSegment(PrescurvError):
    pass


class CapTooSmall(PrescurvError):
    pass


class RUnderflow(PrescurvError):
    pass


class JunctionMismatch(PrescurvError):
    pass


class InfeasibleMargin(PrescurvError):
    pass


class NotEmbedded(PrescurvError):
    pass


class NoConvergence(PrescurvError):
    """The average-matching solve stopped above tolerance."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class CertificateFailed(PrescurvError):
    """The isotopy certificate failed; the constructed knot is still attached."""

    def __init__(self, message: str, knot=None, certificate=None):
        super().__init__(message)
        self.knot = knot
        self.certificate = certificate


class BadPreset(PrescurvError):
    pass


class UnsupportedFormat(PrescurvError):
    pass


class ExpressionError(PrescurvError):
    pass


class CurveParseError(PrescurvError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
