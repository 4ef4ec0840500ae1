"""Exception hierarchy shared by every module."""


class CoreElementsError(Exception):
    """Base class for all package errors."""


class NonConvergence(CoreElementsError):
    def __init__(self, estimate, iterations):
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(last estimate {estimate!r})"
        )
        self.estimate = estimate
        self.iterations = iterations


class RankDeficient(CoreElementsError):
    pass


class RankDeficientDesign(RankDeficient):
    pass


class RankDeficientSubsample(RankDeficient):
    pass


class SingularSystem(CoreElementsError):
    pass


class SingularSketchGram(SingularSystem):
    def __init__(self, r, message=None):
        super().__init__(message or f"sketch Gram matrix X*^T X is singular at r={r}")
        self.r = r


class AllBlocksSingular(CoreElementsError):
    pass


class InsufficientRows(CoreElementsError):
    pass


class EmptyInput(CoreElementsError):
    pass


class ZeroResidual(CoreElementsError):
    pass


class InvalidEpsPrime(CoreElementsError):
    pass


class DegenerateSignal(CoreElementsError):
    pass


class DimensionTooSmall(CoreElementsError):
    pass


class DegenerateMisspec(CoreElementsError):
    pass


class ZeroReference(CoreElementsError):
    pass


class ZeroResponse(CoreElementsError):
    pass


class DimensionMismatch(CoreElementsError):
    pass


class ParseError(CoreElementsError):
    def __init__(self, line, column, message=""):
        text = f"line {line}, column {column}"
        if message:
            text = f"{text}: {message}"
        super().__init__(text)
        self.line = line
        self.column = column
