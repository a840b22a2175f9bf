"""Exception hierarchy shared across the package.

Parse-time failures carry enough location information to point a user at
the offending input line; fitting failures carry whatever partial result
is useful for diagnosis.
"""

from __future__ import annotations


class PosschainError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PosschainError, ValueError):
    """An argument is outside the documented domain of an operation."""


class ParseError(PosschainError):
    """Base for event parsing failures; ``line`` is 1-based in the input."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class MalformedRecord(ParseError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}", line=line)
        self.reason = reason


class UnknownEventKind(ParseError):
    def __init__(self, token: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}unknown event kind {token!r}", line=line)
        self.token = token


class ClockRegression(ParseError):
    def __init__(self, match_id: str, period: int, line: int):
        super().__init__(
            f"line {line}: clock went backwards in match {match_id!r} period {period}",
            line=line,
        )
        self.match_id = match_id
        self.period = period


class UnsegmentableStream(PosschainError):
    """The stream has validation violations; run validation and fix first."""

    def __init__(self, violations):
        super().__init__(f"stream has {len(violations)} validation violation(s)")
        self.violations = list(violations)


class InsufficientData(PosschainError):
    """Too few observations to fit the requested model."""


class DegenerateData(PosschainError):
    """The data admits no finite parameter estimate for this family."""


class UnderdispersedData(PosschainError):
    """Variance <= mean: the negative binomial MLE diverges (r -> inf).

    Carries the Poisson-limit rate so callers can fall back explicitly.
    """

    def __init__(self, mean: float, variance: float):
        super().__init__(
            f"variance {variance:.6g} <= mean {mean:.6g}; "
            f"negative binomial degenerates to Poisson(rate={mean:.6g})"
        )
        self.mean = mean
        self.variance = variance
        self.poisson_rate = mean


class NonConvergence(PosschainError):
    """Optimizer exhausted its budget before reaching tolerance."""

    def __init__(self, iterations: int, best_point, best_value: float):
        super().__init__(
            f"no convergence after {iterations} evaluations "
            f"(best objective {best_value:.6g} at {best_point})"
        )
        self.iterations = iterations
        self.best_point = best_point
        self.best_value = best_value


class InsufficientBins(PosschainError):
    """Bin merging left fewer than two bins; the test is undefined."""


class AbsorptionTimeout(PosschainError):
    """Some simulated chains hit the step cap without absorbing."""

    def __init__(self, count: int):
        super().__init__(f"{count} sample(s) hit the step cap before absorbing")
        self.count = count
