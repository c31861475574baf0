from typing import List, Optional


class MvEvalError(ValueError):
    """ base for every error the harness raises on bad input or bad state """


class DatasetValidationError(MvEvalError):
    def __init__(self, issues: List['ValidationIssue']):  # noqa: F821
        self.issues = list(issues)
        lines = '\n'.join(f'  - {issue}' for issue in self.issues)
        super().__init__(f'{len(self.issues)} dataset violation(s):\n{lines}')


class ParseError(MvEvalError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f'line {line}: ' if line is not None else ''
        super().__init__(f'{prefix}{message}')


class ConfigError(MvEvalError):
    pass


class InvalidRaster(MvEvalError):
    pass


class UnreadableImage(MvEvalError):
    pass


class UnsupportedFormat(MvEvalError):
    pass


class MissingScore(MvEvalError):
    pass


class ScorerProtocolError(MvEvalError):
    pass


class NonFiniteScore(MvEvalError):
    pass


class EmptyList(MvEvalError):
    pass


class InsufficientRealViews(MvEvalError):
    pass


class DegenerateClassDistribution(MvEvalError):
    pass


class EmptyInput(MvEvalError):
    pass


class SeriesTooShort(MvEvalError):
    pass


class EmptySamples(MvEvalError):
    pass


class PairingError(MvEvalError):
    pass


class NonDivisibleSeriesLength(MvEvalError):
    pass


class InvalidSpec(MvEvalError):
    pass


class MetricError(MvEvalError):
    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f'metric failed on bootstrap iteration {iteration}: {cause}')


class StageError(MvEvalError):
    def __init__(self, repeat: int, stage: str, cause: Exception):
        self.repeat = repeat
        self.stage = stage
        self.cause = cause
        super().__init__(f'repeat {repeat}, stage "{stage}": {cause}')
