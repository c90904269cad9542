"""Exception hierarchy shared across the package."""


class LexCRFError(Exception):
    """Base class for all errors raised by lexcrf."""


class EmptyInputError(LexCRFError):
    pass


class InvalidScoreError(LexCRFError):
    pass


class AnnotationError(LexCRFError):
    """Structurally invalid entity annotation (crossing spans, bad heads, ...)."""


class WrongSemiringError(LexCRFError):
    pass


class ParameterError(LexCRFError, ValueError):
    pass


class ValidationError(LexCRFError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParseError(ValidationError):
    pass


class IntegrityError(LexCRFError):
    pass


class VersionError(LexCRFError):
    pass


class UsageError(LexCRFError):
    pass
