from typing import Optional


class SectionerError(Exception):
    """Base class for every error the toolkit raises on purpose"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.message = message
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ValidationFailure(SectionerError):
    """The input (file, config, flag or model) is wrong"""


class RuntimeFailure(SectionerError):
    """The input was accepted but the computation failed"""


class SchemaError(ValidationFailure):
    pass


class GeometryError(ValidationFailure):
    pass


class EmptyError(ValidationFailure):
    pass


class ConfigError(ValidationFailure):
    pass


class EmptyCorpus(ValidationFailure):
    pass


class InvalidRef(ValidationFailure):
    pass


class EmptyDocument(ValidationFailure):
    pass


class ShapeMismatch(ValidationFailure):
    pass


class DataError(ValidationFailure):
    pass


class ConfigMismatch(ValidationFailure):
    pass


class InvalidDocument(ValidationFailure):
    pass


class LengthMismatch(ValidationFailure):
    pass


class ModelMismatch(ValidationFailure):
    pass


class DuplicateId(ValidationFailure):
    pass


class AlignmentError(ValidationFailure):
    pass


class UsageError(ValidationFailure):
    pass


class RuleSyntaxError(ValidationFailure):
    def __init__(self, message: str, path: Optional[str] = None, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        location = f"{path or '<rules>'}:{line}:{column}"
        super().__init__(message, path=location)


class NonFinite(RuntimeFailure):
    pass
