"""Exception hierarchy.

``ValidationError`` subclasses map to CLI exit code 1, everything else
deriving from ``DefectLabError`` to exit code 2.
"""


class DefectLabError(Exception):
    pass


class ValidationError(DefectLabError):
    """Bad input or configuration supplied by the caller."""


class ConfigError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(ValidationError):
    pass


class SplitError(ValidationError):
    pass


class ResampleError(ValidationError):
    pass


class FitError(ValidationError):
    pass


class ScoreError(ValidationError):
    pass


class UnsupportedError(ValidationError):
    pass


class ProductImportError(ValidationError):
    """Duplicate key in an imported product-metrics CSV."""


class StatsError(ValidationError):
    pass


class MiningError(DefectLabError):
    def __init__(self, message: str, diagnostic: str = ""):
        self.diagnostic = diagnostic
        if diagnostic:
            message = f"{message}: {diagnostic.strip()}"
        super().__init__(message)


class SnapshotError(DefectLabError):
    pass


class LabelingError(DefectLabError):
    def __init__(self, file: str, fix: str, detail: str = ""):
        self.file = file
        self.fix = fix
        super().__init__(f"blame unavailable for {file} at parent of {fix[:12]}" + (f": {detail}" if detail else ""))
