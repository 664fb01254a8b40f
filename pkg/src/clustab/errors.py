"""Exception hierarchy shared by every module."""

from __future__ import annotations


class ClustabError(Exception):
    """Base class for all library errors."""


class ValidationError(ClustabError, ValueError):
    pass


class ParseError(ClustabError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        where = f" ({', '.join(loc)})" if loc else ""
        super().__init__(f"{message}{where}")
        self.row = row
        self.column = column


class InsufficientDataError(ClustabError, ValueError):
    pass


class ScaleTooLargeError(ClustabError, ValueError):
    pass


class DegenerateSeriesError(ClustabError, ValueError):
    def __init__(self, asset: str, detail: str = "series has zero variance"):
        super().__init__(f"degenerate series for asset {asset!r}: {detail}")
        self.asset = asset


class DegenerateSplitError(ClustabError, ValueError):
    pass


class InvertedCurveError(ClustabError, ValueError):
    def __init__(self, tenor: float, hazard: float):
        super().__init__(
            f"inverted curve: non-positive hazard {hazard:.6g} on interval ending at tenor {tenor:g}"
        )
        self.tenor = tenor
        self.hazard = hazard


class AlignmentError(ClustabError, ValueError):
    pass


class ImputationError(ClustabError, ValueError):
    pass


class ConfigError(ClustabError, ValueError):
    pass
