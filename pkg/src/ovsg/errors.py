"""Exception types raised across the package."""

from __future__ import annotations


class OvsgError(Exception):
    """Base class for all errors raised by ovsg."""


class SceneFormatError(OvsgError, ValueError):
    """A scene or graph file does not conform to its format."""


class DimensionMismatchError(SceneFormatError):
    pass


class SpaceMismatchError(OvsgError, TypeError):
    """Two features from different embedding spaces were compared."""


class UnencodableTextError(OvsgError, LookupError):
    def __init__(self, space: str, text: str):
        super().__init__(f"unencodable text {text!r} in embedding space {space!r}")
        self.space = space
        self.text = text


class UnknownSpatialRelationError(OvsgError, LookupError):
    def __init__(self, text: str):
        super().__init__(f"unknown spatial relation {text!r}")
        self.text = text


class QueryParseError(OvsgError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.reason = message


class OracleLimitError(OvsgError, ValueError):
    pass


class RelationMismatchError(OvsgError, TypeError):
    """A spatial comparison got two signatures or two descriptors."""
