"""psh.errors

Every error raised on purpose by pyseqhand derives from SeqHandError.
Each class carries a short `category` string; the CLI prints it so scripts can
branch on the kind of failure without parsing messages.
"""

from __future__ import annotations

from os import PathLike

__all__ = [
    "SeqHandError",
    "AssetFormatError",
    "PoseDBFormatError",
    "InvariantError",
    "DimensionError",
    "DegenerateInputError",
    "EmptyIndexError",
    "ConfigError",
    "DatasetError",
    "EXIT_CODES",
]


class SeqHandError(Exception):
    category = "error"


class AssetFormatError(SeqHandError, ValueError):
    category = "format"

    def __init__(self, path: str | PathLike[str], line: int, msg: str):
        self.path = path
        self.line = line
        self.msg = msg

    def __str__(self):
        return f"{self.path}:{self.line}: {self.msg}"


class PoseDBFormatError(SeqHandError, ValueError):
    category = "format"

    def __init__(self, path: str | PathLike[str], line: int | None, msg: str, record_id: int | None = None):
        self.path = path
        self.line = line
        self.msg = msg
        self.record_id = record_id

    def __str__(self):
        where = str(self.path) if self.line is None else f"{self.path}:{self.line}"
        if self.record_id is not None:
            return f"{where}: record {self.record_id}: {self.msg}"
        return f"{where}: {self.msg}"


class InvariantError(SeqHandError, ValueError):
    category = "invariant"


class DimensionError(SeqHandError, ValueError):
    category = "dimension"

    def __init__(self, what: str, expected: object, got: object):
        self.what = what
        self.expected = expected
        self.got = got

    def __str__(self):
        return f"{self.what}: expected shape {self.expected}, got {self.got}"


class DegenerateInputError(SeqHandError, ValueError):
    category = "degenerate"


class EmptyIndexError(SeqHandError, LookupError):
    category = "empty"

    def __str__(self):
        return "pose index is empty" if not self.args else str(self.args[0])


class ConfigError(SeqHandError, ValueError):
    category = "config"


class DatasetError(SeqHandError, OSError):
    category = "io"


EXIT_CODES = {
    "config": 2,
    "format": 3,
    "dimension": 3,
    "invariant": 4,
    "degenerate": 4,
    "empty": 4,
    "io": 5,
    "error": 1,
}
