"""Error taxonomy shared by every subsystem.

Each class carries the process exit code the CLI maps it to: 1 for
validation/data problems, 3 for I/O. Usage errors (exit 2) are argparse's
domain and have no exception here.
"""


class HdganError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class SchemaError(HdganError):
    """Structural disagreement between an artifact and its manifest/contract."""


class FormatError(HdganError):
    """Malformed or unsupported file content (bad magic, version, header)."""


class DataError(HdganError):
    """Values violate a data invariant (non-finite floats, illegal labels)."""


class ConfigError(HdganError):
    """Caller-supplied configuration is out of range or inconsistent."""


class BoundsError(HdganError):
    """Coordinate outside the addressed image or region."""


class ShapeError(HdganError):
    """Array shapes incompatible with the requested operation."""


class IoError(HdganError):
    """Filesystem-level failure (missing file, unwritable path)."""

    exit_code = 3
