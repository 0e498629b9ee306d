"""Search-based detection of nested and overlapping events over relation graphs."""

__version__ = "0.1.0"
