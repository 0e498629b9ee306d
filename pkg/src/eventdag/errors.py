"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` that the CLI prints
alongside the human message.
"""


class EventDagError(Exception):
    code = "ERROR"


class StructureError(EventDagError):
    """Dangling ids, missing endpoints, spans without tokens."""

    code = "STRUCTURE_ERROR"


class ContractError(EventDagError):
    """An operation was called outside its precondition."""

    code = "CONTRACT_VIOLATION"


class ConfigError(EventDagError):
    code = "CONFIG_ERROR"


class ParseError(EventDagError):
    code = "PARSE_ERROR"

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class IntegrityError(EventDagError):
    """Annotation span text disagrees with the document text."""

    code = "INTEGRITY_ERROR"


class FormatError(EventDagError):
    """Model file is not ours or is truncated."""

    code = "FORMAT_ERROR"


class VersionError(EventDagError):
    code = "VERSION_ERROR"


class NonFiniteError(EventDagError):
    code = "NON_FINITE"


class SizeGuardError(EventDagError):
    code = "SIZE_GUARD"
