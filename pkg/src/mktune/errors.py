"""Exception hierarchy shared by every module."""


class MKTuneError(Exception):
    """Base class for all errors raised by mktune."""


class InvalidInputError(MKTuneError, ValueError):
    """Arguments violate an operation's preconditions."""


class RefusalError(MKTuneError):
    """The operation declines to run (oversized grid, nothing left to refine)."""


class IntegrityError(MKTuneError):
    """A performance database would become inconsistent."""


class ParseError(MKTuneError, ValueError):
    """A file could not be parsed.

    ``line`` and ``column`` are 1-based when known.
    """

    def __init__(self, message, path=None, line=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.column = column
