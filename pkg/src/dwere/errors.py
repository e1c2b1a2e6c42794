class DwereError(Exception):
    """Base class for errors raised by this package."""


class OutOfWindowError(DwereError, IndexError):
    """A site outside the materialized window was read or reached."""

    def __init__(self, site, window, t=None):
        self.site = site
        self.window = window
        self.t = t
        where = f" at t={t}" if t is not None else ""
        super().__init__(f"site {site} outside window {window[0]}:{window[1]}{where}")


class WindowTooLarge(DwereError, MemoryError):
    def __init__(self, requested, limit):
        self.requested = requested
        self.limit = limit
        super().__init__(f"window needs {requested} cookies, limit is {limit}")


class PreconditionError(DwereError, ValueError):
    pass


class NotInDomainError(DwereError, ValueError):
    """An environment is outside the domain where a relation is defined."""
