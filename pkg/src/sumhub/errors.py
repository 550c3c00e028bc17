"""Exception hierarchy shared by every layer.

Each exception carries a stable machine ``code`` that is reused verbatim as
the wire-level error code, so clients can match on it across releases.
"""

from __future__ import annotations


class SumHubError(Exception):
    """Base class for all repository errors."""

    code = "Error"

    def __init__(self, message: str, subject: str | None = None):
        super().__init__(message)
        self.message = message
        self.subject = subject


class MetamodelSyntaxError(SumHubError):
    """Malformed schema source. Reports the first offending position."""

    code = "SyntaxError"

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class MetamodelSchemaError(SumHubError):
    """Semantic schema defects, collected exhaustively over the whole source."""

    code = "SchemaError"

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        listing = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"{len(self.diagnostics)} schema error(s): {listing}")


class PermissionDenied(SumHubError):
    code = "PermissionDenied"


class ConformanceRejected(SumHubError):
    """A changeset would leave the repository out of schema; nothing was applied."""

    code = "ConformanceRejected"

    def __init__(self, violations):
        self.violations = list(violations)
        listing = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s): {listing}")


class UnknownItem(SumHubError):
    code = "UnknownItem"


class DanglingDelete(SumHubError):
    code = "DanglingDelete"


class NotFound(SumHubError):
    code = "NotFound"


class RevisionOutOfRange(SumHubError):
    code = "RevisionOutOfRange"


class InvalidChangeSet(SumHubError):
    code = "InvalidChangeSet"


class LockHeldByOther(SumHubError):
    code = "LockHeldByOther"

    def __init__(self, message: str, holder: str, subject: str | None = None):
        super().__init__(message, subject=subject)
        self.holder = holder


class UnknownSession(SumHubError):
    code = "UnknownSession"


class UnresolvedReference(SumHubError):
    code = "UnresolvedReference"


class UnsupportedVerbForView(SumHubError):
    code = "UnsupportedVerbForView"


class FormatMismatch(SumHubError):
    code = "FormatMismatch"


class CorruptLog(SumHubError):
    """The changeset log is damaged beyond the torn-tail case."""

    code = "CorruptLog"

    def __init__(self, message: str, last_good_rev: int):
        super().__init__(f"{message} (last good revision: {last_good_rev})")
        self.last_good_rev = last_good_rev


class BindFailure(SumHubError):
    code = "BindFailure"
