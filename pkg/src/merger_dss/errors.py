"""Exception hierarchy shared by every engine.

Each class carries a stable machine-readable ``code`` so the CLI and the
HTTP service can map any engine failure to exactly one ApiError code.
"""


class MergerDssError(Exception):
    code = "internal"

    def __init__(self, message: str, *, step: str | None = None):
        super().__init__(message)
        self.step = step


class FactorError(MergerDssError):
    code = "factor"


class StateMismatchError(FactorError):
    code = "state-mismatch"


class ScopeError(FactorError):
    code = "scope"


class ImpossibleEvidenceError(MergerDssError):
    code = "impossible-evidence"


class ParseError(MergerDssError):
    code = "parse-error"

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class DocumentError(MergerDssError):
    """Structural problem in a network/class/scenario document."""

    code = "document"


class UnknownNodeError(MergerDssError):
    code = "unknown-node"


class UnknownStateError(MergerDssError):
    code = "unknown-state"


class EvidenceError(MergerDssError):
    code = "malformed-evidence"


class CompositionError(MergerDssError):
    """Unresolvable class, bad binding, or instance cycle while flattening."""

    code = "composition"


class DecisionError(MergerDssError):
    code = "decision"


class GuardExceededError(MergerDssError):
    code = "guard-exceeded"


class DatasetError(MergerDssError):
    code = "dataset"


class SchemaMismatchError(DatasetError):
    code = "schema-mismatch"


class ConstraintError(MergerDssError):
    code = "constraint-contradiction"


class InsufficientDataError(MergerDssError):
    code = "insufficient-data"


class ScenarioError(MergerDssError):
    code = "scenario"


class UnknownModelError(MergerDssError):
    code = "unknown-model"


class UnknownSessionError(MergerDssError):
    code = "unknown-session"
