"""Exception hierarchy shared by every layer of the checker."""


class PtelError(Exception):
    """Base class for all errors raised by this package."""


class SyntaxProblem(PtelError, ValueError):
    """Malformed input text.  Carries a 1-based line/column when known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message = message
        self.line = line
        self.col = col
        where = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(f"{message}{where}")


class FormulaError(PtelError, ValueError):
    """A formula is well-formed syntactically but not usable where it was given."""


class ModelError(PtelError):
    """The program or its execution violated a declared constraint."""


class BudgetExceeded(PtelError):
    """An explicit resource cap was hit.  Never silently truncated."""


class KernelError(PtelError):
    """A derivation does not instantiate the schema of the rule it names."""
