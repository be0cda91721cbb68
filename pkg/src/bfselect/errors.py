"""Exception hierarchy shared across the package.

The three branches map onto the CLI exit codes: input problems (bad files,
bad shapes, infeasible configs) exit 1, numeric failures exit 2, and blown
enumeration budgets exit 3.
"""


class BfselectError(Exception):
    """Base class for all package errors."""


class InputError(BfselectError, ValueError):
    """Malformed or inconsistent user input."""


class ConstantColumnError(InputError):
    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} is constant after centering; "
                         "it cannot be scaled to squared norm n")


class InfeasibleConfigError(InputError):
    """Generator configuration whose constraints cannot be met jointly."""


class NumericError(BfselectError, ArithmeticError):
    """Numerical failure in a computation that should have succeeded."""


class SingularModelError(NumericError):
    """Rank-deficient design submatrix for the requested model."""


class DegenerateResponseError(NumericError):
    """Constant response: the centered total sum of squares is zero."""


class CollinearColumnError(NumericError):
    """Candidate column numerically inside the current fitted span."""


class IndeterminateComparisonError(NumericError):
    """Both models fit perfectly; the Bayes factor is 0/0."""


class QuadratureError(NumericError):
    """Adaptive quadrature failed to reach the requested accuracy."""

    def __init__(self, message: str, estimate: float | None = None):
        self.estimate = estimate
        super().__init__(message)


class BudgetError(BfselectError):
    """Work amount exceeds a configured hard budget."""


class EnumerationBudgetError(BudgetError):
    """Model-space enumeration would exceed the enumeration budget."""
