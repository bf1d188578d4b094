"""Exception hierarchy shared across the package.

Two top-level categories mirror the CLI exit codes: validation problems
(bad input data, bad configuration) and numerical failures (non-convergence,
degenerate estimands).
"""


class ValidationError(ValueError):
    """Invalid input data or configuration; maps to CLI exit code 2."""


class NumericalError(RuntimeError):
    """Numerical failure such as non-convergence or a degenerate estimand;
    maps to CLI exit code 3."""


class ConvergenceError(NumericalError):
    """An iterative fit failed to converge."""


class IdentifiabilityError(NumericalError):
    """A normalization constraint cannot be imposed on the data at hand
    (e.g. the anchor coefficient is indistinguishable from zero)."""
