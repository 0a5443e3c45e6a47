"""Exception types shared across the package."""


class PEnergyError(Exception):
    """Base class for all package errors."""


class DomainError(PEnergyError, ValueError):
    """Invalid input: missing vertex values, mismatched vertex sets, bad parameters."""


class StructureError(PEnergyError, ValueError):
    """Inconsistent self-similar structure data (gluing, symmetry generators)."""


class DegenerateFormError(PEnergyError, ValueError):
    """A minimization or ratio is ill-posed because a form is degenerate."""


class GuardError(PEnergyError, RuntimeError):
    """A size guard (vertex count, partition enumeration) would be exceeded."""


class SolverError(PEnergyError, RuntimeError):
    """The minimizer did not converge within its iteration budget."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
