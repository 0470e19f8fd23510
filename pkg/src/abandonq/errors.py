"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1,
infeasible models exit 2, numerical failures exit 3.
"""


class AbandonqError(Exception):
    """Base class for all package errors."""


class ConfigError(AbandonqError):
    """Bad user input (schema, admissibility, domain)."""


class SchemaError(ConfigError):
    def __init__(self, message, line=None, field=None):
        self.message = message
        self.line = line
        self.field = field
        super().__init__(message)

    def __str__(self):
        where = []
        if self.field is not None:
            where.append(f"field '{self.field}'")
        if self.line is not None:
            where.append(f"line {self.line}")
        return self.message + (f" ({', '.join(where)})" if where else "")


class Inadmissible(ConfigError):
    """Distribution or parameters outside the smoothness/boundedness class."""


class ScvBelowOne(ConfigError):
    """A two-phase hyperexponential cannot match a squared CV below one."""


class OutOfDomain(ConfigError):
    """Argument outside the domain of a piecewise-linear function."""


class UnboundedVariation(ConfigError):
    """Performance function has non-finite values, so no finite variation."""


class InfeasibleBox(ConfigError):
    """Per-queue rate box is empty."""


class Infeasible(AbandonqError):
    """Optimization model has no feasible point."""


class NumericalFailure(AbandonqError):
    """Generic numerical breakdown (tiny pivot, negative probabilities...)."""


class QuadratureFailure(NumericalFailure):
    pass


class NotConverged(NumericalFailure):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class SingularSystem(NumericalFailure):
    pass


class NodeLimit(NumericalFailure):
    pass


class DegenerateLp(NumericalFailure):
    pass
