"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI:
  2 -> scenario / validation problems (bad input)
  3 -> numerical failures (CFL, divergence, non-convergence)
  4 -> I/O failures
"""


class FbsdeLabError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ScenarioError(FbsdeLabError):
    """Scenario file missing, malformed, or schema-invalid."""

    exit_code = 2


class ExpressionSyntaxError(ScenarioError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownVariableError(ScenarioError):
    def __init__(self, name, arity):
        super().__init__(f"variable '{name}' is not legal for {arity} coefficients")
        self.name = name
        self.arity = arity


class ExpressionDomainError(FbsdeLabError):
    """Evaluation produced a non-finite value (division by zero, sqrt of a negative, ...)."""

    exit_code = 3


class NumericalError(FbsdeLabError):
    exit_code = 3


class CflViolationError(NumericalError):
    def __init__(self, step_index, time, max_speed, dt, dx):
        super().__init__(
            f"CFL bound violated at time node {step_index} (s={time:g}): "
            f"max|f|*dt = {max_speed * dt:g} > dx = {dx:g}"
        )
        self.step_index = step_index
        self.max_speed = max_speed


class NonFiniteFieldError(NumericalError):
    def __init__(self, step_index, time):
        super().__init__(f"field slice became non-finite at time node {step_index} (s={time:g})")
        self.step_index = step_index


class ShootingError(NumericalError):
    pass


class PicardDivergenceError(NumericalError):
    def __init__(self, message, contraction_log):
        super().__init__(message)
        self.contraction_log = list(contraction_log)


class SimulationExitError(NumericalError):
    def __init__(self, n_exited, n_paths):
        super().__init__(
            f"{n_exited} of {n_paths} paths left the spatial box "
            f"({100.0 * n_exited / n_paths:.3f}% > 0.1% allowed)"
        )
        self.n_exited = n_exited
        self.n_paths = n_paths


class SingularDispersionError(NumericalError):
    pass


class OutputError(FbsdeLabError):
    exit_code = 4
