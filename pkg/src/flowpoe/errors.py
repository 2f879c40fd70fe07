"""Exception hierarchy shared across the package."""


class FlowPoeError(Exception):
    """Base class for all package errors."""


class DomainError(FlowPoeError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """Evaluation requested at or beyond a schedule singularity."""


class NonFiniteError(FlowPoeError, FloatingPointError):
    """A NaN or infinity reached an operation that requires finite inputs."""


class ContractError(FlowPoeError, ValueError):
    """Caller violated a shape/consistency precondition."""


class NumericalError(FlowPoeError, ArithmeticError):
    """A linear-algebra routine failed beyond recoverable jitter."""


class ConfigError(FlowPoeError, ValueError):
    """Invalid or inconsistent configuration."""


class DegenerateDensityError(FlowPoeError, ValueError):
    """A density has no usable probability mass."""


class FormatError(FlowPoeError, ValueError):
    """A value cannot be rendered in the configured prompt number format."""


class ClientError(FlowPoeError, RuntimeError):
    """Transport-level failure talking to a completion service."""


class ProtocolError(FlowPoeError, RuntimeError):
    """A completion service response is missing required fields."""


class SamplingError(FlowPoeError, RuntimeError):
    """Autoregressive sampling failed to produce a parseable value."""


class TrainingError(FlowPoeError, RuntimeError):
    """Training diverged or could not proceed."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class IntegrationError(FlowPoeError, RuntimeError):
    """ODE integration produced a non-finite state."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
