"""Exception types shared across the engines."""


class LeftspecError(Exception):
    """Base class for all library errors."""


class ConfigError(LeftspecError):
    """Raised on config parse or schema violations (CLI exit code 2)."""


class EngineError(LeftspecError):
    """Raised when a numerical engine fails (CLI exit code 3)."""

    def __init__(self, module, message):
        self.module = module
        super().__init__(f"{module}: {message}")


class IntegrationError(EngineError):
    """ODE propagation failed (step-size underflow or non-finite state)."""

    def __init__(self, message):
        super().__init__("quasi_ode", message)


class PositivityError(LeftspecError):
    """The discretized quadratic form is not positive definite (CLI exit code 4)."""

    def __init__(self, min_eig):
        self.min_eig = min_eig
        super().__init__(
            f"stiffness matrix is not positive definite (min eigenvalue {min_eig:.6e}); "
            "the left-definiteness hypothesis fails"
        )
