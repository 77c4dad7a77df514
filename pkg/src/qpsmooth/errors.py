"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class QPSmoothError(Exception):
    code = "error"

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class UnsupportedOrderError(QPSmoothError):
    code = "unsupported_order"


class NoOrbitError(QPSmoothError):
    code = "no_orbit"


class DomainError(QPSmoothError):
    code = "domain"


class IntegrationError(QPSmoothError):
    code = "integration_failure"


class UndefinedAngleError(QPSmoothError):
    code = "undefined_angle"


class ResolutionError(QPSmoothError):
    code = "resolution"


class InsufficientRangeError(QPSmoothError):
    code = "insufficient_range"


class NonConvergenceError(QPSmoothError):
    code = "non_convergence"


class RescalingSingularError(QPSmoothError):
    code = "rescaling_singular"


class SmallDenominatorError(QPSmoothError):
    code = "small_denominator"


class GridMismatchError(QPSmoothError):
    code = "grid_mismatch"


class AccuracyError(QPSmoothError):
    code = "accuracy"


class ContractViolation(QPSmoothError):
    code = "contract_violation"


class OrderRegressionError(QPSmoothError):
    code = "order_regression"


class MaxStepsReached(QPSmoothError):
    code = "max_steps"


class ConfigError(QPSmoothError):
    code = "config"


class GateViolation(QPSmoothError):
    code = "gate_violation"
