"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid scenario, sweep or plan description."""


class ModelError(ArithmeticError):
    """A matrix required by an estimator is singular or not positive definite."""


class NotIdentifiableError(ModelError):
    """The composite Bob matrix is column-rank deficient."""
