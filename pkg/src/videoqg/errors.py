"""Exception types shared across the package."""


class ScenarioError(ValueError):
    """A model was asked to run in an input scenario it does not support."""


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


class NumericError(ArithmeticError):
    """Non-finite values appeared during training."""
