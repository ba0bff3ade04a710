"""Exception types shared across the package.

The CLI maps each class to a distinct exit code.
"""


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


class CapacityError(RuntimeError):
    """A requested exact computation exceeds the configured size limit (exit code 3)."""


class InvariantViolation(AssertionError):
    """A runtime consistency check failed (exit code 4)."""
