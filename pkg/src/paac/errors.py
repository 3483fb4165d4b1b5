"""Exception types shared across the engine."""


class ConfigError(ValueError):
    """Invalid configuration or shape mismatch. Raised before any work starts."""


class TrainingDivergence(FloatingPointError):
    """A loss, gradient or parameter became non-finite."""

    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


class ContractViolation(RuntimeError):
    """An object was used in a state its contract forbids (e.g. stepping a done env)."""


class PoolError(RuntimeError):
    """A worker failed; the pool is poisoned and refuses further steps."""
