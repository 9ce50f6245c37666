"""Exception types shared across the simulator."""


class NumericalFailure(RuntimeError):
    """An iterative numerical routine failed to converge within its cap."""


class InvalidStateError(RuntimeError):
    """Simulation state became non-finite; carries the round it happened at."""

    def __init__(self, message: str, round_index: int | None = None):
        if round_index is not None:
            message = f"{message} (round {round_index})"
        super().__init__(message)
        self.round_index = round_index


class AttackOutputError(ValueError):
    """A custom attack callback produced a non-finite or mis-shaped vector."""


class NotFittableError(ValueError):
    """Rate fitting requested on a series with nonpositive tail values."""


class ConfigError(ValueError):
    """Experiment configuration could not be parsed or failed validation."""
