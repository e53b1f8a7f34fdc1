"""Exception types shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator-specific errors."""


class ConfigError(SimulationError):
    """A scenario configuration is invalid. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class IncompatibleModelsError(SimulationError):
    """Two models do not share the same layer shapes."""


class DegenerateLayerError(SimulationError):
    """A layer has zero norm, so its cosine contribution is undefined."""


class InsufficientDataError(SimulationError):
    """Dataset too small for the requested partition."""


class DivergenceError(SimulationError):
    """Local training produced a non-finite loss or parameters."""


class GenerationFailureError(SimulationError):
    """Random topology generation could not reach connectivity."""


class InsufficientCandidatesError(SimulationError):
    """Krum needs at least f_estimate + 3 candidates."""


class NeighborExpansionError(SimulationError):
    """Neighbor exploration could not supply enough aggregation candidates."""


class ProtocolViolationError(SimulationError):
    """A message was accounted between non-adjacent nodes."""
