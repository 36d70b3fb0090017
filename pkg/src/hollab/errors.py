"""Exception types raised across the package."""


class HollabError(Exception):
    """Base class for all package errors."""


class GameError(HollabError, ValueError):
    """Malformed game or profile. ``player`` names the offending player (0-based) when known."""

    def __init__(self, message, player=None):
        if player is not None:
            message = f"player {player + 1}: {message}"
        super().__init__(message)
        self.player = player


class EquilibriumError(HollabError):
    """Root-finding for a completely mixed equilibrium failed."""

    def __init__(self, message, residual=None, profile=None):
        super().__init__(message)
        self.residual = residual
        self.profile = profile


class DimensionError(HollabError, ValueError):
    pass


class DivergenceError(HollabError):
    """Integration produced a non-finite or exploding state."""

    def __init__(self, message, t, last_state):
        super().__init__(message)
        self.t = t
        self.last_state = last_state


class AnalysisError(HollabError):
    """A linear-analysis question is ill-posed for the given plant."""


class ConfigError(HollabError, ValueError):
    pass
