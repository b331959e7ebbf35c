"""Exception types shared across the solver."""


class MinattError(Exception):
    """Base class for all solver errors."""


class OutOfHorizonError(MinattError):
    """Control law evaluated at a time outside [0, T]."""


class DivergenceError(MinattError):
    """A rollout state exceeded the configured magnitude bound."""


class SingularMassError(MinattError):
    """Mass matrix numerically singular; arm parameters are invalid."""


class RiccatiBlowUpError(MinattError):
    """Backward Riccati solution exceeded its norm bound or step size underflowed."""


class UnreachableTargetError(MinattError):
    """Requested end-effector target lies outside the arm workspace."""


class SupportOverflowError(MinattError):
    """Smoothed-delta support does not fit inside the phase-space box."""


class DegenerateGainError(MinattError):
    """All ellipticity probes have K @ dx == 0 (gain schedule identically zero)."""


class ConfigError(MinattError):
    """Configuration file failed to parse or validate."""
