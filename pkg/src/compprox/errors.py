"""Exception types raised by compprox."""


class CompProxError(Exception):
    """Base class for all package errors."""


class DimensionError(CompProxError, ValueError):
    """Operand sizes do not conform."""


class NonFiniteError(CompProxError, ValueError):
    """NaN or Inf found where finite values are required."""


class InvalidGroupsError(CompProxError, ValueError):
    """A group system or block partition violates its invariants."""


class UnsupportedPenaltyError(CompProxError, TypeError):
    """The requested operation is not available for this penalty kind."""


class InadmissibleStepError(CompProxError, ValueError):
    """The fixed-point step lam lies outside (0, 2/lambda_max].

    Attributes
    ----------
    lam : float
        The rejected step.
    lambda_max : float
        Largest eigenvalue of the Gram operator the bound was computed from.
    """

    def __init__(self, lam, lambda_max):
        self.lam = float(lam)
        self.lambda_max = float(lambda_max)
        upper = "inf" if lambda_max <= 0 else f"{2.0 / lambda_max:.17g}"
        super().__init__(
            f"lam={self.lam:.17g} outside admissible interval (0, {upper}] "
            f"(lambda_max={self.lambda_max:.17g})"
        )

    @property
    def upper(self):
        return float("inf") if self.lambda_max <= 0 else 2.0 / self.lambda_max


class ConvergenceError(CompProxError, RuntimeError):
    """An iterative routine that must converge did not."""


class ManifestError(CompProxError, ValueError):
    """A run manifest is malformed; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
