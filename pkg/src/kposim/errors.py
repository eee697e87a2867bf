"""Exception types shared across the package."""


class KposimError(Exception):
    """Base class for all package errors."""


class SpaceMismatchError(KposimError):
    """Operands live on different truncated Fock spaces."""


class TruncationError(KposimError):
    """Requested state carries too much weight above the Fock cutoff."""


class NotHermitianError(KposimError):
    """Operator expected Hermitian is not, beyond tolerance."""


class VanishingGapError(KposimError):
    """Energy denominator too small for a meaningful metric."""


class SingularTwoPhotonError(KposimError):
    """An intermediate-level denominator in the second-order sum vanishes."""


class InconclusiveEstimateError(KposimError):
    """Dispersion minimum sits on the sweep boundary; range too narrow."""


class IntegrationError(KposimError):
    """Propagation failed (NaN, step-size guard, unsupported operators)."""


class ConfigError(KposimError):
    """Run configuration is malformed or violates a physical constraint."""
