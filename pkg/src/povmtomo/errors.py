"""Exception types shared across the package."""


class PovmtomoError(Exception):
    """Base class for package errors."""


class SizeGuardError(PovmtomoError):
    """A dense/enumeration path was asked for a system beyond its guard."""


class OverlapNotInvertibleError(PovmtomoError):
    """Operation requires an invertible POVM overlap matrix (e.g. Pauli-6 lacks one)."""


class ConvergenceError(PovmtomoError):
    """An iterative solver hit its iteration cap without reaching tolerance."""


class DivergenceError(PovmtomoError):
    """Training produced a non-finite objective."""


class FormatError(PovmtomoError):
    """On-disk artifact failed validation (bad magic, version, or shape)."""
