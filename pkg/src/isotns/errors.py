"""Exception types shared across the package."""

from __future__ import annotations


class IsoTNSError(Exception):
    """Base class for all package errors."""


class DomainError(IsoTNSError, ValueError):
    """A parameter lies outside its allowed domain."""


class ShapeError(IsoTNSError, ValueError):
    """An array has the wrong shape."""


class ValidationError(IsoTNSError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class PreconditionError(IsoTNSError, ValueError):
    """An operation was called on an object that violates its precondition."""


class ResourceError(IsoTNSError, MemoryError):
    """A request exceeds the configured memory or size budget."""


class ConsistencyError(IsoTNSError, RuntimeError):
    """An internal identity that must hold exactly was found violated."""


class ExportError(IsoTNSError, ValueError):
    """A program cannot be expressed in the requested output format."""


class SolverError(IsoTNSError, RuntimeError):
    """An iterative eigensolver did not converge."""


class ResamplingError(IsoTNSError, RuntimeError):
    """A conditional sampling step broke down numerically."""


class UnsupportedObservableError(IsoTNSError, ValueError):
    """The observable is not a tensor product of single-site operators."""
