"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid mesh, time grid or experiment configuration."""


class DegenerateGradientError(ArithmeticError):
    """The spatial gradient of the level set vanishes where a normal is needed."""


class DegenerateCutError(ValueError):
    """All vertex values of a triangle are zero."""


class DeformationError(RuntimeError):
    """The mesh deformation inverted an element."""


class InversionError(RuntimeError):
    """Newton inversion of the mesh deformation failed."""


class PointLocationError(LookupError):
    """A point could not be located in the active region."""


class UnsupportedSceneError(ValueError):
    """The scene lacks data required by the requested operation."""


class SolveError(RuntimeError):
    """A slab system could not be solved."""

    def __init__(self, message, slab=None):
        super().__init__(message if slab is None else f"slab {slab}: {message}")
        self.slab = slab


class EmptyActiveSetError(SolveError):
    """No triangle is cut in a slab; the surface has left the domain."""
