"""Exception hierarchy shared by all modules."""


class QHalfLineError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(QHalfLineError, ValueError):
    pass


class ShapeError(QHalfLineError, ValueError):
    pass


class DegenerateStateError(QHalfLineError, ValueError):
    pass


class AliasingError(QHalfLineError, ValueError):
    """A momentum lies beyond the Nyquist bound pi/dx of the grid."""


class ConfigurationError(QHalfLineError, ValueError):
    pass


class NumericalFailure(QHalfLineError, RuntimeError):
    pass


class InconclusiveClassification(QHalfLineError, RuntimeError):
    """A deficiency solution decays too slowly to be classified on the given length."""


class InvalidKernelError(QHalfLineError, ValueError):
    pass


class InvalidStateError(QHalfLineError, ValueError):
    pass


class InvalidDeviationError(QHalfLineError, ValueError):
    pass


class InvalidGroundError(QHalfLineError, ValueError):
    pass


class StructureError(QHalfLineError, ValueError):
    pass


class PictureError(QHalfLineError, ValueError):
    """Operation applied to an extended object in the wrong picture."""


class SingularKernelWarning(UserWarning):
    """The normalized kernel is undefined where the state vanishes."""


class BoundaryEffectWarning(UserWarning):
    pass


class SystematicErrorWarning(UserWarning):
    pass
