"""Exception hierarchy shared across the package."""


class FforgeError(Exception):
    """Base class for every error raised by fforge."""


class NonFiniteInput(FforgeError, ValueError):
    pass


class ShapeMismatch(FforgeError, ValueError):
    pass


class EmptyDataset(FforgeError):
    pass


class MalformedIndex(FforgeError):
    pass


class LandmarkOutOfBounds(FforgeError, ValueError):
    pass


class UnknownVideo(FforgeError, KeyError):
    pass


class IOFailure(FforgeError, OSError):
    pass


class InvalidParams(FforgeError, ValueError):
    pass


class InvalidQuality(FforgeError, ValueError):
    pass


class DivergedTraining(FforgeError, RuntimeError):
    pass


class PoolExhausted(FforgeError, RuntimeError):
    pass


class UnknownMember(FforgeError, IndexError):
    pass


class MissingPool(FforgeError, ValueError):
    pass


class NoGradientCapability(FforgeError, TypeError):
    pass


class SingleClassInput(FforgeError, ValueError):
    pass


class EmptyVideo(FforgeError, ValueError):
    pass


class ConfigError(FforgeError, ValueError):
    pass
