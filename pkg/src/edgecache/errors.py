"""Exception hierarchy shared by all edgecache modules."""


class EdgeCacheError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidParameterError(EdgeCacheError, ValueError):
    """A parameter violates an operation precondition."""


class InvalidCatalogError(InvalidParameterError):
    """Catalog of size zero or otherwise malformed."""


class OutOfValidityError(InvalidParameterError):
    """A closed-form approximation was used outside its stated regime."""


class TraceCorruptionError(EdgeCacheError):
    """A request trace references contents outside the catalog."""


class InvalidRankError(InvalidParameterError):
    pass


class NumericalFailureError(EdgeCacheError, ArithmeticError):
    pass


class DecodeFailureError(EdgeCacheError):
    """A user could not reconstruct its demanded file from a schedule."""


class InfeasiblePlacementError(InvalidParameterError):
    pass


class InstanceTooLargeError(EdgeCacheError):
    pass


class DegenerateDeploymentError(EdgeCacheError):
    pass
