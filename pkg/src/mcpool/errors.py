"""Exception types raised by the public API."""


class McpoolError(Exception):
    """Base class for all library errors."""


class GraphConstructionError(McpoolError, ValueError):
    """Invalid edge list or graph metadata."""


class IndexOutOfRangeError(GraphConstructionError):
    pass


class SelfLoopError(GraphConstructionError):
    pass


class NegativeWeightError(GraphConstructionError):
    pass


class DuplicateEdgeError(GraphConstructionError):
    pass


class MalformedHeaderError(McpoolError, ValueError):
    pass


class EdgeCountMismatchError(McpoolError, ValueError):
    pass


class InvalidSpecError(McpoolError, ValueError):
    pass


class InvalidParamsError(McpoolError, ValueError):
    pass


class MissingFeaturesError(McpoolError, ValueError):
    pass


class ZeroNormFeatureError(McpoolError, ValueError):
    pass


class ShapeMismatchError(McpoolError, ValueError):
    pass


class UnknownKindError(McpoolError, ValueError):
    pass


class DetachedLossError(McpoolError, RuntimeError):
    pass


class NonFiniteValueError(McpoolError, FloatingPointError):
    """A forward value contained NaN or Inf; the step must be aborted."""


class NonDeterministicFunctionError(McpoolError, RuntimeError):
    pass


class EmptyGraphError(McpoolError, ValueError):
    pass


class LengthMismatchError(McpoolError, ValueError):
    pass


class DivergedLossError(McpoolError, RuntimeError):
    pass


class TooLargeError(McpoolError, ValueError):
    pass


class InvalidRatioError(McpoolError, ValueError):
    pass


class InvalidSupernodeError(McpoolError, ValueError):
    pass


class SourceNotFoundError(McpoolError, ValueError):
    pass


class MissingLabelsError(McpoolError, ValueError):
    pass


class BadMasksError(McpoolError, ValueError):
    pass


class EmptyDatasetError(McpoolError, ValueError):
    pass
