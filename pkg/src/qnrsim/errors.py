class QnrError(Exception):
    """Base class for all package errors."""


class ParameterError(QnrError, ValueError):
    pass


class TopologyError(QnrError, ValueError):
    pass


class FlowError(QnrError, ValueError):
    pass


class RoutingError(QnrError, ValueError):
    pass


class PathDecodeError(RoutingError):
    pass


class GuardExceeded(QnrError):
    pass
