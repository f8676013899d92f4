"""Exception hierarchy shared across the package."""


class AgentGWOError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(AgentGWOError, ValueError):
    """Invalid configuration or precondition on user-supplied parameters."""


class ScheduleError(ConfigurationError):
    """Invalid iteration schedule (T_max = 0 or t > T_max)."""


class ShapeError(AgentGWOError, ValueError):
    """Vectors or batches whose sizes do not line up."""


class EvaluationError(AgentGWOError):
    """An objective or fitness evaluation could not produce a usable value.

    ``position`` holds the offending input (a wolf position, an agent id, ...)
    and ``partial`` any results gathered before the failure.
    """

    def __init__(self, message, position=None, partial=None):
        super().__init__(message)
        self.position = position
        self.partial = partial


class DatasetError(AgentGWOError, ValueError):
    """Malformed, empty or inconsistent dataset input."""


class LeakageError(ConfigurationError):
    """Held-out test items overlap with the optimization pool."""


class ProviderError(AgentGWOError):
    """A generation backend failed after all retries."""


class TransientProviderError(ProviderError):
    """Retryable backend failure; ``retry_after`` is in seconds when known."""

    def __init__(self, message, retry_after=None, status_code=None):
        super().__init__(message)
        self.retry_after = retry_after
        self.status_code = status_code


class ProtocolError(ProviderError):
    """Backend answered with a payload that does not match the wire schema."""


class RunAborted(AgentGWOError):
    """The optimization loop stopped early; state is resumable from ``checkpoint``."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
