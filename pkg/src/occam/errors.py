"""Exception types shared across the provisioning and simulation modules."""


class OccamError(Exception):
    """Base class for all domain errors raised by this package."""


class SchemaError(OccamError):
    """A manifest or other user document violates its closed schema."""


class ValidationFailed(OccamError):
    """An application manifest parsed but failed semantic validation."""

    def __init__(self, report):
        self.report = report
        issues = "; ".join(f"{sev}: {msg}" for sev, msg in report.issues)
        super().__init__(f"manifest validation failed: {issues}")


class CorruptState(OccamError):
    """Live placements violate the capacity invariant."""


class CorruptLog(OccamError):
    """An event log failed structural validation or deterministic replay."""


class InsufficientResources(OccamError):
    """No combination of offers can satisfy a placement request batch."""


class AlreadyReleased(OccamError):
    """A partition was released twice."""


class FarmNotRunning(OccamError):
    """A farm operation was issued against a farm that is not running."""


class NoIdleExecutors(OccamError):
    """A shrink request exceeds the number of idle executors."""


class Starvation(OccamError):
    """A queued job can never fit any executor of its farm."""


class SessionStopped(OccamError):
    """A session operation was issued against a stopped session."""


class NotEnoughNodes(OccamError):
    """A benchmark scenario requests more nodes than its pool holds."""


class Uncalibrated(OccamError):
    """The metadata model was used before a rate was calibrated."""


class DuplicateName(OccamError):
    """A tenant with this name already exists."""


class InvalidName(OccamError):
    """A tenant name does not match the allowed pattern."""


class UnknownTenant(OccamError):
    """The tenant named in a manifest is not registered."""


class UnknownApplication(OccamError):
    """No application with this id has been submitted."""


class UnknownSession(OccamError):
    """No session with this id exists."""
