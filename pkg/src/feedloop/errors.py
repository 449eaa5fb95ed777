"""Exception taxonomy. Every operational failure raises a FeedloopError subclass."""


class FeedloopError(Exception):
    """Base class for all errors raised by feedloop operations."""


# --- ingest ---

class MalformedExport(FeedloopError):
    """Export file is not JSON or lacks the 'messages' array."""


class StorageFailure(FeedloopError):
    """The append-only log could not be written."""


class InvalidQuery(FeedloopError):
    """Feed query with out-of-range page size or inverted time range."""


class UnknownMessage(FeedloopError):
    """Referenced (channel_id, message_id) was never ingested."""


# --- classify ---

class DegenerateDataset(FeedloopError):
    """Training input contains a single class."""


class SplitLeakage(FeedloopError):
    """A few-shot example was drawn from outside the train split."""


class Unparseable(FeedloopError):
    """No label token could be extracted from a completion."""


class ClientFailure(FeedloopError):
    """Text-completion client failed (network, timeout, exhausted script)."""


class MalformedTemplate(FeedloopError):
    """Prompt template does not contain {message} exactly once."""


# --- feedback ---

class DuplicateConflict(FeedloopError):
    """An OPEN conflict already exists for the message."""


class AlreadyResolved(FeedloopError):
    """The conflict was resolved earlier."""


class UnknownConflict(FeedloopError):
    """No conflict with the given id."""


class WindowTooSmall(FeedloopError):
    """Rating-task window holds fewer messages than requested."""


class ImplicitTrackingDisabled(FeedloopError):
    """Implicit events rejected: the deployment privacy switch is off."""


# --- goldset ---

class BadRatios(FeedloopError):
    """Split ratios are negative or do not sum to 1."""


class ConflictOpen(FeedloopError):
    """Gold example rejected while a conflict on the message is OPEN."""


class UnknownSnapshot(FeedloopError):
    """No dataset snapshot with the given id."""


# --- drift ---

class EmptyProfile(FeedloopError):
    """Divergence requested against a profile with zero tokens."""


class EmptyWindow(FeedloopError):
    """Drift check over an empty message window."""


# --- lifecycle ---

class EmptySplit(FeedloopError):
    """Evaluation split contains no examples."""


class SnapshotMismatch(FeedloopError):
    """Promotion gate fed reports from different snapshots or splits."""


class InsufficientTrainExamples(FeedloopError):
    """Train split cannot satisfy the requested per-class example count."""


class UnknownVersion(FeedloopError):
    """No version record with the given id."""


class InvalidTransition(FeedloopError):
    """Version status change not permitted from the current status."""


# --- service ---

class SchemaViolation(FeedloopError):
    """Log record payload does not validate against its schema version."""


class GapDetected(FeedloopError):
    """Log sequence numbers are not dense."""


class ConfigError(FeedloopError):
    """Configuration file or environment override is invalid."""
