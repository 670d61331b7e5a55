"""Exception hierarchy shared by all listenloop modules."""


class ListenLoopError(Exception):
    """Base class for every error raised by this package."""


# --- domain validation ---

class OutOfRangeTimes(ListenLoopError):
    """Annotation onset/offset violate the audio bounds."""


class UnknownClass(ListenLoopError):
    """Annotation references a class that is not in the ontology."""


class InactiveClass(ListenLoopError):
    """Annotation references an ontology class that has been retired."""


# --- ingestion ---

class MalformedFilename(ListenLoopError):
    """Chunk filename does not follow the node/timestamp convention."""


class BadMagic(ListenLoopError):
    """Sidecar stream does not start with the expected magic bytes."""


class TruncatedStream(ListenLoopError):
    """Sidecar stream ended before the declared record count was read."""


class DimensionMismatch(ListenLoopError):
    """Embedding vectors of differing dimension in one pool or sidecar."""


class ProbOutOfRange(ListenLoopError):
    """Top-1 probability outside [0, 1]."""


class ClassOutOfRange(ListenLoopError):
    """Top-1 class index not below the declared class count."""


# --- partitioning ---

class UnknownNode(ListenLoopError):
    """Window selection against a node the catalog has never seen."""


# --- engine ---

class BudgetExceedsPool(ListenLoopError):
    """Requested more bootstrap medoids than there are records."""


class EmptyMedoidPool(ListenLoopError):
    """Label propagation requires at least one medoid."""


class SingleClassDegenerate(ListenLoopError):
    """Committee classifier needs at least two distinct classes."""


class MissingSidecar(ListenLoopError):
    """An audio in the window has no embedding record loaded."""


class IterationInProgress(ListenLoopError):
    """Another iteration currently holds the window's single-writer lock."""


# --- consensus / ontology ---

class ForeignLabeler(ListenLoopError):
    """Annotation from a labeler outside the group under consensus."""


class DuplicateName(ListenLoopError):
    """Suggested ontology name collides with an active class."""


# --- persistence ---

class PersistenceFailure(ListenLoopError):
    """A storage transaction failed; nothing was written."""


class IncompatibleVersion(ListenLoopError):
    """Store schema version is newer than this build understands."""


class UnknownAudio(ListenLoopError):
    """Referenced audio is not in the catalog."""


class UnknownLabeler(ListenLoopError):
    """Referenced labeler is not registered."""


# --- simulator ---

class ConfigInvalid(ListenLoopError):
    """Simulation configuration failed validation."""
