"""Exception hierarchy shared across the service."""


class LabelForgeError(Exception):
    """Base class for all domain-level failures."""

    code = "error"


class ValidationFailure(LabelForgeError):
    """Project or upload configuration violated one or more invariants."""

    code = "validation_failed"

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors) or "validation failed")


class IllegalTransition(LabelForgeError):
    code = "illegal_transition"


class PermissionDenied(LabelForgeError):
    code = "permission_denied"


class NotFound(LabelForgeError):
    code = "not_found"


class StateConflict(LabelForgeError):
    """Operation targeted an entity in the wrong state (stale replay, resolved
    assignment, immutable setting, ...)."""

    code = "conflict"


class UploadError(LabelForgeError):
    """Fatal ingest problem: bad encoding or missing mandatory column."""

    code = "upload_error"


class EmptyVocabulary(LabelForgeError):
    code = "empty_vocabulary"


class DegenerateTrainingSet(LabelForgeError):
    """Fewer than two distinct classes in the training data."""

    code = "degenerate_training_set"


class ModelUnavailable(LabelForgeError):
    code = "model_unavailable"


class BatchIncomplete(LabelForgeError):
    code = "batch_incomplete"


class CorpusExhausted(LabelForgeError):
    code = "corpus_exhausted"


class AuthenticationError(LabelForgeError):
    code = "unauthenticated"
