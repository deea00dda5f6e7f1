"""Exception hierarchy shared across the package."""


class DischargeQaError(Exception):
    """Base class for every error this package raises on purpose."""


class InvalidNote(DischargeQaError):
    """Note text or section ranges are unusable."""


class ParseError(DischargeQaError):
    """An input document could not be parsed at all."""


class AnnotationError(DischargeQaError):
    """An annotated note violates a data-model invariant."""

    def __init__(self, note_id, reason):
        super().__init__(f"{note_id}: {reason}")
        self.note_id = note_id
        self.reason = reason


class UnknownTypeError(DischargeQaError):
    """An event, entity, or relation type name is not part of the schema."""


class InvalidPair(DischargeQaError):
    """Two spans cannot be marked as a relation candidate."""


class ExtractorUnavailable(DischargeQaError):
    """The external extractor endpoint could not be reached."""


class ExtractorProtocolError(DischargeQaError):
    """The external extractor answered with a malformed payload."""


class GenerationError(DischargeQaError):
    """Question generation failed for a trigger."""


class RetryableGenerationError(GenerationError):
    """Generation produced too little output; retrying may help."""


class AssemblyError(DischargeQaError):
    """A question set could not be assembled from its parts."""


class LlmUnavailable(DischargeQaError):
    """The language-model transport failed after its retries."""


class AuthError(DischargeQaError):
    """The language-model endpoint rejected our credentials."""


class FixtureMiss(DischargeQaError):
    """A replay transport has no recorded response for a request digest."""

    def __init__(self, digest):
        super().__init__(f"no recorded response for digest {digest}")
        self.digest = digest


class EmptyAnswer(DischargeQaError):
    """The patient submitted a blank answer."""


class ProtocolError(DischargeQaError):
    """An operation was attempted in a dialogue phase that forbids it."""


class SessionConfigError(DischargeQaError):
    """A session was configured in a way the condition does not allow."""


class ClozeFormatError(DischargeQaError):
    """A cloze test or cloze response sheet has the wrong shape."""


class RankingError(DischargeQaError):
    """A preference ranking is malformed or lacks the requested condition."""


class JudgeParseError(DischargeQaError):
    """A judge response did not contain the expected score object."""


class AggregationError(DischargeQaError):
    """There is nothing to aggregate."""


class ConsistencyError(DischargeQaError):
    """An event was persisted out of sequence."""


class StorageError(DischargeQaError):
    """The session store could not write durably."""


class NotFound(DischargeQaError):
    """No stored session or note has the requested id."""


class CorruptLog(DischargeQaError):
    """A session event log cannot be replayed into a legal session."""
