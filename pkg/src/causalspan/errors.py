"""Exception types shared across the toolkit."""


class CausalSpanError(Exception):
    """Base class for all toolkit errors."""


class MalformedAnnotation(CausalSpanError):
    """A tagged string has unbalanced, duplicated, or missing role tags.

    ``position`` is the character offset in the raw tagged string where the
    problem was detected, or -1 when it applies to the string as a whole.
    """

    def __init__(self, message: str, position: int = -1):
        super().__init__(message)
        self.position = position


class SpanAlignmentError(CausalSpanError):
    """A character range could not be cleanly aligned to token boundaries."""


class ConsistencyError(CausalSpanError):
    """Rows of one sentence disagree (clean text, causal flag, or count)."""


class FormatError(CausalSpanError):
    """A file does not match its declared schema or binary layout."""


class TruncatedFile(FormatError):
    """A binary file ended in the middle of a record."""


class VersionError(FormatError):
    """A model or data file was written by an incompatible format version."""


class OverlapError(CausalSpanError):
    """Two spans of the same relation share tokens."""


class TooManyRelations(CausalSpanError):
    """More than three relations reached the label stacker."""


class DimensionMismatch(CausalSpanError):
    """Sequence lengths or array dimensions do not agree."""


class NoFeasiblePath(CausalSpanError):
    """A transition mask admits no label sequence for the input."""


class UnknownLabel(CausalSpanError):
    """A gold label lies outside the model's label vocabulary."""


class EmptyCorpus(CausalSpanError):
    """Training was started on a corpus with no usable sentences."""


class DivergenceError(CausalSpanError):
    """The training loss became non-finite."""


class SingleClassCorpus(CausalSpanError):
    """Binary training data contains only one class."""


class NoMultiRelationInstances(CausalSpanError):
    """Oversampling requested but no multi-relation sentences exist."""


class EmptyLexicon(CausalSpanError):
    """A required slot lexicon or synonym lexicon is empty."""


class MissingPrediction(CausalSpanError):
    """A gold-causal sentence has no prediction record."""
