"""Exception types shared across the toolkit."""


class MadstudyError(Exception):
    """Base class for every error raised by this package."""


# imaging


class UnreadableFile(MadstudyError):
    """The file is missing, truncated, or not decodable at all."""


class UnsupportedFormat(MadstudyError):
    """The file decoded but is not an 8-bit PNG or JPEG."""


# metrics


class DimensionMismatch(MadstudyError):
    """Two images being compared do not share the same dimensions."""


class ImageTooSmall(MadstudyError):
    """The image is smaller than the SSIM analysis window."""


class DescriptorMismatch(MadstudyError):
    """Feature vectors from different extractors (or lengths) were mixed."""


class MissingCandidate(MadstudyError):
    """An external feature/distance file lacks an entry for a pool candidate."""


class LengthMismatch(MadstudyError):
    """A feature row does not match the length declared in the manifest header."""


class ValidationError(MadstudyError):
    """A manifest or data file violates its format contract."""


# selection


class PoolExhausted(MadstudyError):
    """Fewer eligible candidates remain than picks requested."""


# study


class IncompleteSelections(MadstudyError):
    """Selection results do not cover every method pair with equal K."""


class UnknownSubject(MadstudyError):
    """The subject identifier is malformed or not usable."""


class UnknownTrial(MadstudyError):
    """A vote references a trial id absent from the schedule."""


class InvalidChoice(MadstudyError):
    """A vote names a method or position inconsistent with its trial."""


class DuplicateVote(MadstudyError):
    """This subject already voted on this trial."""


class CorruptLog(MadstudyError):
    """A vote-log line failed to parse; carries the offending line number."""


# ranking


class DisconnectedComparisonGraph(MadstudyError):
    """The observed comparisons do not connect all methods."""


class DegenerateInput(MadstudyError):
    """Rank correlation is undefined for a constant vector."""


# service


class MissingOutputs(MadstudyError):
    """Some candidates lack an enhanced output for one or more methods."""


class EmptyPool(MadstudyError):
    """The pool directory contains no input images."""


class PhaseError(MadstudyError):
    """The operation is not allowed in the study's current phase."""
