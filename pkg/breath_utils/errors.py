"""
Exception and warning types for the breath analysis pipeline
============================================================
Every error raised on purpose by the package derives from BreathAnalysisError,
so run scripts can tell pipeline failures apart from programming errors.
"""


class BreathAnalysisError(Exception):
    """Base class for all pipeline errors"""


# --- ingest -----------------------------------------------------------------

class IngestError(BreathAnalysisError, ValueError):
    """Problem with an acquisition file, a manifest or a stored container"""

    def __init__(self, message, path=None, line=None):
        self.path = str(path) if path is not None else None
        self.line = line
        location = ""
        if self.path is not None:
            location = f"{self.path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")


class MalformedRow(IngestError):
    pass


class NonMonotonicMz(IngestError):
    pass


class NegativeIntensity(IngestError):
    pass


class UnknownRange(IngestError):
    pass


class MzOutOfRange(IngestError):
    pass


class AcquisitionIndexGap(IngestError):
    pass


class DuplicatePatient(IngestError):
    pass


class MissingFile(IngestError):
    pass


class ManifestError(IngestError):
    pass


class IoFailure(IngestError):
    pass


class VersionMismatch(IngestError):
    pass


# --- preprocess -------------------------------------------------------------

class PreprocessError(BreathAnalysisError):
    pass


class EmptyInput(PreprocessError, ValueError):
    pass


class EmptySamples(PreprocessError, ValueError):
    pass


class NoPlateau(PreprocessError):
    """The TIC curve has no flat run of at least four acquisitions"""


class IndexOutOfRange(PreprocessError, IndexError):
    pass


class WindowTooLarge(PreprocessError, ValueError):
    pass


class MissingRange(PreprocessError, KeyError):
    pass


class InvalidFilterParams(PreprocessError, ValueError):
    pass


# --- augment ----------------------------------------------------------------

class AugmentError(BreathAnalysisError):
    pass


class EmptyRange(AugmentError, ValueError):
    pass


class EmptyCohort(AugmentError, ValueError):
    pass


# --- features / models ------------------------------------------------------

class AllFeaturesConstant(BreathAnalysisError, ValueError):
    pass


class SingleClass(BreathAnalysisError, ValueError):
    pass


class NonFiniteFeature(BreathAnalysisError, ValueError):
    pass


class WidthMismatch(BreathAnalysisError, ValueError):
    pass


class HeterogeneousMembers(BreathAnalysisError, ValueError):
    pass


# --- evaluation ---------------------------------------------------------------

class TooFewPatients(BreathAnalysisError, ValueError):
    pass


class LeakageDetected(BreathAnalysisError):
    pass


# --- synth / config -----------------------------------------------------------

class InvalidSpec(BreathAnalysisError, ValueError):
    pass


class ConfigError(BreathAnalysisError, ValueError):
    pass


# --- warnings -----------------------------------------------------------------

class DegenerateScale(UserWarning):
    """A feature had zero spread and was passed through unscaled"""


class RankDeficient(UserWarning):
    """Fewer principal components than requested could be extracted"""


class CombinationCapReached(UserWarning):
    """A patient produced more pseudo-patients than the configured cap"""
