"""Exception hierarchy.

Every exception carries a stable ``code`` string that shows up in structured
error logs and CLI output, so scripts can match on codes instead of class
names or message text.
"""


class ForetuneError(Exception):
    """Base class for all pipeline errors."""

    code = "error"


class ConfigurationError(ForetuneError):
    """Invalid configuration: bad partition windows, missing paths, missing
    required environment variables.  Maps to CLI exit status 2."""

    code = "configuration_error"


class NoForecastFoundError(ForetuneError):
    """Model output contained no asterisk-delimited decimal."""

    code = "no_forecast_found"


class OutOfRangeForecastError(ForetuneError):
    """Every asterisk-delimited decimal in the output was outside [0, 1]."""

    code = "out_of_range"


class TiePairError(ForetuneError):
    """rank_pair received two equal probabilities; ties must be filtered
    before ranking, so this signals an upstream bug."""

    code = "tie_pair"


class GenerationFailedError(ForetuneError):
    """No parsable forecast could be generated for a question (all attempts
    unparsable, or the endpoint failed after retries)."""

    code = "generation_failed"


class EmptyDatasetError(ForetuneError):
    """A dataset operation received zero usable records."""

    code = "empty_dataset"


class NonFiniteInputError(ForetuneError):
    """A numeric routine received NaN or infinity."""

    code = "non_finite_input"


class NonFiniteLossError(ForetuneError):
    """Training produced a NaN/inf loss; aborted with diagnostics."""

    code = "non_finite_loss"


class EmptySampleError(ForetuneError):
    """A statistic was requested over an empty sample."""

    code = "empty_sample"


class InsufficientSampleError(ForetuneError):
    """A statistic requiring n >= 2 was requested over a smaller sample."""

    code = "insufficient_sample"


class DegenerateTestError(ForetuneError):
    """Both samples have zero variance and equal means; the t statistic is
    undefined."""

    code = "degenerate_test"


class InvalidPValueError(ForetuneError):
    """A p-value outside [0, 1] was passed to a correction procedure."""

    code = "invalid_p_value"


class UnalignedSamplesError(ForetuneError):
    """Pairwise tests require identical question-id sets across model tags."""

    code = "unaligned_samples"


class TranscriptMissError(ForetuneError):
    """Replay transcript has no recorded response for a request (or the
    recorded responses for it are exhausted)."""

    code = "transcript_miss"


class EndpointError(ForetuneError):
    """An HTTP endpoint failed after all retries."""

    code = "endpoint_failure"


class ManifestMismatchError(ForetuneError):
    """A dataset file disagrees with its sidecar manifest."""

    code = "manifest_mismatch"


class SchemaError(ForetuneError):
    """A record file violates the documented line schema."""

    code = "schema_mismatch"


class MissingArtifactError(ForetuneError):
    """A required prior-stage artifact file is absent."""

    code = "missing_artifact"
