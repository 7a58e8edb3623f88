"""Exception hierarchy shared by all camstats modules.

The CLI maps ConfigurationError to exit code 2 and DataError (including
bundle, manifest and split problems) to exit code 3.
"""


class CamstatsError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(CamstatsError, ValueError):
    """Tensor shapes do not match what an operation requires."""


class ParameterError(CamstatsError, ValueError):
    """A numeric argument is outside its valid range."""


class ConfigurationError(CamstatsError):
    """The run configuration is inconsistent or incomplete."""


class DataError(CamstatsError):
    """Input data (manifest, bundle, dataset) is invalid."""


class DegenerateVarianceError(CamstatsError, ValueError):
    """A statistic is undefined because a sample has zero variance."""


class DegenerateClassError(CamstatsError, ValueError):
    """A metric needs both classes but the labels contain only one."""


class InstabilityError(CamstatsError):
    """An iterative procedure exhausted its budget without succeeding."""


class DegenerateSplitError(DataError):
    """Too few samples per class to build the cross-validation subsets."""


class ManifestError(DataError):
    """A dataset manifest failed validation."""


class BundleError(DataError):
    """A tensor bundle file is malformed."""


class BadMagicError(BundleError):
    """The file does not start with the expected magic bytes."""


class TruncatedBundleError(BundleError):
    """The file ended before a declared payload was complete."""


class UnknownDtypeError(BundleError):
    """An entry declares a dtype code this reader does not support."""


class DimOverflowError(BundleError):
    """An entry declares dimensions that are implausibly large or empty."""
