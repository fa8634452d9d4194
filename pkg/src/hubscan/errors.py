"""Exception hierarchy for the scanner.

Errors are split by contract: data integrity (bundles, corpora), caller
parameter mistakes, and cross-module schema mismatches. Everything derives
from HubScanError so drivers can catch one base type.
"""


class HubScanError(Exception):
    """Base class for all scanner errors."""


class BundleError(HubScanError):
    """A corpus bundle directory is missing required files."""


class CorruptBlobError(BundleError):
    """Embedding blob size disagrees with the manifest shape."""


class IntegrityError(HubScanError):
    """Corpus content violates an invariant (duplicate ids, zero-norm rows)."""


class ShapeError(HubScanError):
    """Dimension mismatch between vectors, queries, or corpora."""


class ParameterError(HubScanError):
    """An argument is outside its documented domain."""


class ConfigurationError(HubScanError):
    """A configuration combination is invalid (missing metadata, bad weights)."""


class MergeError(HubScanError):
    """Accumulators with incompatible schemas cannot be merged."""


class ScopeError(HubScanError):
    """Requested scope (e.g. domain label) does not exist."""


class EvaluationError(HubScanError):
    """Evaluation input is degenerate (missing class, no positives)."""


class DegenerateHubError(HubScanError):
    """Hub construction collapsed to a zero vector."""


class SafetyError(HubScanError):
    """Refusing to modify a non-benchmark corpus without an explicit override."""
