"""Exception types shared across the package."""


class IrPatchError(Exception):
    """Base class for all package errors."""


class ImageReadError(IrPatchError):
    """File missing, truncated, or not decodable as an image."""


class UnsupportedImageError(IrPatchError):
    """Image decodable but not an accepted grayscale/RGB bit depth."""


class ManifestError(IrPatchError):
    """Dataset manifest malformed or inconsistent."""


class RoiError(IrPatchError):
    """Region of interest out of bounds or below the minimum size."""


class TopologyError(IrPatchError):
    """Patch geometry is self-intersecting where a valid grid is required."""


class PasteError(IrPatchError):
    """Patch placement failed (too small after scaling, or does not fit)."""


class StatsError(IrPatchError):
    """Context statistics undefined (empty support region)."""


class ReferenceError_(IrPatchError):
    """Clean reference construction failed (too few samples, degenerate basis)."""


class EncoderError(IrPatchError):
    """Encoder backend failure (local or remote)."""


class RemoteProtocolError(EncoderError):
    """Remote encoder returned a malformed or error response."""


class SearchError(IrPatchError):
    """Optimizer misconfiguration or evaluation failure."""


class ConfigError(IrPatchError):
    """Run configuration missing, malformed, or referencing absent paths."""


class MissingInputError(IrPatchError):
    """A required input file (manifest, image, patch, reference) does not exist."""
