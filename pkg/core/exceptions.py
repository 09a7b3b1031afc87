"""
Exception types shared across the forge.

Pure functions raise plain ValueError for shape problems; these classes
cover the failures callers are expected to catch and report.
"""

from typing import Any, Optional


class ForgeError(Exception):
    """Base class for all svbrdf-forge failures."""


class MapValidationError(ForgeError, ValueError):
    """An SvbrdfMaps bundle violates one of its invariants."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("Invalid SVBRDF maps: " + "; ".join(self.errors))


class DegenerateInputError(ForgeError, ValueError):
    """The input photograph carries no usable signal."""


class FeatureExtractorUnavailableError(ForgeError):
    """Perceptual feature weights could not be loaded."""

    def __init__(self, detail: Optional[str] = None):
        message = "feature extractor unavailable"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class NonFiniteLossError(ForgeError):
    """A training step produced NaN or inf; carries the offending report."""

    def __init__(self, report: Any, iteration: int):
        self.report = report
        self.iteration = iteration
        super().__init__(f"Non-finite loss at iteration {iteration}: {report}")


class CheckpointError(ForgeError):
    """Checkpoint file is corrupt, from another format version, or incompatible."""
