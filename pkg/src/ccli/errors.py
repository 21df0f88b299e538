"""Exception types raised by the ccli engine.

Every error the engine raises deliberately derives from :class:`CCLIError`,
so callers (and the CLI) can distinguish data/usage problems from bugs.
"""


class CCLIError(Exception):
    """Base class for all engine errors."""


class ShapeError(CCLIError):
    """Operands have incompatible dimensions."""


class ZeroVectorError(CCLIError):
    """A row that must be normalized has (near-)zero norm."""

    def __init__(self, row: int, norm: float):
        self.row = row
        self.norm = norm
        super().__init__(f"row {row} has norm {norm:.3e}, cannot normalize")


class LabelError(CCLIError):
    """A class label lies outside [0, num_classes)."""


class NonFiniteGradError(CCLIError):
    """A gradient passed to the optimizer contains NaN or Inf."""


class NonFiniteError(CCLIError):
    """A forward-pass stage produced NaN or Inf."""


class ScheduleError(CCLIError):
    """A schedule was queried past its final step."""


class HyperparamError(CCLIError):
    """A hyper-parameter violates its validity range."""


class FormatError(CCLIError):
    """A persisted artifact has the wrong magic, version, or layout."""


class CorruptBundleError(CCLIError):
    """Manifest and tensor payloads of a bundle disagree."""


class InsufficientShotsError(CCLIError):
    """A class has fewer images than the requested shot count."""


class InsufficientSupportError(CCLIError):
    """Top-I selection asked for more items than the support set holds."""


class ClassMapError(CCLIError):
    """Target bundle classes cannot be mapped onto the source class list."""

    def __init__(self, unmapped: list[str]):
        self.unmapped = list(unmapped)
        super().__init__(
            "target classes not present in source: " + ", ".join(self.unmapped)
        )
