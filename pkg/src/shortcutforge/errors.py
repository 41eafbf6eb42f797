"""Exception types shared across the package."""


class ShortcutForgeError(Exception):
    """Base class for all shortcutforge errors."""


class UnsupportedFormatError(ShortcutForgeError):
    """Image file is not an 8-bit PNG or binary PPM/PGM."""


class CorruptImageError(ShortcutForgeError):
    """Image file is truncated or otherwise undecodable."""


class ManifestError(ShortcutForgeError):
    """Manifest CSV violates the schema contract."""


class ShapeMismatchError(ShortcutForgeError):
    """Two arrays that must agree in shape do not."""


class SpecError(ShortcutForgeError):
    """ShortcutSpec or codebook parameters violate an invariant."""


class BudgetExceededError(ShortcutForgeError):
    """Measured perceptibility exceeds the spec-derived budget (strict mode)."""


class MissingInputError(ShortcutForgeError):
    """A manifest record points at a file that does not exist."""
