"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data violates a documented invariant or dimension contract."""


class AssetFormatError(ValidationError):
    """Asset file is malformed (bad magic, truncated, or wrong dimensions)."""


class ProfileViewError(ValidationError):
    """Eye projections coincide in the image plane; the camera scale is
    unsolvable. Near-profile head poses hit this instead of silently
    producing an extremely zoomed-in framing."""
