"""Error types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or invalid shapes."""


class ConfigurationError(ValueError):
    """A parameter value is outside its documented domain."""


class ValidationError(ValueError):
    """Input data violates a documented invariant (e.g. non-binary mask)."""


class DomainError(ValueError):
    """A physical quantity is outside its admissible range."""
