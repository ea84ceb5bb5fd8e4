"""Exception hierarchy shared by all modules."""


class RademacherError(Exception):
    """Base class for library errors."""


class ValidationError(RademacherError, ValueError):
    """Input violates a documented precondition or contract."""


class CapacityError(RademacherError):
    """Requested computation exceeds a configured exact-size or budget limit."""


class NotPSDError(ValidationError):
    """Matrix has an eigenvalue below the positive-semidefinite tolerance."""
