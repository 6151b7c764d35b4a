"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class UndefinedSNRError(ValueError):
    """SNR_H has no finite value at the requested operating point."""


class SaturatedError(ValueError):
    """An observed mean is at or above the counter capacity."""


class FloorUnreachableError(ValueError):
    """No illumination level reaches the requested SNR floor."""


class FormatError(ValueError):
    """A file does not follow the expected layout.

    ``offset`` is the byte position where parsing failed (``None`` if the
    failure is not tied to one position).
    """

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{': '.join(where)}: {message}"
        super().__init__(message)
