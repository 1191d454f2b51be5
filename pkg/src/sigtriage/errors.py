"""Exception hierarchy shared across the package."""


class SigTriageError(Exception):
    pass


class InputError(SigTriageError, OSError):
    """A file or stream could not be read."""

    def __init__(self, source, reason):
        self.source = str(source)
        self.reason = str(reason)
        super().__init__(f"{self.source}: {self.reason}")


class FileTooLarge(InputError):
    def __init__(self, source, size, limit):
        self.size = size
        self.limit = limit
        super().__init__(source, f"file is {size} bytes, above the {limit}-byte limit; refusing to read partially")


class SignatureFormatError(SigTriageError, ValueError):
    """Malformed textual fuzzy signature.

    ``field`` names the offending part ("fields", "blocksize", "sig1" or "sig2")
    and ``position`` is the character offset inside the input text.
    """

    def __init__(self, message, field, position=0):
        self.field = field
        self.position = position
        super().__init__(f"{message} (field {field}, position {position})")


class ImportRejected(SigTriageError):
    """Signature file had too many malformed rows to trust."""
