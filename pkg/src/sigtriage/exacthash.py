"""SHA-256 digests for exact-match detection."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import BinaryIO

ALGORITHM = "sha256"
DEFAULT_CHUNK = 1 << 16


@dataclass(frozen=True)
class Digest:
    value: bytes
    algorithm: str = ALGORITHM

    def __post_init__(self):
        if len(self.value) != 32:
            raise ValueError(f"SHA-256 digest must be 32 bytes, got {len(self.value)}")

    @property
    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        """Parse a hex digest; case-insensitive, surrounding whitespace ignored."""
        text = text.strip()
        if len(text) != 64:
            raise ValueError(f"expected 64 hex characters, got {len(text)}")
        return cls(bytes.fromhex(text))

    def __str__(self):
        return self.hex


def digest_bytes(data: bytes) -> Digest:
    return Digest(hashlib.sha256(data).digest())


def digest_stream(source: BinaryIO, chunk_size: int = DEFAULT_CHUNK, name: str | None = None) -> Digest:
    """Digest a readable binary stream in ``chunk_size`` pieces.

    Read failures are re-raised as :class:`InputError` naming the source.
    """
    from .errors import InputError

    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    label = name or getattr(source, "name", None) or repr(source)
    h = hashlib.sha256()
    try:
        while True:
            chunk = source.read(chunk_size)
            if not chunk:
                break
            h.update(chunk)
    except OSError as exc:
        raise InputError(label, exc) from exc
    return Digest(h.digest())


def digest_file(path, chunk_size: int = DEFAULT_CHUNK) -> Digest:
    from .errors import InputError

    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise InputError(path, exc) from exc
    with fh:
        return digest_stream(fh, chunk_size, name=str(path))
