"""Known-malware signature store backed by plain CSV files.

Each file holds one kind of signature (exact SHA-256 digests or fuzzy
signatures) with the header ``value,family,source,first_seen``. Lines
starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import datetime
import io
import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from .ctph import FuzzySignature, fuzzy_compare, parse_signature
from .errors import ImportRejected, InputError, SignatureFormatError
from .exacthash import Digest

log = logging.getLogger(__name__)

HEADER = ("value", "family", "source", "first_seen")
EXACT = "exact"
FUZZY = "fuzzy"
_HEX64 = re.compile(r"[0-9a-fA-F]{64}\Z")


@dataclass(frozen=True)
class SignatureRecord:
    kind: str
    value: str
    family: str
    source: str = ""
    first_seen: str = ""

    def to_dict(self):
        return {"kind": self.kind, "value": self.value, "family": self.family,
                "source": self.source, "first_seen": self.first_seen}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["value"], d["family"], d.get("source", ""), d.get("first_seen", ""))


def _validate_row(row, kind):
    if len(row) != 4:
        raise ValueError(f"expected 4 columns, got {len(row)}")
    value, family, source, first_seen = (c.strip() for c in row)
    if not family:
        raise ValueError("empty family")
    if first_seen:
        try:
            datetime.date.fromisoformat(first_seen[:10])
        except ValueError:
            raise ValueError(f"first_seen {first_seen!r} is not an ISO-8601 date") from None
    if kind == EXACT:
        if not _HEX64.match(value):
            raise ValueError(f"bad SHA-256 hex {value!r}")
        value = value.lower()
    else:
        try:
            value = parse_signature(value).render()
        except SignatureFormatError as exc:
            raise ValueError(str(exc)) from None
    return SignatureRecord(kind, value, family, source, first_seen)


class SignatureStore:
    """Exact index keyed by digest hex plus a fuzzy index bucketed by blocksize."""

    def __init__(self):
        self.exact: dict[str, SignatureRecord] = {}
        self._fuzzy: dict[str, tuple[FuzzySignature, SignatureRecord]] = {}
        self.fuzzy_index: dict[int, list[tuple[FuzzySignature, SignatureRecord]]] = defaultdict(list)

    def __len__(self):
        return len(self.exact) + len(self._fuzzy)

    @property
    def fuzzy_records(self) -> list[SignatureRecord]:
        return [rec for _, rec in self._fuzzy.values()]

    @classmethod
    def load(cls, exact_paths: Iterable = (), fuzzy_paths: Iterable = ()) -> "SignatureStore":
        store = cls()
        for p in exact_paths:
            store.import_signatures(p, EXACT)
        for p in fuzzy_paths:
            store.import_signatures(p, FUZZY)
        return store

    def add(self, record: SignatureRecord):
        if record.kind == EXACT:
            old = self.exact.get(record.value)
            if old is not None and old != record:
                log.info("exact signature %s re-imported; replacing family %s with %s",
                         record.value, old.family, record.family)
            self.exact[record.value] = record
            return
        sig = parse_signature(record.value)
        old = self._fuzzy.get(record.value)
        if old is not None:
            bucket = self.fuzzy_index[sig.blocksize]
            bucket[bucket.index(old)] = (sig, record)
        else:
            self.fuzzy_index[sig.blocksize].append((sig, record))
        self._fuzzy[record.value] = (sig, record)

    def import_signatures(self, path, kind: str) -> int:
        """Load one CSV file; returns the number of accepted rows.

        Malformed rows are skipped with a warning. If more than half the data
        rows are malformed, nothing is imported and :class:`ImportRejected`
        is raised.
        """
        if kind not in (EXACT, FUZZY):
            raise ValueError(f"kind must be {EXACT!r} or {FUZZY!r}")
        try:
            text = Path(path).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise InputError(path, exc) from exc
        return self.import_text(text, kind, source_name=str(path))

    def import_text(self, text: str, kind: str, source_name: str = "<text>") -> int:
        accepted = []
        bad = 0
        lines = [(n, line) for n, line in enumerate(text.splitlines(), 1)
                 if line.strip() and not line.lstrip().startswith("#")]
        for n, line in lines:
            row = next(csv.reader([line]), [])
            if tuple(c.strip().lower() for c in row) == HEADER:
                continue
            try:
                accepted.append(_validate_row(row, kind))
            except ValueError as exc:
                bad += 1
                log.warning("%s:%d: skipping malformed row: %s", source_name, n, exc)
        total = len(accepted) + bad
        if total and bad * 2 > total:
            raise ImportRejected(f"{source_name}: {bad} of {total} rows malformed; import rejected")
        for rec in accepted:
            self.add(rec)
        return len(accepted)

    def lookup_exact(self, digest: Union[Digest, str]) -> Optional[SignatureRecord]:
        key = digest.hex if isinstance(digest, Digest) else digest.strip().lower()
        return self.exact.get(key)

    def candidates(self, sig: FuzzySignature):
        b = sig.blocksize
        for size in (b // 2, b, 2 * b):
            yield from self.fuzzy_index.get(size, ())

    def query_fuzzy(self, sig: FuzzySignature, threshold: int = 50, limit: int = 10):
        """Ranked ``(score, record)`` pairs with score >= threshold."""
        if not 0 <= threshold <= 100:
            raise ValueError("threshold must be within [0, 100]")
        if limit < 1:
            raise ValueError("limit must be positive")
        scored = []
        for cand, rec in self.candidates(sig):
            score = fuzzy_compare(sig, cand)
            if score >= threshold:
                scored.append((score, rec))
        scored.sort(key=lambda sr: (-sr[0], sr[1].family, sr[1].value))
        return scored[:limit]


def write_signatures(records: Iterable[SignatureRecord], path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for rec in records:
        writer.writerow([rec.value, rec.family, rec.source, rec.first_seen])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
