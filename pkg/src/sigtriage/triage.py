"""Merge exact, fuzzy and rule evidence for one file into a verdict.

Decision table, first matching row wins:

1. digest found in the store        -> known-malicious, family from the record
2. fuzzy match >= threshold         -> likely-malicious, family of the top match
3. matched rule with severity
   "malicious"                      -> likely-malicious, family meta of that rule
4. any matched rule                 -> suspicious
5. otherwise                        -> unknown
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .ctph import FuzzySignature, fuzzy_hash, parse_signature
from .engine import CompiledRuleSet, scan
from .errors import FileTooLarge, InputError
from .exacthash import Digest, digest_bytes
from .sigstore import SignatureRecord, SignatureStore

UNKNOWN = "unknown"
SUSPICIOUS = "suspicious"
LIKELY = "likely-malicious"
KNOWN = "known-malicious"
VERDICTS = (UNKNOWN, SUSPICIOUS, LIKELY, KNOWN)   # weakest first
DEFAULT_MAX_FILE_SIZE = 256 << 20


def verdict_rank(verdict: str) -> int:
    return VERDICTS.index(verdict)


@dataclass(frozen=True)
class TriageConfig:
    fuzzy_threshold: int = 50
    max_fuzzy_matches: int = 10
    max_file_size: int = DEFAULT_MAX_FILE_SIZE

    def __post_init__(self):
        if not 0 <= self.fuzzy_threshold <= 100:
            raise ValueError("fuzzy_threshold must be within [0, 100]")
        if self.max_fuzzy_matches < 1:
            raise ValueError("max_fuzzy_matches must be positive")
        if self.max_file_size <= 0:
            raise ValueError("max_file_size must be positive")


@dataclass(frozen=True)
class Classification:
    family: str
    provenance: str     # exact | fuzzy | rule
    via: str            # digest, fuzzy signature or rule name backing the label
    primary: bool = False

    def to_dict(self):
        return {"family": self.family, "provenance": self.provenance, "via": self.via,
                "primary": self.primary}


@dataclass(frozen=True)
class FuzzyMatch:
    score: int
    record: SignatureRecord

    def to_dict(self):
        return {"score": self.score, **self.record.to_dict()}


@dataclass(frozen=True)
class RuleHit:
    rule: str
    tags: tuple = ()
    severity: str = "info"
    family: Optional[str] = None
    strings: tuple = ()     # ((pattern id, match count), ...)

    def to_dict(self):
        return {"rule": self.rule, "tags": list(self.tags), "severity": self.severity,
                "family": self.family, "strings": {pid: n for pid, n in self.strings}}


@dataclass(frozen=True)
class TriageReport:
    file: str
    digest: Digest
    fuzzy: Optional[FuzzySignature]
    verdict: str
    classification: tuple = ()
    capabilities: tuple = ()
    exact: Optional[SignatureRecord] = None
    fuzzy_matches: tuple = ()
    rule_hits: tuple = ()

    @property
    def primary_family(self) -> Optional[str]:
        for c in self.classification:
            if c.primary:
                return c.family
        return None

    def to_dict(self):
        return {
            "file": self.file,
            "sha256": self.digest.hex,
            "ssdeep": self.fuzzy.render() if self.fuzzy else None,
            "verdict": self.verdict,
            "classification": [c.to_dict() for c in self.classification],
            "capabilities": list(self.capabilities),
            "evidence": {
                "exact": self.exact.to_dict() if self.exact else None,
                "fuzzy": [m.to_dict() for m in self.fuzzy_matches],
                "rules": [h.to_dict() for h in self.rule_hits],
            },
        }

    @classmethod
    def from_dict(cls, d) -> "TriageReport":
        ev = d["evidence"]
        return cls(
            file=d["file"],
            digest=Digest.from_hex(d["sha256"]),
            fuzzy=parse_signature(d["ssdeep"]) if d["ssdeep"] else None,
            verdict=d["verdict"],
            classification=tuple(Classification(c["family"], c["provenance"], c["via"], c["primary"])
                                 for c in d["classification"]),
            capabilities=tuple(d["capabilities"]),
            exact=SignatureRecord.from_dict(ev["exact"]) if ev["exact"] else None,
            fuzzy_matches=tuple(FuzzyMatch(m["score"], SignatureRecord.from_dict(m)) for m in ev["fuzzy"]),
            rule_hits=tuple(RuleHit(h["rule"], tuple(h["tags"]), h["severity"], h["family"],
                                    tuple(h["strings"].items())) for h in ev["rules"]),
        )


def _decide(exact, fuzzy_matches, rule_hits, threshold):
    """Apply the decision table; returns (verdict, primary classification or None)."""
    if exact is not None:
        return KNOWN, Classification(exact.family, "exact", exact.value, True)
    if fuzzy_matches and fuzzy_matches[0].score >= threshold:
        top = fuzzy_matches[0].record
        return LIKELY, Classification(top.family, "fuzzy", top.value, True)
    malicious = [h for h in rule_hits if h.severity == "malicious"]
    if malicious:
        labelled = [h for h in malicious if h.family]
        primary = Classification(labelled[0].family, "rule", labelled[0].rule, True) if labelled else None
        return LIKELY, primary
    if rule_hits:
        return SUSPICIOUS, None
    return UNKNOWN, None


def triage_data(data: bytes, name: str, store: SignatureStore, rules: CompiledRuleSet,
                cfg: TriageConfig = TriageConfig()) -> TriageReport:
    digest = digest_bytes(data)
    sig = fuzzy_hash(data) if data else None
    exact = store.lookup_exact(digest)
    fuzzy_matches = ()
    if sig is not None:
        floor = min(cfg.fuzzy_threshold, 1)
        fuzzy_matches = tuple(FuzzyMatch(s, r) for s, r in
                              store.query_fuzzy(sig, floor, cfg.max_fuzzy_matches))
    result = scan(rules, data, signature=sig)
    rule_hits = tuple(sorted(
        (RuleHit(m.name, tuple(m.tags), m.severity, m.family,
                 tuple((pid, len(offs)) for pid, offs in m.offsets.items()))
         for m in result.matched),
        key=lambda h: h.rule))

    verdict, primary = _decide(exact, fuzzy_matches, rule_hits, cfg.fuzzy_threshold)

    labels = set()
    if exact is not None:
        labels.add(Classification(exact.family, "exact", exact.value))
    for m in fuzzy_matches:
        if m.score >= cfg.fuzzy_threshold:
            labels.add(Classification(m.record.family, "fuzzy", m.record.value))
    for h in rule_hits:
        if h.family:
            labels.add(Classification(h.family, "rule", h.rule))
    order = {"exact": 0, "fuzzy": 1, "rule": 2}
    rest = sorted((c for c in labels if primary is None or (c.family, c.provenance, c.via) !=
                   (primary.family, primary.provenance, primary.via)),
                  key=lambda c: (order[c.provenance], c.family, c.via))
    classification = ((primary,) if primary else ()) + tuple(rest)

    capabilities = tuple(sorted({h.rule for h in rule_hits} | {t for h in rule_hits for t in h.tags}))
    return TriageReport(name, digest, sig, verdict, classification, capabilities, exact,
                        fuzzy_matches, rule_hits)


def read_capped(path, max_size: int = DEFAULT_MAX_FILE_SIZE) -> bytes:
    try:
        size = os.stat(path).st_size
        if size > max_size:
            raise FileTooLarge(path, size, max_size)
        with open(path, "rb") as fh:
            return fh.read()
    except FileTooLarge:
        raise
    except OSError as exc:
        raise InputError(path, exc.strerror or exc) from exc


def triage_file(path, store: SignatureStore, rules: CompiledRuleSet,
                cfg: TriageConfig = TriageConfig()) -> TriageReport:
    data = read_capped(path, cfg.max_file_size)
    return triage_data(data, str(path), store, rules, cfg)


def triage_many(paths, store, rules, cfg=TriageConfig(), threads: int = 0):
    """Triage files, returning ``(path, report or exception)`` in input order."""
    def one(p):
        try:
            return p, triage_file(p, store, rules, cfg)
        except InputError as exc:
            return p, exc

    if threads and threads > 1 and len(paths) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, paths))
    return [one(p) for p in paths]


def render_report(report: TriageReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=False)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    lines = [f"-{report.file}:"]
    lines += [h.rule for h in report.rule_hits] or ["(no matches)"]
    lines.append(f"  verdict: {report.verdict}")
    lines.append(f"  sha256: {report.digest.hex}")
    lines.append(f"  ssdeep: {report.fuzzy.render() if report.fuzzy else '-'}")
    if report.classification:
        shown = ", ".join(f"{c.family} ({c.provenance}{', primary' if c.primary else ''})"
                          for c in report.classification)
        lines.append(f"  classification: {shown}")
    for m in report.fuzzy_matches:
        lines.append(f"  fuzzy: {m.score:3d}% {m.record.family} {m.record.value}")
    if report.capabilities:
        lines.append(f"  capabilities: {', '.join(report.capabilities)}")
    return "\n".join(lines)


def report_from_json(text: str) -> TriageReport:
    return TriageReport.from_dict(json.loads(text))
