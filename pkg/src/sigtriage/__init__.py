"""Signature-based malware triage: exact digests, fuzzy hashes and pattern rules."""

from .ctph import FuzzySignature, fuzzy_compare, fuzzy_hash, parse_signature
from .editdist import EditCosts, dl_distance, similarity_pct
from .engine import CompiledRuleSet, MatchResult, compile_rules, eval_condition, scan
from .exacthash import Digest, digest_bytes, digest_stream
from .rulelang import RuleSet, parse_rules, render_rules
from .sigstore import SignatureRecord, SignatureStore
from .triage import TriageConfig, TriageReport, render_report, triage_file

__version__ = "0.1.0"
