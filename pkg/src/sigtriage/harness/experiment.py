"""Run every approach over a generated corpus and tally detection counts per sample set."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..engine import compile_rules
from ..errors import InputError
from ..rulelang import load_rules
from ..sigstore import SignatureStore
from ..triage import TriageConfig, TriageReport, triage_many
from .corpus import EXACT_DB, FUZZY_DB, GROUND_TRUTH, RULES_FILE, SETS

APPROACHES = ("exact", "fuzzy", "rules")
APPROACH_LABELS = {"exact": "SHA-256 Hash", "fuzzy": "Fuzzy Hash", "rules": "Rules"}


@dataclass
class Cell:
    size: int = 0
    detected: int = 0
    classified: int = 0
    matched: int = 0


@dataclass
class DetectionTable:
    sets: tuple
    cells: dict = field(default_factory=dict)    # (approach, set) -> Cell
    threshold: int = 50

    def cell(self, approach, set_name) -> Cell:
        return self.cells.setdefault((approach, set_name), Cell())

    def check(self):
        """Raise AssertionError if counts violate classified <= detected <= matched <= size."""
        for (approach, set_name), c in self.cells.items():
            if not (c.classified <= c.detected <= c.matched <= c.size):
                raise AssertionError(f"inconsistent counts for {approach}/{set_name}: {c}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["approach", "set", "size", "detected", "classified", "matched"])
        for a in APPROACHES:
            for s in self.sets:
                c = self.cell(a, s)
                w.writerow([a, s, c.size, c.detected, c.classified, c.matched])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DetectionTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        sets = tuple(dict.fromkeys(r["set"] for r in rows))
        table = cls(sets)
        for r in rows:
            table.cells[(r["approach"], r["set"])] = Cell(
                int(r["size"]), int(r["detected"]), int(r["classified"]), int(r["matched"]))
        return table

    def to_text(self) -> str:
        label_w = max(len(v) for v in APPROACH_LABELS.values()) + 2
        col_w = max(9, max(len(s) for s in self.sets) + 2)
        groups = ("Detected", "Classified", "Matched")
        group_w = col_w * len(self.sets)
        head1 = " " * label_w + "".join(g.ljust(group_w) for g in groups)
        head2 = "Approach".ljust(label_w) + "".join(s.ljust(col_w) for _ in groups for s in self.sets)
        lines = [head1.rstrip(), head2.rstrip()]
        for a in APPROACHES:
            row = APPROACH_LABELS[a].ljust(label_w)
            for attr in ("detected", "classified", "matched"):
                for s in self.sets:
                    c = self.cell(a, s)
                    row += f"{getattr(c, attr)}/{c.size}".ljust(col_w)
            lines.append(row.rstrip())
        return "\n".join(lines) + "\n"


def approach_outcomes(report: TriageReport, threshold: int) -> dict:
    """Per approach in isolation: (detected, family or None, matched)."""
    out = {}
    exact = report.exact
    out["exact"] = (exact is not None, exact.family if exact else None, exact is not None)

    top = report.fuzzy_matches[0] if report.fuzzy_matches else None
    detected = top is not None and top.score >= threshold
    out["fuzzy"] = (detected, top.record.family if detected else None,
                    any(m.score >= 1 for m in report.fuzzy_matches))

    malicious = [h for h in report.rule_hits if h.severity == "malicious"]
    labelled = [h.family for h in malicious if h.family]
    out["rules"] = (bool(malicious), labelled[0] if labelled else None, bool(report.rule_hits))
    return out


def load_ground_truth(corpus_dir) -> list[dict]:
    path = Path(corpus_dir) / GROUND_TRUTH
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(path, "missing ground-truth file") from exc
    return list(csv.DictReader(io.StringIO(text)))


def run_experiment(corpus_dir, store: Optional[SignatureStore] = None, rules=None,
                   cfg: TriageConfig = TriageConfig(), threads: int = 0):
    """Triage every sample; returns ``(DetectionTable, reports)``.

    ``store`` and ``rules`` default to the databases and rule file the corpus
    generator wrote next to the samples.
    """
    corpus = Path(corpus_dir)
    truth = load_ground_truth(corpus)
    if store is None:
        store = SignatureStore.load([corpus / EXACT_DB], [corpus / FUZZY_DB])
    if rules is None:
        rules = compile_rules(load_rules([corpus / RULES_FILE]))
    present = [s for s in SETS if any(row["set"] == s for row in truth)]
    table = DetectionTable(tuple(present), threshold=cfg.fuzzy_threshold)
    results = triage_many([corpus / row["path"] for row in truth], store, rules, cfg, threads)
    reports = []
    for row, (path, report) in zip(truth, results):
        if isinstance(report, Exception):
            raise report
        reports.append((row, report))
        for approach, (detected, family, matched) in approach_outcomes(report, cfg.fuzzy_threshold).items():
            c = table.cell(approach, row["set"])
            c.size += 1
            c.detected += detected
            c.classified += detected and family == row["family"]
            c.matched += matched
    table.check()
    return table, reports
