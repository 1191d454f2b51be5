"""Deterministic synthetic corpora standing in for real malware sets.

Samples are benign random blobs. Each family plants its own high-entropy
marker strings and a few capability strings (API names and the like), so
demonstration rules have something to find. Known samples get exact and
fuzzy signatures written to the emitted databases; variants are mutated
copies of the known samples and are absent from the databases.
"""

from __future__ import annotations

import csv
import hashlib
import io
import random
from dataclasses import dataclass, field
from pathlib import Path

from ..ctph import fuzzy_hash
from ..exacthash import digest_bytes
from ..rulelang.ast import HexByte, HexJump, HexPattern, PatternDef, Rule, RuleSet, TextPattern
from ..rulelang.ast import OfExpr, StringRef, UintRead
from ..rulelang.render import render_rules
from ..sigstore import EXACT, FUZZY, SignatureRecord, write_signatures

KNOWN = "known"
VARIANT = "variant"
NOVEL = "novel"
SETS = (KNOWN, VARIANT, NOVEL)

XOR_STUB = b"\xeb\x10XSTUB\x31\xc0\x8a\x06\x34\x00\x88\x06\x46\xe2\xf7"
FIRST_SEEN = "2021-11-01"
GROUND_TRUTH = "ground_truth.csv"
EXACT_DB = "exact.csv"
FUZZY_DB = "fuzzy.csv"
RULES_FILE = "rules.yar"
SAMPLES_DIR = "samples"

# Capability strings planted into samples; the demonstration rules key on them.
CAPABILITIES = {
    "keylogger": (b"GetAsyncKeyState", b"SetWindowsHookExA"),
    "win_registry": (b"RegSetValueExA", b"RegCreateKeyExA"),
    "escalate_priv": (b"SeDebugPrivilege", b"AdjustTokenPrivileges"),
    "Str_Win32_Winsock2_Library": (b"ws2_32.dll", b"WSAStartup"),
    "win_files_operation": (b"WriteFile", b"FindFirstFileA"),
    "network_http": (b"InternetOpenUrlA", b"HttpSendRequestA"),
}


@dataclass(frozen=True)
class MutationSpec:
    op: str
    param: int

    OPS = ("byte-flip", "append-random", "prepend-random", "truncate", "xor-encode", "block-shuffle")

    def __post_init__(self):
        if self.op not in self.OPS:
            raise ValueError(f"unknown mutation {self.op!r}")
        if self.param < 0 or (self.op == "block-shuffle" and self.param < 1):
            raise ValueError(f"bad parameter for {self.op}: {self.param}")
        if self.op == "xor-encode" and not 1 <= self.param <= 255:
            raise ValueError("xor key must be a non-zero byte")

    def __str__(self):
        return f"{self.op}({self.param})"

    def apply(self, data: bytes, rng: random.Random) -> bytes:
        n = len(data)
        if self.op == "byte-flip":
            out = bytearray(data)
            for pos in rng.sample(range(n), min(self.param, n)):
                out[pos] ^= 0xFF
            return bytes(out)
        if self.op == "append-random":
            return data + rng.randbytes(self.param)
        if self.op == "prepend-random":
            return rng.randbytes(self.param) + data
        if self.op == "truncate":
            if self.param >= n:
                raise ValueError("truncate would remove the whole file")
            return data[:n - self.param]
        if self.op == "xor-encode":
            return XOR_STUB + bytes(b ^ self.param for b in data)
        blocks = [data[i:i + self.param] for i in range(0, n, self.param)]
        rng.shuffle(blocks)
        return b"".join(blocks)


# Default mutation cycle for the variant set; sizes are fractions of the sample.
DEFAULT_MUTATIONS = (
    ("append-random", 0.01),
    ("byte-flip", 4),
    ("prepend-random", 0.01),
    ("truncate", 0.01),
    ("xor-encode", 0x5A),
    ("block-shuffle", 0.125),
)


def concrete_mutation(kind, amount, size) -> MutationSpec:
    if isinstance(amount, float):
        return MutationSpec(kind, max(1, int(size * amount)))
    return MutationSpec(kind, amount)


@dataclass(frozen=True)
class FamilySpec:
    name: str
    size: int                      # base sample size in bytes
    capabilities: tuple = ()
    header: bytes = b""
    markers: tuple = ()            # filled from the seed when empty
    family_rule: bool = True


DEFAULT_FAMILIES = (
    FamilySpec("Keilhos", 64 << 10, ("keylogger", "win_registry", "escalate_priv",
                                     "Str_Win32_Winsock2_Library", "win_files_operation"), b"MZ"),
    FamilySpec("Dridex", 48 << 10, ("network_http", "win_registry"), b"MZ"),
    FamilySpec("Emotet", 80 << 10, ("Str_Win32_Winsock2_Library", "network_http"), b"MZ"),
    FamilySpec("Mirai", 40 << 10, ("network_http",), b"\x7fELF"),
    FamilySpec("Ryuk", 96 << 10, ("escalate_priv", "win_files_operation"), b"MZ"),
)


@dataclass(frozen=True)
class CorpusManifest:
    seed: int = 2021
    families: tuple = DEFAULT_FAMILIES
    known_count: int = 15
    variant_count: int = 15
    novel_count: int = 0
    mutations: tuple = DEFAULT_MUTATIONS
    markers_per_family: int = 3

    def __post_init__(self):
        if not self.families:
            raise ValueError("corpus needs at least one family")
        if self.variant_count and not self.known_count:
            raise ValueError("variants are derived from known samples")


@dataclass
class Sample:
    name: str
    family: str
    set: str
    mutation: str
    data: bytes = field(repr=False)


def _rng(seed, *labels) -> random.Random:
    h = hashlib.sha256(repr((seed,) + labels).encode()).digest()
    return random.Random(int.from_bytes(h[:8], "little"))


def family_markers(manifest: CorpusManifest, fam: FamilySpec) -> tuple:
    if fam.markers:
        return fam.markers
    rng = _rng(manifest.seed, "markers", fam.name)
    return tuple(rng.randbytes(16) for _ in range(manifest.markers_per_family))


def _plant(buf: bytearray, payloads, rng, margin):
    """Write payloads at distinct random offsets away from both ends."""
    taken = []
    for p in payloads:
        for _ in range(1000):
            pos = rng.randrange(margin, len(buf) - margin - len(p))
            if all(pos + len(p) + 8 <= a or b + 8 <= pos for a, b in taken):
                break
        buf[pos:pos + len(p)] = p
        taken.append((pos, pos + len(p)))


def _make_sample(manifest, fam, rng, planted_markers=True):
    size = int(fam.size * rng.uniform(0.8, 1.2))
    buf = bytearray(rng.randbytes(size))
    buf[:len(fam.header)] = fam.header
    payloads = list(family_markers(manifest, fam)) if planted_markers else []
    for cap in fam.capabilities:
        payloads.extend(CAPABILITIES[cap])
    _plant(buf, payloads, rng, margin=max(64, size // 20))
    return bytes(buf)


def build_samples(manifest: CorpusManifest) -> list[Sample]:
    fams = manifest.families
    samples = []
    for i in range(manifest.known_count):
        fam = fams[i % len(fams)]
        data = _make_sample(manifest, fam, _rng(manifest.seed, KNOWN, i))
        samples.append(Sample(f"known_{i:03d}_{fam.name}.bin", fam.name, KNOWN, "none", data))
    known = samples[:]
    for i in range(manifest.variant_count):
        base = known[i % len(known)]
        kind, amount = manifest.mutations[i % len(manifest.mutations)]
        spec = concrete_mutation(kind, amount, len(base.data))
        data = spec.apply(base.data, _rng(manifest.seed, VARIANT, i))
        samples.append(Sample(f"variant_{i:03d}_{base.family}.bin", base.family, VARIANT, str(spec), data))
    for i in range(manifest.novel_count):
        fam = fams[i % len(fams)]
        name = f"novel-{fam.name}"
        data = _make_sample(manifest, fam, _rng(manifest.seed, NOVEL, i), planted_markers=False)
        samples.append(Sample(f"novel_{i:03d}_{fam.name}.bin", name, NOVEL, "none", data))
    return samples


def _hex_for_marker(marker: bytes):
    # Marker bytes with one wildcard byte and a fixed-width jump: exercises
    # masked positions and jump verification in the experiment rules.
    toks = [HexByte(b) for b in marker[:6]] + [HexByte(0, 0)] + [HexByte(b) for b in marker[7:10]]
    toks += [HexJump(1, 3)] + [HexByte(b) for b in marker[12:]]
    return HexPattern(tuple(toks))


def build_rules(manifest: CorpusManifest) -> RuleSet:
    """Family rules on the planted markers plus generic capability rules."""
    rules = []
    for fam in manifest.families:
        if not fam.family_rule:
            continue
        pats = tuple(PatternDef(f"$m{k}", _hex_for_marker(m))
                     for k, m in enumerate(family_markers(manifest, fam)))
        rules.append(Rule(f"{fam.name}_markers", OfExpr(min(2, len(pats)), "them"), ("family",),
                          (("severity", "malicious"), ("family", fam.name),
                           ("description", f"planted {fam.name} marker bytes")), pats))
    for cap, strings in CAPABILITIES.items():
        pats = tuple(PatternDef(f"$s{k}", TextPattern(s, frozenset({"ascii", "wide", "nocase"})))
                     for k, s in enumerate(strings))
        rules.append(Rule(cap, OfExpr("any", "them"), ("capability",),
                          (("severity", "info"), ("description", f"{cap} API strings")), pats))
    rules.append(Rule("IsPacked", StringRef("$stub"), ("packer",),
                      (("severity", "suspicious"), ("description", "xor encoder stub")),
                      (PatternDef("$stub", TextPattern(XOR_STUB)),)))
    rules.append(Rule("IsPE32", UintRead(16, 0, "==", 0x5A4D), ("format",),
                      (("severity", "info"),)))
    rules.append(Rule("IsELF", UintRead(32, 0, "==", 0x464C457F), ("format",),
                      (("severity", "info"),)))
    return RuleSet(tuple(rules))


def generate_corpus(manifest: CorpusManifest, out_dir) -> Path:
    """Write samples, ground truth, signature databases and rules under ``out_dir``."""
    out = Path(out_dir)
    sample_dir = out / SAMPLES_DIR
    sample_dir.mkdir(parents=True, exist_ok=True)
    samples = build_samples(manifest)
    truth = io.StringIO()
    writer = csv.writer(truth, lineterminator="\n")
    writer.writerow(["path", "family", "set", "mutation"])
    exact, fuzzy = [], []
    for s in samples:
        (sample_dir / s.name).write_bytes(s.data)
        writer.writerow([f"{SAMPLES_DIR}/{s.name}", s.family, s.set, s.mutation])
        if s.set == KNOWN:
            exact.append(SignatureRecord(EXACT, digest_bytes(s.data).hex, s.family, "synthetic", FIRST_SEEN))
            fuzzy.append(SignatureRecord(FUZZY, fuzzy_hash(s.data).render(), s.family, "synthetic", FIRST_SEEN))
    (out / GROUND_TRUTH).write_text(truth.getvalue(), encoding="utf-8")
    write_signatures(exact, out / EXACT_DB)
    write_signatures(fuzzy, out / FUZZY_DB)
    (out / RULES_FILE).write_text(render_rules(build_rules(manifest)), encoding="utf-8")
    return out
