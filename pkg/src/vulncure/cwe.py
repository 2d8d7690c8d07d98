"""Recover CWE identifiers from free-form descriptions."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .core import PLACEHOLDER_CWES, Corpus, CveRecord

CWE_ID_RE = re.compile(r"cwe-([0-9]+)", re.IGNORECASE)
_CATALOG_KEY_RE = re.compile(r"^CWE-[0-9]+$")

OTHER = "NVD-CWE-Other"
NOINFO = "NVD-CWE-noinfo"


@dataclass(frozen=True)
class CweCatalog:
    entries: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        bad = [k for k in self.entries if not _CATALOG_KEY_RE.match(k)]
        if bad:
            raise ValueError(f"malformed catalog keys: {bad[:5]}")

    def __contains__(self, cwe_id: str) -> bool:
        return cwe_id in self.entries

    def name(self, cwe_id: str) -> str:
        return self.entries.get(cwe_id, "")

    @classmethod
    def load(cls, path: str | Path) -> "CweCatalog":
        """Two-column TSV: ``id<TAB>name``. A header row is tolerated."""
        entries = {}
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh, delimiter="\t"):
                if not row or not _CATALOG_KEY_RE.match(row[0].strip()):
                    continue
                entries[row[0].strip()] = row[1].strip() if len(row) > 1 else ""
        return cls(entries)


def extract_cwe_ids(text: str) -> list[str]:
    """CWE-<digits> identifiers in first-occurrence order, normalized to
    upper-case ``CWE-`` and de-duplicated."""
    seen: dict[str, None] = {}
    for m in CWE_ID_RE.finditer(text or ""):
        seen.setdefault(f"CWE-{m.group(1)}")
    return list(seen)


@dataclass(frozen=True)
class MergeResult:
    record: CveRecord
    changed: bool
    quarantined: tuple[str, ...] = ()


def merge_cwe(record: CveRecord, catalog: CweCatalog) -> MergeResult:
    """Union the record's CWE field with ids found in its descriptions.

    Placeholders are dropped once a concrete id is present. Ids missing from
    *catalog* are quarantined rather than merged.
    """
    found: dict[str, None] = {}
    for text in record.descriptions:
        for cwe in extract_cwe_ids(text):
            found.setdefault(cwe)
    accepted = {c for c in found if c in catalog}
    quarantined = tuple(c for c in found if c not in catalog and c not in record.cwe_ids)

    merged = set(record.cwe_ids) | accepted
    if merged - PLACEHOLDER_CWES:
        merged -= PLACEHOLDER_CWES
    merged = frozenset(merged)
    if merged == record.cwe_ids:
        return MergeResult(record, False, quarantined)
    return MergeResult(record.evolve(cwe_ids=merged), True, quarantined)


@dataclass(frozen=True)
class CweGapReport:
    other: int
    noinfo: int
    unassigned: int
    fixed_other: int
    fixed_noinfo_or_unassigned: int
    quarantined: int = 0

    def as_dict(self) -> dict:
        return {
            "other": self.other,
            "noinfo": self.noinfo,
            "unassigned": self.unassigned,
            "fixed_other": self.fixed_other,
            "fixed_noinfo_or_unassigned": self.fixed_noinfo_or_unassigned,
            "quarantined": self.quarantined,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "count"])
        for k, v in self.as_dict().items():
            w.writerow([k, v])
        return buf.getvalue()


def _gap_kind(rec: CveRecord) -> str | None:
    if rec.concrete_cwes:
        return None
    if OTHER in rec.cwe_ids:
        return "other"
    if NOINFO in rec.cwe_ids:
        return "noinfo"
    return "unassigned"


def merge_corpus(corpus: Corpus, catalog: CweCatalog) -> tuple[Corpus, list[tuple[str, str]]]:
    """Merge pass over every record; returns the new corpus and the
    quarantined (cve id, cwe id) pairs."""
    changed, quarantine = [], []
    for rec in corpus:
        res = merge_cwe(rec, catalog)
        quarantine.extend((rec.id.raw, c) for c in res.quarantined)
        if res.changed:
            changed.append(res.record)
    return (corpus.with_records(changed) if changed else corpus), quarantine


def cwe_gap_report(before: Corpus, after: Corpus, quarantined: int = 0) -> CweGapReport:
    """Placeholder counts in *before* and how many of them *after* fixes."""
    counts = {"other": 0, "noinfo": 0, "unassigned": 0}
    fixed_other = fixed_rest = 0
    for rec in before:
        kind = _gap_kind(rec)
        if kind is None:
            continue
        counts[kind] += 1
        if after.records.get(rec.id) is not None and after.records[rec.id].concrete_cwes:
            if kind == "other":
                fixed_other += 1
            else:
                fixed_rest += 1
    return CweGapReport(
        counts["other"], counts["noinfo"], counts["unassigned"], fixed_other, fixed_rest, quarantined
    )


# --- description preprocessing ----------------------------------------------

STOP_WORDS = frozenset(
    """
    i me my myself we our ours ourselves you you're you've you'll you'd your
    yours yourself yourselves he him his himself she she's her hers herself it
    it's its itself they them their theirs themselves what which who whom this
    that that'll these those am is are was were be been being have has had
    having do does did doing a an the and but if or because as until while of
    at by for with about against between into through during before after
    above below to from up down in out on off over under again further then
    once here there when where why how all any both each few more most other
    some such no nor not only own same so than too very s t can will just don
    don't should should've now d ll m o re ve y ain aren aren't couldn
    couldn't didn didn't doesn doesn't hadn hadn't hasn hasn't haven haven't
    isn isn't ma mightn mightn't mustn mustn't needn needn't shan shan't
    shouldn shouldn't wasn wasn't weren weren't won won't wouldn wouldn't
    """.split()
)

_CONTRACTIONS = {
    "n't": " not",
    "'re": "",
    "'ve": "",
    "'ll": "",
    "'d": "",
    "'m": "",
    "'s": "",
    "s'": "s",
}
_CONTRACTION_RE = re.compile(r"(n't|'re|'ve|'ll|'d|'m|'s|s')\b")
_NON_WORD_RE = re.compile(r"[^a-z0-9\s]+")

_IRREGULAR_PAST = {
    "was": "be", "were": "be", "been": "be", "had": "have", "did": "do", "done": "do",
    "made": "make", "sent": "send", "found": "find", "got": "get", "gave": "give",
    "took": "take", "led": "lead", "ran": "run", "wrote": "write", "written": "write",
    "read": "read", "set": "set", "put": "put", "left": "leave", "built": "build",
    "known": "know", "seen": "see", "chosen": "choose", "given": "give", "taken": "take",
}
_E_RESTORE_1 = ("s", "v", "z", "c", "g", "u")
# two-letter endings restore "e" only after a single vowel: "located" but "heated"
_E_RESTORE_2 = ("at", "iz", "bl", "ur", "ut", "ok", "or", "in")


def present_tense(word: str) -> str:
    """Rule-based past-tense reduction ("accessed" -> "access",
    "used" -> "use"). Not a full lemmatizer."""
    if word in _IRREGULAR_PAST:
        return _IRREGULAR_PAST[word]
    if len(word) <= 3 or not word.endswith("ed") or word.endswith("eed"):
        return word
    if word.endswith("ied") and len(word) > 4:
        return word[:-3] + "y"
    stem = word[:-2]
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in "lsz":
        return stem[:-1]
    if stem[-1] in "aeiouy" and not stem.endswith("u"):
        return stem
    if stem.endswith("ss") or stem[-2:] in ("ck", "sh", "ch"):
        return stem
    if stem.endswith(_E_RESTORE_1):
        return stem + "e"
    if stem.endswith(_E_RESTORE_2) and not re.search(r"[aeiou]{2}[^aeiou]$", stem):
        return stem + "e"
    return stem


def preprocess_description(text: str) -> str:
    """Lowercase, expand/drop contractions, strip special characters and
    stop words, and reduce past tense."""
    text = (text or "").lower().replace("’", "'")
    text = _CONTRACTION_RE.sub(lambda m: _CONTRACTIONS[m.group(1)], text)
    text = _NON_WORD_RE.sub(" ", text)
    words = [w for w in text.split() if w not in STOP_WORDS]
    return " ".join(present_tense(w) for w in words)


def catalog_from_rows(rows: Iterable[tuple[str, str]]) -> CweCatalog:
    return CweCatalog(dict(rows))
