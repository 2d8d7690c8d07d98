"""Vendor/product name inconsistency detection and repair.

Candidate pairs are generated by cheap heuristics, adjudicated by a human
in a TSV decision file, and the matched groups are collapsed onto the
member with the most associated CVEs.
"""

from __future__ import annotations

import csv
import io
import logging
import re
from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .core import Corpus, CpeEntry

log = logging.getLogger(__name__)

_SPLIT_RE = re.compile(r"[\W_]+", re.UNICODE)

# Product edit-distance gate: distance 1 always, distance 2 only with a
# long shared substring.
PRODUCT_EDIT_ALWAYS = 1
PRODUCT_EDIT_WITH_LCS = 2
PRODUCT_EDIT_LCS_MIN = 5

VENDOR_LCS_GATE = 3


class Kind(str, Enum):
    VENDOR = "Vendor"
    PRODUCT = "Product"


class DecidedBy(str, Enum):
    HEURISTIC_MANUAL = "Heuristic+Manual"
    IMPORTED_FILE = "ImportedFile"


class UndecidedPairsError(ValueError):
    def __init__(self, pairs):
        self.pairs = list(pairs)
        listing = ", ".join(f"{k.value}:{a}|{b}" for k, a, b in self.pairs[:20])
        more = "" if len(self.pairs) <= 20 else f" (+{len(self.pairs) - 20} more)"
        super().__init__(f"{len(self.pairs)} undecided pair(s): {listing}{more}")


class UnknownVendorError(KeyError):
    pass


# --- string primitives ------------------------------------------------------


def normalize_tokens(name: str) -> list[str]:
    """Lowercase tokens split on whitespace and special characters."""
    return [t for t in _SPLIT_RE.split(name.lower()) if t]


def longest_common_substring(a: str, b: str) -> int:
    """Length of the longest contiguous substring shared by *a* and *b*."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    best = 0
    for ca in a:
        cur = [0] * (len(b) + 1)
        for j, cb in enumerate(b, 1):
            if ca == cb:
                v = prev[j - 1] + 1
                cur[j] = v
                if v > best:
                    best = v
        prev = cur
    return best


def levenshtein(a: str, b: str, max_dist: Optional[int] = None) -> int:
    """Insert/delete/substitute edit distance.

    With *max_dist*, returns ``max_dist + 1`` as soon as the distance is
    known to exceed it.
    """
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if max_dist is not None and len(a) - len(b) > max_dist:
        return max_dist + 1
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        if max_dist is not None and min(cur) > max_dist:
            return max_dist + 1
        prev = cur
    return prev[-1]


def abbreviation(name: str) -> str:
    """First letters of a multi-token name ("lan_management_system" -> "lms")."""
    tokens = normalize_tokens(name)
    if len(tokens) < 2:
        return ""
    return "".join(t[0] for t in tokens)


def _abbreviation_match(a: str, b: str) -> bool:
    ta, tb = normalize_tokens(a), normalize_tokens(b)
    if len(ta) >= 2 and len(tb) == 1:
        return abbreviation(a) == tb[0]
    if len(tb) >= 2 and len(ta) == 1:
        return abbreviation(b) == ta[0]
    return False


# --- pair classification ----------------------------------------------------


@dataclass(frozen=True)
class PairClassification:
    kind: Kind
    a: str
    b: str
    tokens_equal: bool
    lcs_length: int
    is_prefix: bool
    product_as_vendor: bool
    matching_products: int
    abbreviation_match: bool
    edit_distance: int
    vendor: Optional[str] = None  # owning vendor, product pairs only

    @property
    def key(self) -> tuple[Kind, str, str]:
        return (self.kind, _scoped(self.a, self.vendor), _scoped(self.b, self.vendor))

    def flags(self) -> str:
        parts = []
        if self.tokens_equal:
            parts.append("tokens")
        if self.is_prefix:
            parts.append("prefix")
        if self.product_as_vendor:
            parts.append("pav")
        if self.abbreviation_match:
            parts.append("abbrev")
        if self.kind is Kind.VENDOR:
            parts.append(f"mp={self.matching_products}")
        parts.append(f"lcs={self.lcs_length}")
        parts.append(f"ed={self.edit_distance}")
        return ",".join(parts)


def _scoped(name: str, vendor: Optional[str]) -> str:
    return f"{vendor}:{name}" if vendor else name


def _unscope(kind: Kind, raw: str) -> tuple[Optional[str], str]:
    if kind is Kind.PRODUCT:
        vendor, _, product = raw.partition(":")
        return vendor, product
    return None, raw


def classify_pair(
    kind: Kind | str, a: str, b: str, corpus: Corpus, vendor: Optional[str] = None
) -> PairClassification:
    kind = Kind(kind)
    if a == b:
        raise ValueError("a pair needs two distinct names")
    a, b = sorted((a, b))
    mp, pav = 0, False
    if kind is Kind.VENDOR:
        pa = corpus.vendor_index.get(a, frozenset())
        pb = corpus.vendor_index.get(b, frozenset())
        mp = len(pa & pb)
        pav = b in pa or a in pb
    return PairClassification(
        kind=kind,
        a=a,
        b=b,
        tokens_equal=normalize_tokens(a) == normalize_tokens(b),
        lcs_length=longest_common_substring(a, b),
        is_prefix=a.startswith(b) or b.startswith(a),
        product_as_vendor=pav,
        matching_products=mp,
        abbreviation_match=_abbreviation_match(a, b),
        edit_distance=levenshtein(a, b),
        vendor=vendor if kind is Kind.PRODUCT else None,
    )


def _grams(name: str, n: int = VENDOR_LCS_GATE) -> set[str]:
    return {name[i: i + n] for i in range(len(name) - n + 1)}


def candidate_vendor_pairs(corpus: Corpus) -> list[PairClassification]:
    """Vendor pairs meeting at least one matching heuristic.

    A pair reaches the worksheet when the names share a substring of length
    three or more, one is a prefix of the other, they are equal up to
    separators, one abbreviates the other, one appears as a product of the
    other, or they list a common product. Pairs with no shared product, no
    shared character and no prefix relation are always dropped.
    """
    vendors = sorted(corpus.vendor_index)
    pairs: set[tuple[str, str]] = set()

    def add(x: str, y: str) -> None:
        if x != y:
            pairs.add((x, y) if x < y else (y, x))

    by_gram: dict[str, list[str]] = defaultdict(list)
    by_tokens: dict[tuple[str, ...], list[str]] = defaultdict(list)
    by_abbrev: dict[str, list[str]] = defaultdict(list)
    by_product: dict[str, list[str]] = defaultdict(list)
    for v in vendors:
        for g in _grams(v):
            by_gram[g].append(v)
        tokens = tuple(normalize_tokens(v))
        by_tokens[tokens].append(v)
        if len(tokens) >= 2:
            by_abbrev[abbreviation(v)].append(v)
        for p in corpus.vendor_index[v]:
            by_product[p].append(v)

    for group in (*by_gram.values(), *by_tokens.values(), *by_product.values()):
        for x, y in combinations(group, 2):
            add(x, y)
    vendor_set = set(vendors)
    single = {tokens[0]: names for tokens, names in by_tokens.items() if len(tokens) == 1}
    for abbr, longs in by_abbrev.items():
        for short in single.get(abbr, ()):
            for v in longs:
                add(v, short)
    # prefix relations, including short names that form no 3-gram
    for i, v in enumerate(vendors):
        j = bisect_left(vendors, v, i + 1)
        while j < len(vendors) and vendors[j].startswith(v):
            add(v, vendors[j])
            j += 1
    # product-as-vendor
    for v in vendors:
        for p in corpus.vendor_index[v]:
            if p in vendor_set:
                add(v, p)

    out = []
    for x, y in sorted(pairs):
        pc = classify_pair(Kind.VENDOR, x, y, corpus)
        if pc.matching_products == 0 and pc.lcs_length == 0 and not pc.is_prefix:
            continue
        out.append(pc)
    return out


def _product_gate(pc: PairClassification) -> bool:
    if pc.tokens_equal or pc.abbreviation_match:
        return True
    if pc.edit_distance <= PRODUCT_EDIT_ALWAYS:
        return True
    return pc.edit_distance <= PRODUCT_EDIT_WITH_LCS and pc.lcs_length >= PRODUCT_EDIT_LCS_MIN


def candidate_product_pairs(corpus: Corpus, vendor: str) -> list[PairClassification]:
    """Product pairs under one vendor equal up to separators, related by
    abbreviation, or within the edit-distance gate."""
    if vendor not in corpus.vendor_index:
        raise UnknownVendorError(vendor)
    products = sorted(corpus.vendor_index[vendor])
    out = []
    for a, b in combinations(products, 2):
        quick = normalize_tokens(a) == normalize_tokens(b) or _abbreviation_match(a, b)
        if not quick and levenshtein(a, b, PRODUCT_EDIT_WITH_LCS) > PRODUCT_EDIT_WITH_LCS:
            continue
        pc = classify_pair(Kind.PRODUCT, a, b, corpus, vendor=vendor)
        if _product_gate(pc):
            out.append(pc)
    return out


def all_product_pairs(corpus: Corpus) -> list[PairClassification]:
    return [pc for v in sorted(corpus.vendor_index) for pc in candidate_product_pairs(corpus, v)]


# --- review worksheet and decisions -----------------------------------------

WORKSHEET_COLUMNS = ("kind", "a", "b", "flags", "match", "note")


@dataclass(frozen=True)
class Decision:
    kind: Kind
    a: str
    b: str
    match: bool
    note: str = ""

    @property
    def key(self) -> tuple[Kind, str, str]:
        a, b = sorted((self.a, self.b))
        return (self.kind, a, b)


def _parse_match(text: str) -> Optional[bool]:
    t = text.strip().lower()
    if t in ("yes", "y", "true", "1"):
        return True
    if t in ("no", "n", "false", "0"):
        return False
    return None


def read_decisions(path: str | Path) -> dict[tuple[Kind, str, str], Decision]:
    """Load a decision TSV; rows with an empty match column are ignored."""
    out = {}
    path = Path(path)
    if not path.exists():
        return out
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            match = _parse_match(row.get("match") or "")
            if match is None:
                continue
            d = Decision(Kind(row["kind"]), row["a"], row["b"], match, row.get("note") or "")
            out[d.key] = d
    return out


def worksheet_tsv(
    pairs: Iterable[PairClassification], decisions: Mapping[tuple, Decision] = {}
) -> str:
    """Review worksheet with prior decisions filled in; decision-only rows
    (manual additions) are carried over."""
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(WORKSHEET_COLUMNS)
    seen = set()
    for pc in pairs:
        d = decisions.get(pc.key)
        seen.add(pc.key)
        match = "" if d is None else ("yes" if d.match else "no")
        a, b = pc.key[1], pc.key[2]
        w.writerow([pc.kind.value, a, b, pc.flags(), match, d.note if d else ""])
    for key in sorted(set(decisions) - seen):
        d = decisions[key]
        w.writerow([d.kind.value, key[1], key[2], "manual", "yes" if d.match else "no", d.note])
    return buf.getvalue()


# --- mapping ----------------------------------------------------------------


@dataclass(frozen=True)
class MappingEntry:
    canonical: str
    decided_by: DecidedBy
    flags: str = ""


@dataclass(frozen=True)
class NameMapping:
    """raw -> canonical, keyed by (kind, raw). Product raws are scoped as
    ``vendor:product`` with the vendor already canonical."""

    entries: Mapping[tuple[Kind, str], MappingEntry] = field(default_factory=dict)

    def __post_init__(self):
        for (kind, raw), e in self.entries.items():
            if raw == e.canonical:
                raise ValueError(f"identity entry for {raw!r}")
            nxt = self.entries.get((kind, e.canonical))
            if nxt is not None:
                raise ValueError(f"canonical {e.canonical!r} is itself remapped")

    def __len__(self) -> int:
        return len(self.entries)

    def vendor(self, name: str) -> str:
        e = self.entries.get((Kind.VENDOR, name))
        return e.canonical if e else name

    def product(self, vendor: str, product: str) -> str:
        e = self.entries.get((Kind.PRODUCT, _scoped(product, vendor)))
        return _unscope(Kind.PRODUCT, e.canonical)[1] if e else product

    def to_tsv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        w.writerow(["kind", "raw", "canonical", "decided_by"])
        for (kind, raw), e in sorted(self.entries.items()):
            w.writerow([kind.value, raw, e.canonical, e.decided_by.value])
        return buf.getvalue()

    @classmethod
    def from_tsv(cls, text: str) -> "NameMapping":
        entries = {}
        for row in csv.DictReader(io.StringIO(text), delimiter="\t"):
            entries[(Kind(row["kind"]), row["raw"])] = MappingEntry(
                row["canonical"], DecidedBy.IMPORTED_FILE
            )
        return cls(entries)

    def merged(self, other: "NameMapping") -> "NameMapping":
        return NameMapping({**self.entries, **other.entries})


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: str, y: str) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            self.parent[max(rx, ry)] = min(rx, ry)

    def groups(self) -> list[list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for x in list(self.parent):
            out[self.find(x)].append(x)
        return [sorted(g) for _, g in sorted(out.items())]


def choose_canonical(group: Iterable[str], cve_counts: Mapping[str, int]) -> str:
    """Member with the most CVEs; ties go to the lexicographically smallest."""
    return min(group, key=lambda n: (-cve_counts.get(n, 0), n))


def build_mapping(
    pairs: Iterable[PairClassification],
    decisions: Mapping[tuple[Kind, str, str], Decision],
    cve_counts: Mapping[tuple[Kind, str], int],
) -> NameMapping:
    """Collapse every matched group onto its canonical member.

    *cve_counts* is keyed like mapping entries: (Kind.VENDOR, vendor) and
    (Kind.PRODUCT, "vendor:product"). Every flagged pair must be decided;
    decisions for unflagged pairs are honoured as manual additions.
    """
    pairs = list(pairs)
    undecided = [pc.key for pc in pairs if pc.key not in decisions]
    if undecided:
        raise UndecidedPairsError(sorted(undecided))
    flags = {pc.key: pc.flags() for pc in pairs}

    finders: dict[Kind, _UnionFind] = defaultdict(_UnionFind)
    member_flags: dict[tuple[Kind, str], str] = {}
    for key, d in sorted(decisions.items()):
        if not d.match:
            continue
        kind, a, b = key
        if kind is Kind.PRODUCT and _unscope(kind, a)[0] != _unscope(kind, b)[0]:
            raise ValueError(f"product decision spans two vendors: {a} / {b}")
        finders[kind].union(a, b)
        for n in (a, b):
            member_flags.setdefault((kind, n), flags.get(key, "manual"))

    entries = {}
    for kind, uf in sorted(finders.items()):
        for group in uf.groups():
            counts = {n: cve_counts.get((kind, n), 0) for n in group}
            canon = choose_canonical(group, counts)
            for n in group:
                if n != canon:
                    entries[(kind, n)] = MappingEntry(
                        canon, DecidedBy.HEURISTIC_MANUAL, member_flags.get((kind, n), "")
                    )
    return NameMapping(entries)


def cve_count_table(corpus: Corpus) -> dict[tuple[Kind, str], int]:
    table: dict[tuple[Kind, str], int] = {}
    for v, n in corpus.vendor_cve_counts().items():
        table[(Kind.VENDOR, v)] = n
    for (v, p), n in corpus.product_cve_counts().items():
        table[(Kind.PRODUCT, _scoped(p, v))] = n
    return table


@dataclass(frozen=True)
class ApplyStats:
    vendors_before: int
    vendors_after: int
    products_before: int
    products_after: int
    records_changed: int

    def as_dict(self) -> dict:
        return {
            "vendors_before": self.vendors_before,
            "vendors_after": self.vendors_after,
            "vendor_delta": self.vendors_after - self.vendors_before,
            "products_before": self.products_before,
            "products_after": self.products_after,
            "product_delta": self.products_after - self.products_before,
            "records_changed": self.records_changed,
        }


def apply_mapping(corpus: Corpus, mapping: NameMapping) -> tuple[Corpus, ApplyStats]:
    """Rewrite every CPE vendor/product through *mapping*."""
    changed = []
    for rec in corpus:
        new_cpes = []
        for c in rec.cpes:
            vendor = mapping.vendor(c.vendor)
            product = mapping.product(vendor, c.product)
            new_cpes.append(CpeEntry(vendor, product, c.version))
        new_cpes = tuple(dict.fromkeys(new_cpes))
        if new_cpes != rec.cpes:
            changed.append(rec.evolve(cpes=new_cpes))
    out = corpus.with_records(changed) if changed else corpus
    stats = ApplyStats(
        len(corpus.vendor_index),
        len(out.vendor_index),
        len(corpus.product_index),
        len(out.product_index),
        len(changed),
    )
    return out, stats


def remap_external_vendor_list(names: Iterable[str], mapping: NameMapping) -> dict[str, int]:
    names = list(dict.fromkeys(n.lower() for n in names))
    impacted = [n for n in names if (Kind.VENDOR, n) in mapping.entries]
    targets = {mapping.vendor(n) for n in impacted}
    return {"total": len(names), "impacted": len(impacted), "consolidated_targets": len(targets)}


# --- pattern statistics -----------------------------------------------------

PATTERN_CATEGORIES = ("Tokens", "#MP=0", "#MP=1", "#MP>1", "Pref", "PaV")


def pattern_category(pc: PairClassification) -> str:
    """Single category per pair, by precedence Tokens > PaV > Pref > #MP."""
    if pc.tokens_equal:
        return "Tokens"
    if pc.product_as_vendor:
        return "PaV"
    if pc.is_prefix:
        return "Pref"
    if pc.matching_products > 1:
        return "#MP>1"
    return f"#MP={pc.matching_products}"


def pattern_stats(
    pairs: Iterable[PairClassification], decisions: Mapping[tuple, Decision]
) -> dict[tuple[str, str, str], tuple[int, int]]:
    """(row, category, lcs band) -> (unique pairs, unique names).

    Rows are "Possible" (all flagged) and "Confirmed" (decided matching).
    Tokens pairs carry band "all"; others are split at |LCS| >= 3.
    """
    cells: dict[tuple[str, str, str], list[set]] = {}
    for row in ("Possible", "Confirmed"):
        cells[(row, "Tokens", "all")] = [set(), set()]
        for cat in PATTERN_CATEGORIES[1:]:
            for band in (">=3", "<3"):
                cells[(row, cat, band)] = [set(), set()]
    for pc in pairs:
        if pc.kind is not Kind.VENDOR:
            continue
        if pc.key not in decisions:
            raise UndecidedPairsError([pc.key])
        cat = pattern_category(pc)
        band = "all" if cat == "Tokens" else (">=3" if pc.lcs_length >= 3 else "<3")
        rows = ["Possible"] + (["Confirmed"] if decisions[pc.key].match else [])
        for row in rows:
            pset, nset = cells[(row, cat, band)]
            pset.add((pc.a, pc.b))
            nset.update((pc.a, pc.b))
    return {k: (len(p), len(n)) for k, (p, n) in cells.items()}


def pattern_stats_tsv(stats: Mapping[tuple[str, str, str], tuple[int, int]]) -> str:
    cols = [("Tokens", "all")] + [
        (c, b) for b in (">=3", "<3") for c in PATTERN_CATEGORIES[1:]
    ]
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["row"] + [f"{c}|LCS{b}" if b != "all" else c for c, b in cols])
    for row in ("Possible", "Confirmed"):
        w.writerow([row] + ["%d (%d)" % stats[(row, c, b)] for c, b in cols])
    return buf.getvalue()
