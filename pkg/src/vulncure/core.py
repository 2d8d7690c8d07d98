"""Domain types shared across the toolkit: CVE records, CVSS assessments,
severity thresholds and the indexed corpus container."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import date
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

PLACEHOLDER_CWES = frozenset({"NVD-CWE-Other", "NVD-CWE-noinfo", ""})

_CVE_ID_RE = re.compile(r"^CVE-(\d{4})-(\d{4,})$")


class RangeError(ValueError):
    """A numeric input lies outside its permitted range."""


class CvssVersion(str, Enum):
    V2 = "V2"
    V3 = "V3"


class SeverityLabel(str, Enum):
    NONE = "None"
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    CRITICAL = "Critical"

    @property
    def rank(self) -> int:
        return _LABEL_ORDER[self]

    @property
    def short(self) -> str:
        return "N" if self is SeverityLabel.NONE else self.value[0]

    def __lt__(self, other):
        if not isinstance(other, SeverityLabel):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other):
        if not isinstance(other, SeverityLabel):
            return NotImplemented
        return self.rank <= other.rank

    def __gt__(self, other):
        if not isinstance(other, SeverityLabel):
            return NotImplemented
        return self.rank > other.rank

    def __ge__(self, other):
        if not isinstance(other, SeverityLabel):
            return NotImplemented
        return self.rank >= other.rank

    __hash__ = str.__hash__


_LABEL_ORDER = {label: i for i, label in enumerate(SeverityLabel)}

V2_LABELS = (SeverityLabel.LOW, SeverityLabel.MEDIUM, SeverityLabel.HIGH)
V3_LABELS = (
    SeverityLabel.LOW,
    SeverityLabel.MEDIUM,
    SeverityLabel.HIGH,
    SeverityLabel.CRITICAL,
)


def score_to_label(score: float, version: CvssVersion | str) -> SeverityLabel:
    """Map a CVSS base score to its severity label.

    v2: Low [0.0, 4.0), Medium [4.0, 7.0), High [7.0, 10.0].
    v3: None 0.0, Low (0.0, 4.0), Medium [4.0, 7.0), High [7.0, 9.0),
    Critical [9.0, 10.0].

    Scores between the one-decimal band edges (e.g. 3.95) fall in the lower
    band, so predicted scores need not be rounded first.
    """
    version = CvssVersion(version)
    if not 0.0 <= score <= 10.0:
        raise RangeError(f"CVSS score must be within [0, 10], got {score}")
    if version is CvssVersion.V3:
        if score == 0.0:
            return SeverityLabel.NONE
        if score >= 9.0:
            return SeverityLabel.CRITICAL
    if score >= 7.0:
        return SeverityLabel.HIGH
    if score >= 4.0:
        return SeverityLabel.MEDIUM
    return SeverityLabel.LOW


@dataclass(frozen=True, order=True)
class CveId:
    year: int
    sequence: int

    @classmethod
    def parse(cls, raw: str) -> "CveId":
        m = _CVE_ID_RE.match(raw.strip().upper())
        if not m:
            raise ValueError(f"not a CVE identifier: {raw!r}")
        cid = cls(int(m.group(1)), int(m.group(2)))
        if cid.sequence < 1:
            raise ValueError(f"CVE sequence must be >= 1: {raw!r}")
        return cid

    @property
    def raw(self) -> str:
        return f"CVE-{self.year:04d}-{self.sequence:04d}"

    @property
    def legacy(self) -> bool:
        return self.year < 1999

    def __str__(self) -> str:
        return self.raw


class AccessVector(str, Enum):
    LOCAL = "LOCAL"
    ADJACENT_NETWORK = "ADJACENT_NETWORK"
    NETWORK = "NETWORK"


class AccessComplexity(str, Enum):
    HIGH = "HIGH"
    MEDIUM = "MEDIUM"
    LOW = "LOW"


class Authentication(str, Enum):
    MULTIPLE = "MULTIPLE"
    SINGLE = "SINGLE"
    NONE = "NONE"


class Impact(str, Enum):
    NONE = "NONE"
    PARTIAL = "PARTIAL"
    COMPLETE = "COMPLETE"


class Provenance(str, Enum):
    FROM_FEED = "FromFeed"
    PREDICTED = "Predicted"


@dataclass(frozen=True)
class CvssV2Assessment:
    access_vector: AccessVector
    access_complexity: AccessComplexity
    authentication: Authentication
    conf_impact: Impact
    integ_impact: Impact
    avail_impact: Impact
    base_score: float
    obtain_all_privilege: bool = False
    obtain_user_privilege: bool = False
    obtain_other_privilege: bool = False
    user_interaction_required: bool = False

    def __post_init__(self):
        if not 0.0 <= self.base_score <= 10.0:
            raise RangeError(f"v2 base score out of range: {self.base_score}")

    @property
    def label(self) -> SeverityLabel:
        return score_to_label(self.base_score, CvssVersion.V2)


@dataclass(frozen=True)
class CvssV3Assessment:
    base_score: float
    provenance: Provenance = Provenance.FROM_FEED

    def __post_init__(self):
        if not 0.0 <= self.base_score <= 10.0:
            raise RangeError(f"v3 base score out of range: {self.base_score}")

    @property
    def label(self) -> SeverityLabel:
        return score_to_label(self.base_score, CvssVersion.V3)


@dataclass(frozen=True, order=True)
class CpeEntry:
    vendor: str
    product: str
    version: Optional[str] = None

    def __post_init__(self):
        if not self.vendor or not self.product:
            raise ValueError("CPE vendor and product must be nonempty")
        object.__setattr__(self, "vendor", self.vendor.lower())
        object.__setattr__(self, "product", self.product.lower())


class DateSource(str, Enum):
    NVD_PUBLISHED = "NvdPublished"
    REFERENCE_PAGE = "ReferencePage"


@dataclass(frozen=True)
class DisclosureEstimate:
    edd: date
    source: DateSource
    lag_days: int
    source_url: Optional[str] = None

    def __post_init__(self):
        if self.lag_days < 0:
            raise ValueError("lag_days must be nonnegative")


@dataclass(frozen=True)
class Reference:
    url: str
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class CveRecord:
    id: CveId
    published: date
    last_modified: date
    descriptions: tuple[str, ...]
    references: tuple[Reference, ...] = ()
    cwe_ids: frozenset[str] = frozenset()
    v2: Optional[CvssV2Assessment] = None
    v3: Optional[CvssV3Assessment] = None
    cpes: tuple[CpeEntry, ...] = ()
    edd: Optional[DisclosureEstimate] = None

    def __post_init__(self):
        if not self.descriptions:
            raise ValueError(f"{self.id}: at least one description is required")
        if self.published > self.last_modified:
            raise ValueError(f"{self.id}: published after last_modified")
        if self.edd is not None and self.edd.edd > self.published:
            raise ValueError(f"{self.id}: disclosure estimate after publication")

    @property
    def vendors(self) -> frozenset[str]:
        return frozenset(c.vendor for c in self.cpes)

    @property
    def products(self) -> frozenset[tuple[str, str]]:
        return frozenset((c.vendor, c.product) for c in self.cpes)

    @property
    def concrete_cwes(self) -> frozenset[str]:
        return frozenset(c for c in self.cwe_ids if c not in PLACEHOLDER_CWES)

    def evolve(self, **changes) -> "CveRecord":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Corpus:
    """Immutable collection of records keyed by CVE id, with vendor and
    product indices derived from the records' CPE entries."""

    records: Mapping[CveId, CveRecord] = field(default_factory=dict)
    vendor_index: Mapping[str, frozenset[str]] = field(init=False)
    product_index: Mapping[tuple[str, str], frozenset[CveId]] = field(init=False)

    def __post_init__(self):
        records = dict(sorted(self.records.items()))
        vendors, products = _derive_indices(records.values())
        object.__setattr__(self, "records", MappingProxyType(records))
        object.__setattr__(self, "vendor_index", MappingProxyType(vendors))
        object.__setattr__(self, "product_index", MappingProxyType(products))

    @classmethod
    def from_records(cls, records: Iterable[CveRecord]) -> "Corpus":
        by_id: dict[CveId, CveRecord] = {}
        for rec in records:
            if rec.id in by_id:
                raise ValueError(f"duplicate record {rec.id}")
            by_id[rec.id] = rec
        return cls(by_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records.values())

    def __getitem__(self, cve_id: CveId | str) -> CveRecord:
        if isinstance(cve_id, str):
            cve_id = CveId.parse(cve_id)
        return self.records[cve_id]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return dict(self.records) == dict(other.records)

    def __hash__(self):
        return hash(tuple(self.records.items()))

    def with_records(self, records: Iterable[CveRecord]) -> "Corpus":
        """Return a new corpus with the given records replacing same-id ones."""
        merged = dict(self.records)
        for rec in records:
            merged[rec.id] = rec
        return Corpus(merged)

    def vendor_cve_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for rec in self:
            for v in rec.vendors:
                counts[v] = counts.get(v, 0) + 1
        return counts

    def product_cve_counts(self) -> dict[tuple[str, str], int]:
        return {key: len(ids) for key, ids in self.product_index.items()}


def _derive_indices(records: Iterable[CveRecord]):
    vendors: dict[str, set[str]] = {}
    products: dict[tuple[str, str], set[CveId]] = {}
    for rec in records:
        for cpe in rec.cpes:
            vendors.setdefault(cpe.vendor, set()).add(cpe.product)
            products.setdefault((cpe.vendor, cpe.product), set()).add(rec.id)
    return (
        {k: frozenset(v) for k, v in sorted(vendors.items())},
        {k: frozenset(v) for k, v in sorted(products.items())},
    )


def rebuild_indices(corpus: Corpus) -> Corpus:
    """Return a corpus whose indices are recomputed from its records."""
    return Corpus(dict(corpus.records))
