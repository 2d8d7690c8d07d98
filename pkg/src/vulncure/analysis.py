"""Case-study reports over a raw or corrected corpus."""

from __future__ import annotations

import calendar
import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .core import (
    PLACEHOLDER_CWES,
    V2_LABELS,
    V3_LABELS,
    Corpus,
    CveRecord,
    Provenance,
    SeverityLabel,
)
from .cwe import CweCatalog


class CorpusTag(str, Enum):
    RAW = "Raw"
    CORRECTED = "Corrected"


class DateField(str, Enum):
    PUBLISHED = "Published"
    EDD = "EDD"


class Scheme(str, Enum):
    V2 = "V2"
    V3_FEED = "V3Feed"
    PV3 = "PV3"


class VendorMetric(str, Enum):
    CVE_COUNT = "CveCount"
    PRODUCT_COUNT = "ProductCount"


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class Report:
    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    corpus_tag: CorpusTag = CorpusTag.RAW
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"{self.name}: row width {len(row)} != {len(self.columns)}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self, meta: Optional[dict] = None) -> str:
        doc = {
            "name": self.name,
            "corpus_tag": self.corpus_tag.value,
            "params": self.params,
            "columns": list(self.columns),
            "rows": [[_cell(v) for v in row] for row in self.rows],
            "meta": meta or {},
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _cell(v: Any):
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, float):
        return round(v, 2)
    if hasattr(v, "isoformat"):
        return v.isoformat()
    return v


def _pct(n: int, total: int) -> float:
    return round(100.0 * n / total, 2) if total else 0.0


def _date_of(rec: CveRecord, date_field: DateField):
    if date_field is DateField.PUBLISHED:
        return rec.published
    if rec.edd is None:
        raise ReportError(f"{rec.id} has no disclosure estimate; run estimate-dates first")
    return rec.edd.edd


def top_dates(
    corpus: Corpus, date_field: DateField | str = DateField.PUBLISHED, n: int = 10,
    tag: CorpusTag = CorpusTag.RAW,
) -> Report:
    """Busiest dates with weekday and share of that year's records (by the
    same date field)."""
    date_field = DateField(date_field)
    dates = [_date_of(rec, date_field) for rec in corpus]
    per_day = Counter(dates)
    per_year = Counter(d.year for d in dates)
    ranked = sorted(per_day.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    rows = tuple(
        (d, calendar.day_name[d.weekday()], c, _pct(c, per_year[d.year])) for d, c in ranked
    )
    return Report(
        f"top_dates_{date_field.value.lower()}",
        ("date", "day_of_week", "count", "percent_of_year"),
        rows,
        tag,
        {"date_field": date_field.value, "n": n},
    )


def day_of_week_histogram(
    corpus: Corpus, date_field: DateField | str = DateField.PUBLISHED,
    tag: CorpusTag = CorpusTag.RAW,
) -> Report:
    date_field = DateField(date_field)
    counts = Counter(_date_of(rec, date_field).weekday() for rec in corpus)
    total = sum(counts.values())
    rows = tuple((calendar.day_name[i], counts[i], _pct(counts[i], total)) for i in range(7))
    return Report(
        f"day_of_week_{date_field.value.lower()}",
        ("day_of_week", "count", "percent"),
        rows,
        tag,
        {"date_field": date_field.value},
    )


def _label(rec: CveRecord, scheme: Scheme) -> Optional[SeverityLabel]:
    if scheme is Scheme.V2:
        return rec.v2.label if rec.v2 else None
    if rec.v3 is None:
        return None
    if scheme is Scheme.V3_FEED and rec.v3.provenance is not Provenance.FROM_FEED:
        return None
    return rec.v3.label


def _check_scheme(corpus: Corpus, scheme: Scheme) -> None:
    if scheme is Scheme.PV3 and any(r.v2 is not None and r.v3 is None for r in corpus):
        raise ReportError("predicted v3 scores missing; run backfill-v3 first")


def _scheme_labels(scheme: Scheme, present) -> list[SeverityLabel]:
    labels = list(V2_LABELS if scheme is Scheme.V2 else V3_LABELS)
    if scheme is not Scheme.V2 and SeverityLabel.NONE in present:
        labels.insert(0, SeverityLabel.NONE)
    return labels


def severity_distribution(
    corpus: Corpus, scheme: Scheme | str = Scheme.V2, by_year: bool = False,
    tag: CorpusTag = CorpusTag.RAW,
) -> Report:
    """Label counts and percentages, overall or per publication year.
    Records with no label under the scheme are left out."""
    scheme = Scheme(scheme)
    _check_scheme(corpus, scheme)
    labelled = [(rec.published.year, _label(rec, scheme)) for rec in corpus]
    labelled = [(y, lab) for y, lab in labelled if lab is not None]
    labels = _scheme_labels(scheme, {lab for _, lab in labelled})
    if by_year:
        rows = []
        for year in sorted({y for y, _ in labelled}):
            counts = Counter(lab for y, lab in labelled if y == year)
            total = sum(counts.values())
            rows += [(year, lab.value, counts[lab], _pct(counts[lab], total)) for lab in labels]
        columns = ("year", "label", "count", "percent")
    else:
        counts = Counter(lab for _, lab in labelled)
        total = sum(counts.values())
        rows = [(lab.value, counts[lab], _pct(counts[lab], total)) for lab in labels]
        columns = ("label", "count", "percent")
    return Report(
        f"severity_{scheme.value.lower()}" + ("_by_year" if by_year else ""),
        columns,
        tuple(rows),
        tag,
        {"scheme": scheme.value, "by_year": by_year},
    )


def top_cwe_by_severity(
    corpus: Corpus,
    scheme: Scheme | str,
    level: SeverityLabel | str,
    n: int = 10,
    catalog: Optional[CweCatalog] = None,
    tag: CorpusTag = CorpusTag.RAW,
) -> Report:
    """Most frequent CWE types among records at one severity level. A record
    listing several CWEs counts once for each."""
    scheme = Scheme(scheme)
    level = SeverityLabel(level)
    _check_scheme(corpus, scheme)
    counts: Counter = Counter()
    for rec in corpus:
        if _label(rec, scheme) is level:
            counts.update(c for c in rec.cwe_ids if c != "")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    catalog = catalog or CweCatalog()
    rows = tuple(
        (cwe, catalog.name(cwe) or (cwe if cwe in PLACEHOLDER_CWES else ""), c) for cwe, c in ranked
    )
    return Report(
        f"top_cwe_{scheme.value.lower()}_{level.value.lower()}",
        ("cwe_id", "name", "count"),
        rows,
        tag,
        {"scheme": scheme.value, "level": level.value, "n": n},
    )


def top_vendors(
    corpus: Corpus, metric: VendorMetric | str = VendorMetric.CVE_COUNT, n: int = 10,
    tag: CorpusTag = CorpusTag.RAW,
) -> Report:
    """Vendors ranked by associated CVEs or by distinct products. A CVE
    touching several vendors counts once for each of them."""
    metric = VendorMetric(metric)
    if metric is VendorMetric.CVE_COUNT:
        counts = corpus.vendor_cve_counts()
        total = len(corpus)
    else:
        counts = {v: len(p) for v, p in corpus.vendor_index.items()}
        total = len(corpus.product_index)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    rows = tuple((v, c, _pct(c, total)) for v, c in ranked)
    return Report(
        f"top_vendors_{metric.value.lower()}",
        ("vendor", "count", "percent_of_total"),
        rows,
        tag,
        {"metric": metric.value, "n": n},
    )


def mislabeled_severity_breakdown(
    raw: Corpus, corrected: Corpus, scheme: Scheme | str = Scheme.V2
) -> Report:
    """Per severity label, how many CVEs had vendor (resp. product) names
    rewritten between *raw* and *corrected*."""
    scheme = Scheme(scheme)
    if set(raw.records) != set(corrected.records):
        missing = sorted(set(raw.records) ^ set(corrected.records))[:5]
        raise ReportError(f"corpora do not share record ids, e.g. {[str(m) for m in missing]}")
    _check_scheme(corrected, scheme)
    vendor_counts: Counter = Counter()
    product_counts: Counter = Counter()
    for cve_id, before in raw.records.items():
        after = corrected.records[cve_id]
        label = _label(after, scheme)
        if label is None:
            continue
        if before.vendors != after.vendors:
            vendor_counts[label] += 1
        if {p for _, p in before.products} != {p for _, p in after.products}:
            product_counts[label] += 1
    labels = _scheme_labels(scheme, set(vendor_counts) | set(product_counts))
    rows = tuple((lab.value, vendor_counts[lab], product_counts[lab]) for lab in labels)
    return Report(
        f"mislabeled_{scheme.value.lower()}",
        ("label", "mislabeled_vendor", "mislabeled_product"),
        rows,
        CorpusTag.CORRECTED,
        {"scheme": scheme.value},
    )
