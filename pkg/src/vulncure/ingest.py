"""Parse NVD JSON data feeds (schema 1.0/1.1) and auxiliary inputs."""

from __future__ import annotations

import gzip
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Iterable, Optional
from urllib.parse import unquote

from .core import (
    AccessComplexity,
    AccessVector,
    Authentication,
    Corpus,
    CpeEntry,
    CveId,
    CveRecord,
    CvssV2Assessment,
    CvssV3Assessment,
    DateSource,
    DisclosureEstimate,
    Impact,
    Provenance,
    Reference,
)

log = logging.getLogger(__name__)

FEED_PATTERNS = ("nvdcve-*.json", "nvdcve-*.json.gz")


class FeedFormatError(ValueError):
    """The feed document as a whole cannot be parsed."""


class NoFeedsError(FileNotFoundError):
    pass


class _Skip(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class FeedStats:
    records_total: int = 0
    records_skipped: int = 0
    skip_reasons: Counter = field(default_factory=Counter)

    @property
    def records_parsed(self) -> int:
        return self.records_total - self.records_skipped

    def skip(self, reason: str) -> None:
        self.records_skipped += 1
        self.skip_reasons[reason] += 1

    def merge(self, other: "FeedStats") -> None:
        self.records_total += other.records_total
        self.records_skipped += other.records_skipped
        self.skip_reasons.update(other.skip_reasons)

    def as_dict(self) -> dict:
        return {
            "records_total": self.records_total,
            "records_parsed": self.records_parsed,
            "records_skipped": self.records_skipped,
            "skip_reasons": dict(sorted(self.skip_reasons.items())),
        }


def _decode(feed_bytes: bytes) -> Any:
    if feed_bytes[:2] == b"\x1f\x8b":
        try:
            feed_bytes = gzip.decompress(feed_bytes)
        except OSError as exc:
            raise FeedFormatError(f"corrupt gzip stream: {exc}") from exc
    try:
        return json.loads(feed_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FeedFormatError(f"feed is not valid JSON: {exc}") from exc


def parse_feed(feed_bytes: bytes) -> tuple[list[CveRecord], FeedStats]:
    """Parse one NVD feed document into records.

    Malformed items are counted in the returned stats and skipped; only an
    unreadable top-level document raises :class:`FeedFormatError`.
    """
    doc = _decode(feed_bytes)
    if not isinstance(doc, dict) or not isinstance(doc.get("CVE_Items"), list):
        raise FeedFormatError("document has no CVE_Items list")

    stats = FeedStats()
    records = []
    for item in doc["CVE_Items"]:
        stats.records_total += 1
        try:
            records.append(_parse_item(item))
        except _Skip as skip:
            stats.skip(skip.reason)
    return records, stats


def _parse_date(raw: Any) -> date:
    if not isinstance(raw, str) or len(raw) < 10:
        raise _Skip("bad-date")
    try:
        return date.fromisoformat(raw[:10])
    except ValueError:
        raise _Skip("bad-date") from None


def _parse_item(item: Any) -> CveRecord:
    if not isinstance(item, dict) or not isinstance(item.get("cve"), dict):
        raise _Skip("not-an-item")
    cve = item["cve"]
    raw_id = (cve.get("CVE_data_meta") or {}).get("ID")
    if not raw_id:
        raise _Skip("no-id")
    try:
        cve_id = CveId.parse(raw_id)
    except ValueError:
        raise _Skip("bad-id") from None

    descriptions = tuple(
        d["value"].strip()
        for d in (cve.get("description") or {}).get("description_data", [])
        if isinstance(d, dict) and isinstance(d.get("value"), str) and d["value"].strip()
    )
    if not descriptions:
        raise _Skip("no-description")

    published = _parse_date(item.get("publishedDate"))
    last_modified = _parse_date(item.get("lastModifiedDate", item.get("publishedDate")))
    if published > last_modified:
        raise _Skip("dates-out-of-order")

    references = tuple(
        Reference(r["url"].strip(), tuple(r.get("tags") or ()))
        for r in (cve.get("references") or {}).get("reference_data", [])
        if isinstance(r, dict) and isinstance(r.get("url"), str) and r["url"].strip()
    )

    cwes = set()
    for pt in (cve.get("problemtype") or {}).get("problemtype_data", []):
        for d in pt.get("description", []):
            value = d.get("value")
            if isinstance(value, str):
                cwes.add(value.strip())

    impact = item.get("impact") or {}
    try:
        v2 = _parse_v2(impact.get("baseMetricV2"))
        v3 = _parse_v3(impact.get("baseMetricV3"))
    except (KeyError, ValueError, TypeError):
        raise _Skip("bad-cvss") from None

    cpes = _parse_configurations(item.get("configurations"))
    if not cpes:
        legacy = item.get("vulnerable_software_list") or cve.get("vulnerable_software_list") or []
        cpes = [e for e in (_cpe_from_uri(u) for u in legacy) if e is not None]

    return CveRecord(
        id=cve_id,
        published=published,
        last_modified=last_modified,
        descriptions=descriptions,
        references=references,
        cwe_ids=frozenset(cwes),
        v2=v2,
        v3=v3,
        cpes=tuple(dict.fromkeys(cpes)),
    )


def _parse_v2(metric: Optional[dict]) -> Optional[CvssV2Assessment]:
    if not metric:
        return None
    c = metric["cvssV2"]
    return CvssV2Assessment(
        access_vector=AccessVector(c["accessVector"]),
        access_complexity=AccessComplexity(c["accessComplexity"]),
        authentication=Authentication(c["authentication"]),
        conf_impact=Impact(c["confidentialityImpact"]),
        integ_impact=Impact(c["integrityImpact"]),
        avail_impact=Impact(c["availabilityImpact"]),
        base_score=float(c["baseScore"]),
        obtain_all_privilege=bool(metric.get("obtainAllPrivilege", False)),
        obtain_user_privilege=bool(metric.get("obtainUserPrivilege", False)),
        obtain_other_privilege=bool(metric.get("obtainOtherPrivilege", False)),
        user_interaction_required=bool(metric.get("userInteractionRequired", False)),
    )


def _parse_v3(metric: Optional[dict]) -> Optional[CvssV3Assessment]:
    if not metric:
        return None
    return CvssV3Assessment(float(metric["cvssV3"]["baseScore"]), Provenance.FROM_FEED)


def _split_escaped(text: str, sep: str = ":") -> list[str]:
    parts, buf, escaped = [], [], False
    for ch in text:
        if escaped:
            buf.append(ch)
            escaped = False
        elif ch == "\\":
            escaped = True
        elif ch == sep:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return parts


def _cpe_from_uri(uri: Any) -> Optional[CpeEntry]:
    """Read vendor/product/version from a CPE 2.3 formatted string or a
    CPE 2.2 URI. Returns None for anything unusable."""
    if not isinstance(uri, str):
        return None
    if uri.startswith("cpe:2.3:"):
        fields = _split_escaped(uri[len("cpe:2.3:"):])
        if len(fields) < 3:
            return None
        vendor, product = fields[1], fields[2]
        version = fields[3] if len(fields) > 3 else None
    elif uri.startswith("cpe:/"):
        fields = uri[len("cpe:/"):].split(":")
        if len(fields) < 3:
            return None
        vendor, product = unquote(fields[1]), unquote(fields[2])
        version = unquote(fields[3]) if len(fields) > 3 else None
    else:
        return None
    if vendor in ("", "*", "-") or product in ("", "*", "-"):
        return None
    if version in ("", "*", "-"):
        version = None
    return CpeEntry(vendor, product, version)


def _parse_configurations(config: Any) -> list[CpeEntry]:
    if not isinstance(config, dict):
        return []
    out: list[CpeEntry] = []
    stack = list(config.get("nodes") or [])
    while stack:
        node = stack.pop(0)
        if not isinstance(node, dict):
            continue
        for match in (node.get("cpe_match") or node.get("cpe") or []):
            if not isinstance(match, dict) or not match.get("vulnerable", True):
                continue
            entry = _cpe_from_uri(match.get("cpe23Uri") or match.get("cpe22Uri"))
            if entry is not None:
                out.append(entry)
        stack.extend(node.get("children") or [])
    return out


def write_feed(records: Iterable[CveRecord], compress: bool = False) -> bytes:
    """Serialize records as an NVD 1.1 feed document (fixture writer)."""
    items = [_record_to_item(r) for r in records]
    doc = {
        "CVE_data_type": "CVE",
        "CVE_data_format": "MITRE",
        "CVE_data_version": "4.0",
        "CVE_data_numberOfCVEs": str(len(items)),
        "CVE_Items": items,
    }
    data = json.dumps(doc, indent=1, sort_keys=False).encode("utf-8")
    return gzip.compress(data, mtime=0) if compress else data


def _cpe23(entry: CpeEntry) -> str:
    def esc(s: str) -> str:
        return "".join("\\" + ch if not (ch.isalnum() or ch in "_-.") else ch for ch in s)

    version = esc(entry.version) if entry.version else "*"
    return f"cpe:2.3:a:{esc(entry.vendor)}:{esc(entry.product)}:{version}:*:*:*:*:*:*:*"


def _record_to_item(rec: CveRecord) -> dict:
    impact: dict[str, Any] = {}
    if rec.v3 is not None and rec.v3.provenance is Provenance.FROM_FEED:
        impact["baseMetricV3"] = {
            "cvssV3": {
                "version": "3.0",
                "baseScore": rec.v3.base_score,
                "baseSeverity": rec.v3.label.value.upper(),
            }
        }
    if rec.v2 is not None:
        v2 = rec.v2
        impact["baseMetricV2"] = {
            "cvssV2": {
                "version": "2.0",
                "accessVector": v2.access_vector.value,
                "accessComplexity": v2.access_complexity.value,
                "authentication": v2.authentication.value,
                "confidentialityImpact": v2.conf_impact.value,
                "integrityImpact": v2.integ_impact.value,
                "availabilityImpact": v2.avail_impact.value,
                "baseScore": v2.base_score,
            },
            "severity": v2.label.value.upper(),
            "obtainAllPrivilege": v2.obtain_all_privilege,
            "obtainUserPrivilege": v2.obtain_user_privilege,
            "obtainOtherPrivilege": v2.obtain_other_privilege,
            "userInteractionRequired": v2.user_interaction_required,
        }
    return {
        "cve": {
            "data_type": "CVE",
            "data_format": "MITRE",
            "data_version": "4.0",
            "CVE_data_meta": {"ID": rec.id.raw, "ASSIGNER": "cve@mitre.org"},
            "problemtype": {
                "problemtype_data": [
                    {"description": [{"lang": "en", "value": c} for c in sorted(rec.cwe_ids)]}
                ]
            },
            "references": {
                "reference_data": [
                    {"url": r.url, "name": r.url, "refsource": "MISC", "tags": list(r.tags)}
                    for r in rec.references
                ]
            },
            "description": {
                "description_data": [{"lang": "en", "value": d} for d in rec.descriptions]
            },
        },
        "configurations": {
            "CVE_data_version": "4.0",
            "nodes": [
                {
                    "operator": "OR",
                    "children": [],
                    "cpe_match": [{"vulnerable": True, "cpe23Uri": _cpe23(c)} for c in rec.cpes],
                }
            ],
        },
        "impact": impact,
        "publishedDate": f"{rec.published.isoformat()}T00:00Z",
        "lastModifiedDate": f"{rec.last_modified.isoformat()}T00:00Z",
    }


def _feed_files(directory: Path) -> list[Path]:
    files = set()
    for pattern in FEED_PATTERNS:
        files.update(directory.glob(pattern))
    return sorted(files)


def _newer(a: CveRecord, b: CveRecord) -> CveRecord:
    if a.last_modified != b.last_modified:
        return a if a.last_modified > b.last_modified else b
    # identical timestamps: pick by content so file order never matters
    ka = json.dumps(record_to_dict(a), sort_keys=True)
    kb = json.dumps(record_to_dict(b), sort_keys=True)
    return a if ka >= kb else b


def load_snapshot_with_stats(directory: str | Path) -> tuple[Corpus, FeedStats]:
    directory = Path(directory)
    files = _feed_files(directory) if directory.is_dir() else []
    if not files:
        raise NoFeedsError(f"no feeds found in {directory}")
    stats = FeedStats()
    merged: dict[CveId, CveRecord] = {}
    for path in files:
        records, feed_stats = parse_feed(path.read_bytes())
        log.info("parsed %s: %d records, %d skipped", path.name,
                 feed_stats.records_parsed, feed_stats.records_skipped)
        stats.merge(feed_stats)
        for rec in records:
            prev = merged.get(rec.id)
            merged[rec.id] = rec if prev is None else _newer(prev, rec)
    return Corpus(merged), stats


def load_snapshot(directory: str | Path) -> Corpus:
    """Union every ``nvdcve-*.json[.gz]`` feed in *directory*; when an id
    repeats, the record with the later last-modified date wins."""
    return load_snapshot_with_stats(directory)[0]


def load_external_vendor_list(path: str | Path) -> list[str]:
    names: dict[str, None] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            name = line.strip().lower()
            if name:
                names.setdefault(name)
    return list(names)


# Internal corpus serialization, used for workspace artifacts. Unlike the
# feed writer it keeps disclosure estimates and predicted v3 scores.


def record_to_dict(rec: CveRecord) -> dict:
    out: dict[str, Any] = {
        "id": rec.id.raw,
        "published": rec.published.isoformat(),
        "last_modified": rec.last_modified.isoformat(),
        "descriptions": list(rec.descriptions),
        "references": [{"url": r.url, "tags": list(r.tags)} for r in rec.references],
        "cwe_ids": sorted(rec.cwe_ids),
        "cpes": [[c.vendor, c.product, c.version] for c in rec.cpes],
        "v2": None,
        "v3": None,
        "edd": None,
    }
    if rec.v2 is not None:
        v2 = rec.v2
        out["v2"] = {
            "access_vector": v2.access_vector.value,
            "access_complexity": v2.access_complexity.value,
            "authentication": v2.authentication.value,
            "conf_impact": v2.conf_impact.value,
            "integ_impact": v2.integ_impact.value,
            "avail_impact": v2.avail_impact.value,
            "base_score": v2.base_score,
            "obtain_all_privilege": v2.obtain_all_privilege,
            "obtain_user_privilege": v2.obtain_user_privilege,
            "obtain_other_privilege": v2.obtain_other_privilege,
            "user_interaction_required": v2.user_interaction_required,
        }
    if rec.v3 is not None:
        out["v3"] = {"base_score": rec.v3.base_score, "provenance": rec.v3.provenance.value}
    if rec.edd is not None:
        out["edd"] = {
            "edd": rec.edd.edd.isoformat(),
            "source": rec.edd.source.value,
            "source_url": rec.edd.source_url,
            "lag_days": rec.edd.lag_days,
        }
    return out


def record_from_dict(d: dict) -> CveRecord:
    v2 = v3 = edd = None
    if d.get("v2"):
        x = d["v2"]
        v2 = CvssV2Assessment(
            AccessVector(x["access_vector"]),
            AccessComplexity(x["access_complexity"]),
            Authentication(x["authentication"]),
            Impact(x["conf_impact"]),
            Impact(x["integ_impact"]),
            Impact(x["avail_impact"]),
            float(x["base_score"]),
            x["obtain_all_privilege"],
            x["obtain_user_privilege"],
            x["obtain_other_privilege"],
            x["user_interaction_required"],
        )
    if d.get("v3"):
        v3 = CvssV3Assessment(float(d["v3"]["base_score"]), Provenance(d["v3"]["provenance"]))
    if d.get("edd"):
        e = d["edd"]
        edd = DisclosureEstimate(
            date.fromisoformat(e["edd"]), DateSource(e["source"]), e["lag_days"], e.get("source_url")
        )
    return CveRecord(
        id=CveId.parse(d["id"]),
        published=date.fromisoformat(d["published"]),
        last_modified=date.fromisoformat(d["last_modified"]),
        descriptions=tuple(d["descriptions"]),
        references=tuple(Reference(r["url"], tuple(r["tags"])) for r in d["references"]),
        cwe_ids=frozenset(d["cwe_ids"]),
        v2=v2,
        v3=v3,
        cpes=tuple(CpeEntry(v, p, ver) for v, p, ver in d["cpes"]),
        edd=edd,
    )


def dump_corpus(corpus: Corpus) -> str:
    return json.dumps(
        {"records": [record_to_dict(r) for r in corpus]}, indent=1, sort_keys=True
    ) + "\n"


def load_corpus(text: str) -> Corpus:
    return Corpus.from_records(record_from_dict(d) for d in json.loads(text)["records"])
