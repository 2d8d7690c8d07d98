"""Disclosure-date estimation from reference pages, and lag statistics."""

from __future__ import annotations

import csv
import hashlib
import io
import ipaddress
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import date
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional
from urllib.parse import urlsplit

from .core import Corpus, CveRecord, DateSource, DisclosureEstimate, SeverityLabel

log = logging.getLogger(__name__)


class UrlError(ValueError):
    pass


class MissingEstimateError(ValueError):
    pass


# Second-level labels under which registrations happen one level deeper
# (bbc.co.uk, jvn.go.jp, ...). A full public-suffix list is not needed for
# the reference-domain population.
_SECOND_LEVEL = {"co", "com", "org", "net", "ac", "gov", "edu", "ne", "or", "go", "gob", "mil"}


def extract_domain(url: str) -> str:
    """Registrable host of *url*, lowercased and without port."""
    if not isinstance(url, str) or "://" not in url:
        raise UrlError(f"not an absolute URL: {url!r}")
    try:
        host = urlsplit(url.strip()).hostname
    except ValueError as exc:
        raise UrlError(f"unparseable URL {url!r}: {exc}") from exc
    if not host or " " in host:
        raise UrlError(f"URL has no host: {url!r}")
    host = host.rstrip(".").lower()
    try:
        ipaddress.ip_address(host)
        return host
    except ValueError:
        pass
    labels = host.split(".")
    if len(labels) < 2 or not all(labels):
        raise UrlError(f"URL host is not a domain name: {url!r}")
    if len(labels) >= 3 and len(labels[-1]) == 2 and labels[-2] in _SECOND_LEVEL:
        return ".".join(labels[-3:])
    return ".".join(labels[-2:])


@dataclass(frozen=True)
class DomainCoverage:
    ranked: tuple[tuple[str, int], ...]
    total_urls: int
    unparseable: int = 0

    def coverage_at(self, k: int) -> float:
        if self.total_urls == 0:
            return 0.0
        return sum(n for _, n in self.ranked[: max(k, 0)]) / self.total_urls


def rank_domains(corpus: Corpus) -> DomainCoverage:
    counts: Counter = Counter()
    bad = 0
    for rec in corpus:
        for ref in rec.references:
            try:
                counts[extract_domain(ref.url)] += 1
            except UrlError:
                bad += 1
    ranked = tuple(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
    return DomainCoverage(ranked, sum(counts.values()), bad)


# --- page date extraction ---------------------------------------------------

_MONTHS = {
    m: i
    for i, names in enumerate(
        [
            ("jan", "january"), ("feb", "february"), ("mar", "march"), ("apr", "april"),
            ("may",), ("jun", "june"), ("jul", "july"), ("aug", "august"),
            ("sep", "sept", "september"), ("oct", "october"), ("nov", "november"),
            ("dec", "december"),
        ],
        start=1,
    )
    for m in names
}
_MONTH_ALT = "|".join(sorted(_MONTHS, key=len, reverse=True))

_ISO_RE = re.compile(r"(?<!\d)(\d{4})-(\d{2})-(\d{2})(?!\d)")
_MDY_RE = re.compile(rf"\b({_MONTH_ALT})\.?\s+(\d{{1,2}})(?:st|nd|rd|th)?,?\s+(\d{{4}})\b", re.I)
_DMY_RE = re.compile(rf"\b(\d{{1,2}})\s+({_MONTH_ALT})\.?,?\s+(\d{{4}})\b", re.I)

_META_DATE_KEYS = (
    "article:published_time",
    "datepublished",
    "date",
    "dc.date",
    "dc.date.issued",
    "dcterms.created",
    "dcterms.issued",
    "pubdate",
    "publishdate",
    "publication_date",
    "citation_publication_date",
    "og:published_time",
    "sailthru.date",
)


def _safe_date(y: int, m: int, d: int) -> Optional[date]:
    try:
        out = date(y, m, d)
    except ValueError:
        return None
    return out if 1970 <= y <= 2100 else None


def _text_dates(text: str) -> list[tuple[int, date]]:
    """All recognized dates in *text* as (offset, date), in reading order."""
    found = []
    for m in _ISO_RE.finditer(text):
        d = _safe_date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
        if d:
            found.append((m.start(), d))
    for m in _MDY_RE.finditer(text):
        d = _safe_date(int(m.group(3)), _MONTHS[m.group(1).lower()], int(m.group(2)))
        if d:
            found.append((m.start(), d))
    for m in _DMY_RE.finditer(text):
        d = _safe_date(int(m.group(3)), _MONTHS[m.group(2).lower()], int(m.group(1)))
        if d:
            found.append((m.start(), d))
    found.sort(key=lambda x: x[0])
    return found


class _PageParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.meta: list[tuple[str, str]] = []
        self.time_tags: list[str] = []
        self.text: list[str] = []
        self._skip = 0

    def handle_starttag(self, tag, attrs):
        a = {k.lower(): (v or "") for k, v in attrs}
        if tag == "meta":
            key = (a.get("property") or a.get("name") or a.get("itemprop") or "").lower()
            if key and a.get("content"):
                self.meta.append((key, a["content"]))
        elif tag == "time" and a.get("datetime"):
            self.time_tags.append(a["datetime"])
        elif tag in ("script", "style"):
            self._skip += 1

    def handle_endtag(self, tag):
        if tag in ("script", "style") and self._skip:
            self._skip -= 1

    def handle_data(self, data):
        if not self._skip:
            self.text.append(data)


def _parse_page(html: bytes) -> _PageParser:
    parser = _PageParser()
    parser.feed(html.decode("utf-8", errors="replace"))
    parser.close()
    return parser


def _pick(dates: list[date], use_min: bool) -> Optional[date]:
    if not dates:
        return None
    return min(dates) if use_min else dates[0]


def generic_extractor(html: bytes, use_min: bool = False) -> Optional[date]:
    """Fallback: meta date tags, then ISO-8601, then written-out dates."""
    page = _parse_page(html)
    meta = [
        d
        for key, content in page.meta
        if key in _META_DATE_KEYS
        for _, d in _text_dates(content)[:1]
    ]
    meta += [d for t in page.time_tags for _, d in _text_dates(t)[:1]]
    if meta:
        return _pick(meta, use_min)
    text = " ".join(page.text)
    iso = [d for off, d in _text_dates(text) if _ISO_RE.match(text, off)]
    if iso:
        return _pick(iso, use_min)
    return _pick([d for _, d in _text_dates(text)], use_min)


def _labelled_extractor(labels: Iterable[str]) -> Callable[[bytes, bool], Optional[date]]:
    """Extractor reading the date that follows one of *labels* in page text."""
    pattern = re.compile(r"(?:%s)\s*:?\s*" % "|".join(re.escape(lb) for lb in labels), re.I)

    def extract(html: bytes, use_min: bool = False) -> Optional[date]:
        text = " ".join(_parse_page(html).text)
        text = re.sub(r"\s+", " ", text)
        hits = []
        for m in pattern.finditer(text):
            window = text[m.end(): m.end() + 40]
            for got in (_text_dates(window), _text_dates(_mon_dd_yyyy(window))):
                if got and got[0][0] == 0:
                    hits.append(got[0][1])
                    break
        return _pick(hits, use_min)

    return extract


_MON_DD_YYYY = re.compile(rf"^({_MONTH_ALT})\s+(\d{{1,2}})\s+(\d{{4}})", re.I)


def _mon_dd_yyyy(window: str) -> str:
    # SecurityFocus style "Feb 07 2011 12:00AM" has no comma
    m = _MON_DD_YYYY.match(window)
    return f"{m.group(1)} {m.group(2)}, {m.group(3)}" if m else ""


class ExtractorRegistry:
    """Maps domains to page-date extractors; unknown domains use the generic
    fallback. Read-only once built."""

    def __init__(self, use_min: bool = False):
        self.use_min = use_min
        self._by_domain: dict[str, Callable[[bytes, bool], Optional[date]]] = {}

    def register(self, domain: str, extractor: Callable[[bytes, bool], Optional[date]]) -> None:
        self._by_domain[domain.lower()] = extractor

    def __contains__(self, domain: str) -> bool:
        return domain.lower() in self._by_domain

    def extractor_for(self, domain: str) -> Callable[[bytes, bool], Optional[date]]:
        domain = domain.lower()
        if domain in self._by_domain:
            return self._by_domain[domain]
        if "bugzilla" in domain:
            return self._by_domain.get("bugzilla", generic_extractor)
        return generic_extractor

    @classmethod
    def default(cls, use_min: bool = False) -> "ExtractorRegistry":
        reg = cls(use_min)
        reg.register("securityfocus.com", _labelled_extractor(["Published"]))
        reg.register("securitytracker.com", _labelled_extractor(["Date"]))
        reg.register("bugzilla", _labelled_extractor(["Reported", "Opened", "Creation date"]))
        return reg


def _is_bugzilla_url(url: str) -> bool:
    return "bugzilla" in url.lower() or "show_bug.cgi" in url.lower()


def extract_page_date(domain: str, html: bytes, registry: ExtractorRegistry) -> Optional[date]:
    if not html or not html.strip():
        return None
    extractor = registry.extractor_for(domain)
    found = extractor(html, registry.use_min)
    if found is None and extractor is not generic_extractor:
        found = generic_extractor(html, registry.use_min)
    return found


# --- offline page store -----------------------------------------------------


def fixture_path(fixtures_dir: str | Path, url: str) -> Path:
    """Location of the stored page for *url*: ``<domain>/<sha256(url)>.html``."""
    digest = hashlib.sha256(url.encode("utf-8")).hexdigest()
    return Path(fixtures_dir) / extract_domain(url) / f"{digest}.html"


def store_page(fixtures_dir: str | Path, url: str, html: bytes) -> Path:
    path = fixture_path(fixtures_dir, url)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(html)
    path.with_suffix(".url").write_text(url + "\n", encoding="utf-8")
    return path


def load_page_store(fixtures_dir: str | Path) -> dict[str, bytes]:
    """Map URL -> stored page body for every fixture with a .url sidecar."""
    store = {}
    root = Path(fixtures_dir)
    if not root.is_dir():
        return store
    for sidecar in sorted(root.glob("*/*.url")):
        page = sidecar.with_suffix(".html")
        if page.exists():
            store[sidecar.read_text(encoding="utf-8").strip()] = page.read_bytes()
    return store


def fetch_into_store(
    fixtures_dir: str | Path, urls: Iterable[str], fetch: Callable[[str], Optional[bytes]]
) -> int:
    """Populate the page store through a caller-supplied fetch hook.

    Already-stored URLs are not refetched. Returns the number of new pages.
    """
    added = 0
    for url in urls:
        try:
            path = fixture_path(fixtures_dir, url)
        except UrlError:
            continue
        if path.exists():
            continue
        body = fetch(url)
        if body:
            store_page(fixtures_dir, url, body)
            added += 1
    return added


# --- estimation ---------------------------------------------------------------


def estimate_disclosure(
    record: CveRecord, page_dates: Iterable[tuple[str, date]]
) -> DisclosureEstimate:
    """Earliest of the record's reference-page dates and its NVD published
    date. Page dates after publication are discarded as noise; on a tie the
    reference page is credited."""
    best_url, best = None, None
    for url, d in page_dates:
        if d > record.published:
            continue
        if best is None or d < best or (d == best and url < best_url):
            best_url, best = url, d
    if best is None:
        return DisclosureEstimate(record.published, DateSource.NVD_PUBLISHED, 0)
    return DisclosureEstimate(
        best, DateSource.REFERENCE_PAGE, (record.published - best).days, best_url
    )


def page_dates_for(
    record: CveRecord, store: Mapping[str, bytes], registry: ExtractorRegistry
) -> list[tuple[str, date]]:
    out = []
    for ref in record.references:
        html = store.get(ref.url)
        if html is None:
            continue
        try:
            domain = extract_domain(ref.url)
        except UrlError:
            continue
        if _is_bugzilla_url(ref.url) and domain not in registry:
            domain = "bugzilla"
        d = extract_page_date(domain, html, registry)
        if d is not None:
            out.append((ref.url, d))
    return out


def estimate_corpus(
    corpus: Corpus, store: Mapping[str, bytes], registry: Optional[ExtractorRegistry] = None
) -> Corpus:
    registry = registry or ExtractorRegistry.default()
    return corpus.with_records(
        rec.evolve(edd=estimate_disclosure(rec, page_dates_for(rec, store, registry)))
        for rec in corpus
    )


def _require_estimates(corpus: Corpus) -> None:
    for rec in corpus:
        if rec.edd is None:
            raise MissingEstimateError(f"{rec.id} has no disclosure estimate")


def lag_cdf(corpus: Corpus) -> list[tuple[int, int, float]]:
    """Rows of (lag_days, count, cumulative_fraction) at every observed lag."""
    _require_estimates(corpus)
    counts = Counter(rec.edd.lag_days for rec in corpus)
    total = sum(counts.values())
    rows, running = [], 0
    for lag in sorted(counts):
        running += counts[lag]
        rows.append((lag, counts[lag], running / total))
    return rows


def cdf_at(rows: list[tuple[int, int, float]], lag: int) -> float:
    """Right-continuous step lookup: fraction of records with lag <= *lag*."""
    frac = 0.0
    for days, _, cum in rows:
        if days > lag:
            break
        frac = cum
    return frac


def lag_cdf_csv(rows: list[tuple[int, int, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag_days", "count", "cumulative_fraction"])
    for lag, n, frac in rows:
        w.writerow([lag, n, f"{frac:.6f}"])
    return buf.getvalue()


def lag_by_severity(corpus: Corpus) -> dict[SeverityLabel, float]:
    """Mean lag per v3 label (feed or predicted); empty labels omitted."""
    groups: dict[SeverityLabel, list[int]] = defaultdict(list)
    for rec in corpus:
        if rec.edd is not None and rec.v3 is not None:
            groups[rec.v3.label].append(rec.edd.lag_days)
    return {label: sum(v) / len(v) for label, v in sorted(groups.items()) if v}
