"""Regenerate the bundled test fixtures.

Run from the repository root:  python3 tests/fixtures/build_fixtures.py

Everything here is built from literal tables and a seeded ``random.Random``
so the output is stable. Feed JSON is assembled directly as dicts (not via
the package's own writer) so ingest tests exercise an independent encoder.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import random
import shutil
from datetime import date, timedelta
from pathlib import Path
from urllib.parse import urlsplit

HERE = Path(__file__).resolve().parent
WS = HERE / "workspace"

AV = ["LOCAL", "ADJACENT_NETWORK", "NETWORK"]
AC = ["HIGH", "MEDIUM", "LOW"]
AU = ["MULTIPLE", "SINGLE", "NONE"]
IMP = ["NONE", "PARTIAL", "COMPLETE"]


def v2_metric(rng: random.Random) -> dict:
    av, ac, au = rng.choice(AV), rng.choice(AC), rng.choice(AU)
    c, i, a = rng.choice(IMP), rng.choice(IMP), rng.choice(IMP)
    impact = sum(IMP.index(x) for x in (c, i, a))
    score = round(min(10.0, 1.5 + 1.1 * impact + 0.6 * AV.index(av) + rng.uniform(0, 1.5)), 1)
    sev = "LOW" if score < 4 else "MEDIUM" if score < 7 else "HIGH"
    return {
        "cvssV2": {
            "version": "2.0",
            "accessVector": av,
            "accessComplexity": ac,
            "authentication": au,
            "confidentialityImpact": c,
            "integrityImpact": i,
            "availabilityImpact": a,
            "baseScore": score,
        },
        "severity": sev,
        "obtainAllPrivilege": rng.random() < 0.1,
        "obtainUserPrivilege": rng.random() < 0.1,
        "obtainOtherPrivilege": rng.random() < 0.1,
        "userInteractionRequired": rng.random() < 0.3,
    }


def v3_from_v2(m: dict, rng: random.Random) -> dict:
    s = m["cvssV2"]["baseScore"]
    conf = IMP.index(m["cvssV2"]["confidentialityImpact"]) / 2
    score = round(min(10.0, max(0.1, 0.9 * s + 1.0 + 0.5 * conf + rng.uniform(-0.4, 0.4))), 1)
    sev = "LOW" if score < 4 else "MEDIUM" if score < 7 else "HIGH" if score < 9 else "CRITICAL"
    return {"cvssV3": {"version": "3.0", "baseScore": score, "baseSeverity": sev}}


def item(
    cve_id: str,
    published: date,
    desc: str | list[str],
    cpes: list[tuple[str, str]],
    *,
    cwes=("CWE-20",),
    refs=(),
    v2=None,
    v3=None,
    modified: date | None = None,
) -> dict:
    descs = [desc] if isinstance(desc, str) else list(desc)
    impact = {}
    if v3 is not None:
        impact["baseMetricV3"] = v3
    if v2 is not None:
        impact["baseMetricV2"] = v2
    return {
        "cve": {
            "data_type": "CVE",
            "CVE_data_meta": {"ID": cve_id, "ASSIGNER": "cve@mitre.org"},
            "problemtype": {
                "problemtype_data": [{"description": [{"lang": "en", "value": c} for c in cwes]}]
            },
            "references": {
                "reference_data": [{"url": u, "name": u, "refsource": "MISC", "tags": []} for u in refs]
            },
            "description": {"description_data": [{"lang": "en", "value": d} for d in descs]},
        },
        "configurations": {
            "CVE_data_version": "4.0",
            "nodes": [
                {
                    "operator": "OR",
                    "cpe_match": [
                        {"vulnerable": True, "cpe23Uri": f"cpe:2.3:a:{v}:{p}:*:*:*:*:*:*:*:*"}
                        for v, p in cpes
                    ],
                }
            ],
        },
        "impact": impact,
        "publishedDate": f"{published.isoformat()}T17:29Z",
        "lastModifiedDate": f"{(modified or published).isoformat()}T10:00Z",
    }


def feed_doc(items: list[dict]) -> bytes:
    doc = {
        "CVE_data_type": "CVE",
        "CVE_data_format": "MITRE",
        "CVE_data_version": "4.0",
        "CVE_data_numberOfCVEs": str(len(items)),
        "CVE_Items": items,
    }
    return json.dumps(doc, indent=1).encode("utf-8")


# vendor, product, number of CVEs. Pairs the name heuristics must surface
# are spread across unrelated vendors so candidate generation has noise.
NAME_TABLE = [
    ("bea", "weblogic_server", 4),
    ("bea_systems", "weblogic_server", 1),
    ("bea_systems", "tuxedo", 1),
    ("avast", "antivirus", 3),
    ("avast!", "antivirus", 1),
    ("microsoft", "windows", 6),
    ("microsoft", "internet-explorer", 3),
    ("microsoft", "ie", 1),
    ("microsoft", "internet_explorer", 1),
    ("microsft", "office", 1),
    ("windows", "windows", 1),
    ("lynx", "lynx", 2),
    ("lynx_project", "lynx", 1),
    ("lan_management_system", "lan_management_system", 2),
    ("lms", "lms", 1),
    ("nativesolutions", "the_banner_engine", 2),
    ("nativesolutions", "tbe_banner_engine", 1),
    ("cisco", "ucs-e160dp-m1_firmware", 2),
    ("cisco", "ucs-e140dp-m1_firmware", 2),
    ("aol", "icq", 1),
    ("aol", "aim", 1),
    ("icq", "icq", 1),
    ("igor_sysoev", "nginx", 1),
    ("nginx", "nginx", 3),
    ("provos", "libevent", 1),
    ("neilsprovos", "honeyd", 1),
    ("oracle", "database_server", 3),
    ("oracle_corporation", "database_server", 1),
    ("apache", "http_server", 3),
    ("mozilla", "firefox", 3),
    ("mozilla", "thunderbird", 1),
    ("google", "chrome", 3),
    ("php", "php", 2),
    ("linux", "linux_kernel", 3),
]

# Pairs adjudicated as matching; everything else the worksheet lists is a
# non-match. Product pairs are under the already-consolidated vendor.
MATCHES = {
    ("Vendor", "bea", "bea_systems"),
    ("Vendor", "avast", "avast!"),
    ("Vendor", "microsft", "microsoft"),
    ("Vendor", "lynx", "lynx_project"),
    ("Vendor", "lan_management_system", "lms"),
    ("Vendor", "oracle", "oracle_corporation"),
    ("Vendor", "neilsprovos", "provos"),
    ("Vendor", "microsoft", "windows"),
    ("Product", "lan_management_system:lan_management_system", "lan_management_system:lms"),
    ("Product", "microsoft:ie", "microsoft:internet_explorer"),
    ("Product", "microsoft:ie", "microsoft:internet-explorer"),
    ("Product", "microsoft:internet-explorer", "microsoft:internet_explorer"),
    ("Product", "nativesolutions:tbe_banner_engine", "nativesolutions:the_banner_engine"),
}

CWE_CATALOG = [
    ("CWE-20", "Improper Input Validation"),
    ("CWE-22", "Improper Limitation of a Pathname to a Restricted Directory ('Path Traversal')"),
    ("CWE-78", "Improper Neutralization of Special Elements used in an OS Command ('OS Command Injection')"),
    ("CWE-79", "Improper Neutralization of Input During Web Page Generation ('Cross-site Scripting')"),
    ("CWE-89", "Improper Neutralization of Special Elements used in an SQL Command ('SQL Injection')"),
    ("CWE-119", "Improper Restriction of Operations within the Bounds of a Memory Buffer"),
    ("CWE-200", "Exposure of Sensitive Information to an Unauthorized Actor"),
    ("CWE-264", "Permissions, Privileges, and Access Controls"),
    ("CWE-352", "Cross-Site Request Forgery (CSRF)"),
    ("CWE-399", "Resource Management Errors"),
    ("CWE-416", "Use After Free"),
    ("CWE-835", "Loop with Unreachable Exit Condition ('Infinite Loop')"),
]


def page(title: str, body: str, meta: str = "") -> bytes:
    head = f"<title>{title}</title>{meta}"
    return f"<!DOCTYPE html>\n<html><head>{head}</head><body>{body}</body></html>\n".encode()


def store(pages_dir: Path, url: str, html: bytes) -> None:
    host = urlsplit(url).hostname
    labels = host.split(".")
    domain = ".".join(labels[-2:])
    digest = hashlib.sha256(url.encode()).hexdigest()
    d = pages_dir / domain
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{digest}.html").write_bytes(html)
    (d / f"{digest}.url").write_text(url + "\n", encoding="utf-8")


def build_workspace() -> None:
    if WS.exists():
        shutil.rmtree(WS)
    (WS / "feeds").mkdir(parents=True)
    pages = WS / "pages"
    pages.mkdir()
    rng = random.Random(20180521)
    by_year: dict[int, list[dict]] = {}
    cwes_pool = [c for c, _ in CWE_CATALOG if c != "CWE-835"]

    def add(it: dict) -> None:
        by_year.setdefault(int(it["cve"]["CVE_data_meta"]["ID"][4:8]), []).append(it)

    # hand-written records carrying the worked examples
    add(item(
        "CVE-2011-0700",
        date(2011, 3, 14),
        "Multiple cross-site scripting (XSS) vulnerabilities in the Lightbox plugin allow remote attackers to inject arbitrary web script.",
        [("wordpress", "wordpress")],
        cwes=("CWE-79",),
        refs=("http://www.securityfocus.com/bid/46284", "http://example.org/news/item-1"),
        v2=v2_metric(rng),
    ))
    store(pages, "http://www.securityfocus.com/bid/46284", page(
        "Lightbox Multiple XSS",
        "<table><tr><td>Bugtraq ID:</td><td>46284</td></tr>"
        "<tr><td>Published:</td><td>Feb 07 2011 12:00AM</td></tr>"
        "<tr><td>Updated:</td><td>Mar 15 2011 09:00AM</td></tr></table>",
    ))
    add(item(
        "CVE-2007-0838",
        date(2007, 2, 12),
        [
            "The client in a product allows remote servers to cause a denial of service (CPU consumption) via crafted responses.",
            "CWE-835: Loop with Unreachable Exit Condition ('Infinite Loop')",
        ],
        [("mozilla", "firefox")],
        cwes=("NVD-CWE-Other",),
        refs=("http://securitytracker.com/id?1017622",),
        v2=v2_metric(rng),
    ))
    store(pages, "http://securitytracker.com/id?1017622", page(
        "SecurityTracker Alert",
        "<p>SecurityTracker Alert ID: 1017622</p><p>Date: Feb 8 2007</p>"
        "<p>Impact: Denial of service via local system</p>",
    ))
    add(item(
        "CVE-2014-9999",
        date(2014, 6, 2),
        "Memory corruption in the parser (CWE-9999 per vendor advisory; CWE-119).",
        [("linux", "linux_kernel")],
        cwes=("NVD-CWE-noinfo",),
        refs=("https://bugzilla.redhat.com/show_bug.cgi?id=1100001",),
        v2=v2_metric(rng),
    ))
    store(pages, "https://bugzilla.redhat.com/show_bug.cgi?id=1100001", page(
        "Bug 1100001",
        "<table><tr><th>Reported:</th><td>2014-05-20 08:11 UTC by Someone</td></tr>"
        "<tr><th>Modified:</th><td>2014-07-01 10:00 UTC</td></tr></table>",
    ))
    add(item(
        "CVE-2015-0001",
        date(2015, 1, 13),
        "Privilege escalation in the kernel component.",
        [("linux", "linux_kernel")],
        cwes=(),
        refs=("https://blog.example.net/2015/post",),
        v2=v2_metric(rng),
    ))
    # page date after publication: discarded as an update timestamp
    store(pages, "https://blog.example.net/2015/post", page(
        "Advisory",
        "<p>Posted on January 20, 2015</p>",
        '<meta property="article:published_time" content="2015-01-20T08:00:00Z">',
    ))
    add(item(
        "CVE-2016-1000",
        date(2016, 3, 10),
        "A flaw exists that has no v2 metrics yet.",
        [("php", "php")],
        cwes=("CWE-20",),
    ))

    # bulk records: one per NAME_TABLE CVE, dates 2012..2018
    seq = 2000
    start = date(2012, 1, 2)
    for vendor, product, n in NAME_TABLE:
        for _ in range(n):
            seq += 1
            pub = start + timedelta(days=rng.randrange(0, 7 * 365))
            cve_id = f"CVE-{pub.year}-{seq}"
            m2 = v2_metric(rng)
            m3 = v3_from_v2(m2, rng) if pub.year >= 2015 or rng.random() < 0.5 else None
            cwe = rng.choice(cwes_pool + ["NVD-CWE-Other", "NVD-CWE-noinfo"])
            refs = []
            if rng.random() < 0.5:
                url = f"https://www.{vendor.replace('!', '').replace('_', '')}.example.com/advisories/{seq}"
                refs.append(url)
                lag = rng.choice([0, 0, 1, 3, 6, 10, 30, 90])
                when = pub - timedelta(days=lag)
                store(pages, url, page(
                    f"Advisory {seq}",
                    f"<h1>Security advisory</h1><p>Released {when:%B} {when.day}, {when.year}.</p>",
                ))
            if rng.random() < 0.3:
                refs.append(f"http://www.securityfocus.com/bid/{50000 + seq}")
            add(item(
                cve_id,
                pub,
                f"Unspecified vulnerability in {product} from {vendor} ({seq}).",
                [(vendor, product)],
                cwes=(cwe,),
                refs=tuple(refs),
                v2=m2,
                v3=m3,
            ))

    # a later re-export of one record in the next year's feed: newer wins
    first = by_year[2016][0]
    dup = json.loads(json.dumps(first))
    dup["cve"]["description"]["description_data"][0]["value"] += " (updated)"
    dup["lastModifiedDate"] = "2018-05-01T00:00Z"
    by_year.setdefault(2018, []).append(dup)
    # one malformed item, skipped at ingest
    bad = item("CVE-2018-0002", date(2018, 2, 1), "x", [("php", "php")])
    bad["cve"]["description"]["description_data"] = []
    by_year[2018].append(bad)

    for year, items in sorted(by_year.items()):
        data = feed_doc(items)
        if year % 2:
            (WS / "feeds" / f"nvdcve-1.1-{year}.json.gz").write_bytes(gzip.compress(data, mtime=0))
        else:
            (WS / "feeds" / f"nvdcve-1.1-{year}.json").write_bytes(data)

    (WS / "cwe_catalog.tsv").write_text(
        "id\tname\n" + "".join(f"{a}\t{b}\n" for a, b in CWE_CATALOG), encoding="utf-8"
    )
    (WS / "vendors_sf.txt").write_text(
        "BEA\nbea_systems\nMicrosoft\nmicrosft\nOracle\noracle_corporation\nsymantec\n", encoding="utf-8"
    )
    (WS / "vulncure.conf").write_text(
        "# bundled fixture workspace\n"
        "paths.feeds_dir = feeds\n"
        "paths.fixtures_dir = pages\n"
        "paths.decisions_file = decisions.tsv\n"
        "paths.cwe_catalog = cwe_catalog.tsv\n"
        "paths.vendor_lists = vendors_sf.txt\n"
        "paths.output_dir = out\n"
        "paths.mapping_file = out/mapping.tsv\n"
        "paths.model_file = out/model.json\n"
        "run.seed = 7\n"
        "severity.epochs = 40\n"
        "severity.batch_size = 16\n",
        encoding="utf-8",
    )


def write_decisions(worksheet: Path) -> int:
    """Turn a worksheet into decisions.tsv using MATCHES; returns row count."""
    lines = worksheet.read_text(encoding="utf-8").splitlines()
    out = [lines[0]]
    for line in lines[1:]:
        kind, a, b, flags, _match, _note = (line.split("\t") + ["", ""])[:6]
        ok = (kind, a, b) in MATCHES
        out.append("\t".join([kind, a, b, flags, "yes" if ok else "no", "fixture"]))
    (WS / "decisions.tsv").write_text("\n".join(out) + "\n", encoding="utf-8")
    return len(out) - 1


def build_feed100() -> None:
    """100 items: 93 valid, 7 malformed in known ways."""
    rng = random.Random(100)
    items = []
    for k in range(100):
        items.append(item(
            f"CVE-2017-{10000 + k}",
            date(2017, 1, 1) + timedelta(days=k),
            f"Issue number {k}.",
            [("vendor%d" % (k % 9), "product%d" % (k % 13))],
            v2=v2_metric(rng),
            v3=v3_from_v2(v2_metric(rng), rng) if k % 3 == 0 else None,
        ))
    items[5]["cve"]["description"]["description_data"] = []          # no-description
    items[17]["cve"]["description"]["description_data"][0]["value"] = "   "  # no-description
    items[23]["cve"]["CVE_data_meta"]["ID"] = "CVE-17-1"              # bad-id
    del items[42]["cve"]["CVE_data_meta"]["ID"]                       # no-id
    items[61]["publishedDate"] = "yesterday"                          # bad-date
    items[77]["lastModifiedDate"] = "2016-01-01T00:00Z"               # dates-out-of-order
    items[88]["impact"]["baseMetricV2"]["cvssV2"]["accessVector"] = "ORBITAL"  # bad-cvss
    (HERE / "feed100.json").write_bytes(feed_doc(items))


def build_vendor_list() -> None:
    """100 lines: 93 distinct names plus 7 upper-cased repeats."""
    rng = random.Random(7)
    base = [f"vendor_{i:02d}" for i in range(93)]
    dupes = [n.upper() for n in rng.sample(base, 7)]
    lines = base + dupes
    rng.shuffle(lines)
    (HERE / "vendors100.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    import subprocess
    import sys

    build_workspace()
    build_feed100()
    build_vendor_list()
    # decisions come from the package's own worksheet, adjudicated by MATCHES
    (WS / "decisions.tsv").write_text("kind\ta\tb\tflags\tmatch\tnote\n", encoding="utf-8")
    for _ in range(2):  # vendor round, then product round
        subprocess.run(
            [sys.executable, "-m", "vulncure.cli", "--config", str(WS / "vulncure.conf"), "ingest"],
            check=True,
        )
        subprocess.run(
            [sys.executable, "-m", "vulncure.cli", "--config", str(WS / "vulncure.conf"), "name-candidates"],
            check=True,
        )
        n = write_decisions(WS / "out" / "names" / "worksheet.tsv")
    shutil.rmtree(WS / "out")
    print(f"workspace written, {n} decisions")
