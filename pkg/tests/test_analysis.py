import csv
import io
import json
from datetime import date, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vulncure.analysis import (
    CorpusTag,
    DateField,
    Report,
    ReportError,
    Scheme,
    VendorMetric,
    day_of_week_histogram,
    mislabeled_severity_breakdown,
    severity_distribution,
    top_cwe_by_severity,
    top_dates,
    top_vendors,
)
from vulncure.core import Corpus, DateSource, DisclosureEstimate, SeverityLabel as L
from vulncure.cwe import CweCatalog

from conftest import make_record


def corpus(*recs):
    return Corpus.from_records(recs)


def test_top_dates_new_years_eve_2004_is_friday():
    # 2004-12-31 was a Friday
    rep = top_dates(corpus(make_record("CVE-2004-0001", date(2004, 12, 31))))
    assert rep.rows == ((date(2004, 12, 31), "Friday", 1, 100.0),)


def test_top_dates_tie_break_by_earlier_date():
    days = [date(2018, 5, 3)] * 5 + [date(2018, 5, 9)] * 3 + [date(2018, 5, 1)] * 3
    c = corpus(*[make_record(f"CVE-2018-{k:04d}", d) for k, d in enumerate(days, 1)])
    rows = top_dates(c).rows
    assert [(r[0], r[2]) for r in rows] == [(date(2018, 5, 3), 5), (date(2018, 5, 1), 3), (date(2018, 5, 9), 3)]


def test_top_dates_edd_uses_edd_year_denominator():
    recs = []
    for k, (pub, edd) in enumerate([
        (date(2019, 1, 2), date(2018, 12, 30)),
        (date(2019, 1, 3), date(2018, 12, 30)),
        (date(2019, 1, 3), date(2019, 1, 3)),
        (date(2018, 6, 1), date(2018, 6, 1)),
    ], 1):
        recs.append(make_record(
            f"CVE-2019-{k:04d}", pub,
            edd=DisclosureEstimate(edd, DateSource.REFERENCE_PAGE, (pub - edd).days),
        ))
    c = corpus(*recs)
    edd_rows = {r[0]: r[3] for r in top_dates(c, DateField.EDD).rows}
    pub_rows = {r[0]: r[3] for r in top_dates(c, "Published").rows}
    assert edd_rows[date(2018, 12, 30)] == pytest.approx(100 * 2 / 3, abs=0.01)
    assert pub_rows[date(2019, 1, 3)] == pytest.approx(100 * 2 / 3, abs=0.01)
    assert pub_rows[date(2018, 6, 1)] == 100.0


def test_edd_report_needs_estimates():
    with pytest.raises(ReportError, match="estimate-dates"):
        top_dates(corpus(make_record()), DateField.EDD)


def test_dow_histogram_uniform_week():
    monday = date(2018, 1, 1)
    c = corpus(*[make_record(f"CVE-2018-{k + 1:04d}", monday + timedelta(days=k)) for k in range(7)])
    rows = day_of_week_histogram(c).rows
    assert [r[0] for r in rows] == ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"]
    assert {r[1] for r in rows} == {1}


def test_dow_histogram_hand_tally():
    # 20 records: Jan 2018 days 1..20. Jan 1 is a Monday, so Mon/Tue/Wed/Thu/Fri/Sat
    # appear 3 times (1,8,15 ... 6,13,20) and Sunday twice (7,14).
    c = corpus(*[make_record(f"CVE-2018-{d:04d}", date(2018, 1, d)) for d in range(1, 21)])
    counts = [r[1] for r in day_of_week_histogram(c).rows]
    assert counts == [3, 3, 3, 3, 3, 3, 2]


def test_severity_single_medium():
    rep = severity_distribution(corpus(make_record(v2_score=5.0)), Scheme.V2)
    assert rep.rows == (("Low", 0, 0.0), ("Medium", 1, 100.0), ("High", 0, 0.0))


def test_severity_ten_records_hand_computed():
    scores = [1.0, 2.0, 4.0, 5.0, 5.5, 6.0, 7.0, 8.0, 9.0, 10.0]
    c = corpus(*[make_record(f"CVE-2018-{k:04d}", v2_score=s) for k, s in enumerate(scores, 1)])
    assert [r[1:] for r in severity_distribution(c).rows] == [(2, 20.0), (4, 40.0), (4, 40.0)]


def test_severity_v3_feed_excludes_predicted_and_pv3_requires_backfill():
    c = corpus(
        make_record("CVE-2018-0001", v3_score=9.5),
        make_record("CVE-2018-0002", v3_score=2.0, v3_predicted=True),
        make_record("CVE-2018-0003"),
    )
    feed = dict((r[0], r[1]) for r in severity_distribution(c, Scheme.V3_FEED).rows)
    assert feed["Critical"] == 1 and sum(feed.values()) == 1
    with pytest.raises(ReportError, match="backfill-v3"):
        severity_distribution(c, Scheme.PV3)


def test_severity_by_year_rows():
    c = corpus(
        make_record("CVE-2016-0001", date(2016, 2, 2), v2_score=9.0),
        make_record("CVE-2017-0001", date(2017, 2, 2), v2_score=1.0),
    )
    rows = severity_distribution(c, Scheme.V2, by_year=True).rows
    assert (2016, "High", 1, 100.0) in rows and (2017, "Low", 1, 100.0) in rows


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 100), min_size=1, max_size=40))
def test_percentages_sum_to_100(scores):
    c = corpus(*[make_record(f"CVE-2018-{k:04d}", v2_score=s / 10, v3_score=s / 10)
                 for k, s in enumerate(scores, 1)])
    for scheme in (Scheme.V2, Scheme.V3_FEED):
        total = sum(r[-1] for r in severity_distribution(c, scheme).rows)
        assert total == pytest.approx(100.0, abs=0.1)


def test_top_cwe_counts_each_listed_cwe():
    c = corpus(
        make_record("CVE-2018-0001", v2_score=8.0, cwes=("CWE-79", "CWE-89")),
        make_record("CVE-2018-0002", v2_score=8.0, cwes=("CWE-89",)),
        make_record("CVE-2018-0003", v2_score=2.0, cwes=("CWE-20",)),
    )
    cat = CweCatalog({"CWE-89": "SQL Injection", "CWE-79": "XSS"})
    rows = top_cwe_by_severity(c, Scheme.V2, L.HIGH, catalog=cat).rows
    assert rows == (("CWE-89", "SQL Injection", 2), ("CWE-79", "XSS", 1))
    assert top_cwe_by_severity(c, Scheme.V2, L.MEDIUM).rows == ()


def test_top_vendors_single_and_multi():
    assert top_vendors(corpus(make_record(cpes=[("acme", "x")]))).rows == (("acme", 1, 100.0),)
    c = corpus(
        make_record("CVE-2018-0001", cpes=[("a", "x"), ("b", "y")]),
        make_record("CVE-2018-0002", cpes=[("a", "z")]),
    )
    assert top_vendors(c, VendorMetric.CVE_COUNT).rows == (("a", 2, 100.0), ("b", 1, 50.0))
    assert top_vendors(c, "ProductCount").rows == (("a", 2, 66.67), ("b", 1, 33.33))


def test_mislabeled_breakdown():
    raw = corpus(
        make_record("CVE-2018-0001", v2_score=8.0, cpes=[("bea_systems", "w")]),
        make_record("CVE-2018-0002", v2_score=9.0, cpes=[("bea_systems", "ie")]),
        make_record("CVE-2018-0003", v2_score=2.0, cpes=[("bea", "w")]),
    )
    fixed = raw.with_records([
        raw["CVE-2018-0001"].evolve(cpes=raw["CVE-2018-0003"].cpes),
        raw["CVE-2018-0002"].evolve(cpes=(raw["CVE-2018-0002"].cpes[0].__class__("bea", "internet_explorer"),)),
    ])
    rows = {r[0]: r[1:] for r in mislabeled_severity_breakdown(raw, fixed).rows}
    assert rows == {"Low": (0, 0), "Medium": (0, 0), "High": (2, 1)}
    zero = mislabeled_severity_breakdown(raw, raw).rows
    assert all(r[1] == r[2] == 0 for r in zero)
    with pytest.raises(ReportError):
        mislabeled_severity_breakdown(raw, corpus(make_record("CVE-2018-0001")))


def test_csv_and_json_envelopes():
    rep = Report("demo", ("a", "b"), (("x,y", 1.234),), CorpusTag.CORRECTED, {"n": 1})
    text = rep.to_csv()
    assert text.endswith("\r\n")
    assert list(csv.reader(io.StringIO(text))) == [["a", "b"], ["x,y", "1.23"]]
    env = json.loads(rep.to_json({"version": "t"}))
    assert env["corpus_tag"] == "Corrected" and env["meta"] == {"version": "t"}
    with pytest.raises(ValueError):
        Report("bad", ("a",), ((1, 2),))


def test_reports_are_pure():
    c = corpus(make_record("CVE-2018-0001", v2_score=8.0), make_record("CVE-2018-0002", v2_score=3.0))
    assert severity_distribution(c).to_csv() == severity_distribution(c).to_csv()
