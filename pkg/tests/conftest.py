from __future__ import annotations

import itertools
import shutil
from datetime import date
from pathlib import Path

import pytest

from vulncure.core import (
    AccessComplexity,
    AccessVector,
    Authentication,
    CpeEntry,
    CveId,
    CveRecord,
    CvssV2Assessment,
    CvssV3Assessment,
    Impact,
    Provenance,
    Reference,
)

FIXTURES = Path(__file__).parent / "fixtures"
WORKSPACE = FIXTURES / "workspace"

_seq = itertools.count(1)


def v2(score=5.0, av="NETWORK", ac="LOW", au="NONE", c="PARTIAL", i="PARTIAL", a="PARTIAL", **flags):
    return CvssV2Assessment(
        AccessVector(av),
        AccessComplexity(ac),
        Authentication(au),
        Impact(c),
        Impact(i),
        Impact(a),
        score,
        **flags,
    )


def make_record(
    cve_id: str | None = None,
    published=date(2018, 1, 1),
    *,
    desc="A vulnerability.",
    cpes=(),
    cwes=("CWE-20",),
    refs=(),
    v2_score=5.0,
    v3_score=None,
    v3_predicted=False,
    modified=None,
    **extra,
) -> CveRecord:
    """Compact record factory for tests. ``cpes`` is a sequence of
    (vendor, product) pairs; ``v2_score=None`` drops the v2 assessment."""
    if cve_id is None:
        cve_id = f"CVE-2018-{next(_seq):05d}"
    v3 = None
    if v3_score is not None:
        v3 = CvssV3Assessment(
            v3_score, Provenance.PREDICTED if v3_predicted else Provenance.FROM_FEED
        )
    return CveRecord(
        id=CveId.parse(cve_id),
        published=published,
        last_modified=modified or published,
        descriptions=(desc,) if isinstance(desc, str) else tuple(desc),
        references=tuple(Reference(u) for u in refs),
        cwe_ids=frozenset(cwes),
        v2=v2(v2_score) if v2_score is not None else None,
        v3=v3,
        cpes=tuple(CpeEntry(v, p) for v, p in cpes),
        **extra,
    )


@pytest.fixture
def workspace(tmp_path) -> Path:
    """A private copy of the bundled fixture workspace."""
    dest = tmp_path / "ws"
    shutil.copytree(WORKSPACE, dest, ignore=shutil.ignore_patterns("out"))
    return dest
