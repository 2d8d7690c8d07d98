"""Encode v2 assessments (plus CWE type) into the 13-feature regressor input."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from ..core import (
    AccessComplexity,
    AccessVector,
    Authentication,
    CveRecord,
    Impact,
    Provenance,
    SeverityLabel,
)

FEATURE_ORDER = (
    "access_vector",
    "access_complexity",
    "authentication",
    "conf_impact",
    "integ_impact",
    "avail_impact",
    "base_score",
    "obtain_all_privilege",
    "obtain_user_privilege",
    "obtain_other_privilege",
    "user_interaction_required",
    "cwe_code",
    "v2_label_code",
)
N_FEATURES = len(FEATURE_ORDER)

# Ordinals run from least to most severe.
_AV = {AccessVector.LOCAL: 0.0, AccessVector.ADJACENT_NETWORK: 0.5, AccessVector.NETWORK: 1.0}
_AC = {AccessComplexity.HIGH: 0.0, AccessComplexity.MEDIUM: 0.5, AccessComplexity.LOW: 1.0}
_AU = {Authentication.MULTIPLE: 0.0, Authentication.SINGLE: 0.5, Authentication.NONE: 1.0}
_IMPACT = {Impact.NONE: 0.0, Impact.PARTIAL: 0.5, Impact.COMPLETE: 1.0}
_V2_LABEL = {SeverityLabel.LOW: 0.0, SeverityLabel.MEDIUM: 0.5, SeverityLabel.HIGH: 1.0}


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class CweTable:
    """Concrete CWE ids ranked by frequency (rank 1 = most common)."""

    ranked: tuple[str, ...]

    @classmethod
    def from_records(cls, records: Iterable[CveRecord]) -> "CweTable":
        counts: Counter = Counter()
        for rec in records:
            counts.update(rec.concrete_cwes)
        return cls(tuple(c for c, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))))

    def code(self, cwe_ids: Iterable[str]) -> float:
        """Normalized rank of the most common listed CWE; 0 when the record
        carries only placeholders or ids unseen in the table."""
        if not self.ranked:
            return 0.0
        index = self._index
        ranks = [index[c] for c in cwe_ids if c in index]
        return min(ranks) / len(self.ranked) if ranks else 0.0

    @property
    def _index(self) -> dict[str, int]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {c: i for i, c in enumerate(self.ranked, 1)}
            object.__setattr__(self, "_idx", idx)
        return idx


def encode_features(record: CveRecord, cwe_table: CweTable) -> np.ndarray:
    v2 = record.v2
    if v2 is None:
        raise EncodingError(f"{record.id} has no v2 assessment")
    return np.array(
        [
            _AV[v2.access_vector],
            _AC[v2.access_complexity],
            _AU[v2.authentication],
            _IMPACT[v2.conf_impact],
            _IMPACT[v2.integ_impact],
            _IMPACT[v2.avail_impact],
            v2.base_score / 10.0,
            float(v2.obtain_all_privilege),
            float(v2.obtain_user_privilege),
            float(v2.obtain_other_privilege),
            float(v2.user_interaction_required),
            cwe_table.code(record.cwe_ids),
            _V2_LABEL[v2.label],
        ],
        dtype=np.float64,
    )


@dataclass(frozen=True)
class Sample:
    """One ground-truth row: encoded features, v3 target score, v2 label."""

    features: np.ndarray
    target: float
    v2_label: SeverityLabel
    cve_id: Optional[str] = None


def ground_truth_samples(records: Iterable[CveRecord], cwe_table: CweTable) -> list[Sample]:
    """Samples for every record holding both a v2 and a feed-supplied v3."""
    out = []
    for rec in records:
        if rec.v2 is None or rec.v3 is None or rec.v3.provenance is not Provenance.FROM_FEED:
            continue
        out.append(Sample(encode_features(rec, cwe_table), rec.v3.base_score, rec.v2.label, rec.id.raw))
    return out


def stack(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and targets rescaled to [0, 1]."""
    X = np.vstack([s.features for s in samples]) if samples else np.zeros((0, N_FEATURES))
    y = np.array([s.target / 10.0 for s in samples], dtype=np.float64)
    return X, y
