"""Dataset splitting, model evaluation, transition matrices and v3 backfill."""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import (
    V2_LABELS,
    V3_LABELS,
    Corpus,
    CvssV3Assessment,
    CvssVersion,
    Provenance,
    SeverityLabel,
    score_to_label,
)
from .features import Sample, encode_features, stack
from .network import RegressionModel

log = logging.getLogger(__name__)

ROW_LABELS = V2_LABELS
COL_LABELS = V3_LABELS


class SplitWarning(UserWarning):
    pass


def _col(label: SeverityLabel) -> int:
    # v3 None (score 0.0) has no column; it is folded into Low
    return COL_LABELS.index(SeverityLabel.LOW if label is SeverityLabel.NONE else label)


def split_dataset(
    samples: Sequence[Sample], ratio: float = 0.8, seed: int = 0, stratify_on: str = "v3"
) -> tuple[list[Sample], list[Sample]]:
    """Stratified train/test split, deterministic for a given seed.

    Each class contributes ``round(ratio * n)`` samples to training. Classes
    with fewer than two samples go entirely to training, with a warning.
    """
    if stratify_on not in ("v3", "v2"):
        raise ValueError("stratify_on must be 'v3' or 'v2'")
    groups: dict[SeverityLabel, list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        label = score_to_label(s.target, CvssVersion.V3) if stratify_on == "v3" else s.v2_label
        groups[label].append(i)
    rng = np.random.Generator(np.random.PCG64(seed))
    train_idx, test_idx = [], []
    for label in sorted(groups):
        idx = groups[label]
        if len(idx) < 2:
            warnings.warn(f"class {label.value} has {len(idx)} sample(s); kept in train", SplitWarning)
            train_idx.extend(idx)
            continue
        perm = [idx[j] for j in rng.permutation(len(idx))]
        k = int(round(ratio * len(idx)))
        train_idx.extend(perm[:k])
        test_idx.extend(perm[k:])
    return [samples[i] for i in sorted(train_idx)], [samples[i] for i in sorted(test_idx)]


@dataclass
class EvalReport:
    ae: float
    aer: float
    overall_accuracy: float
    per_input_class_accuracy: dict[SeverityLabel, float]
    transition: np.ndarray  # rows v2 L/M/H, columns predicted v3 L/M/H/C
    n: int
    aer_excluded: int = 0

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "ae": self.ae,
            "aer": self.aer,
            "aer_excluded_zero_targets": self.aer_excluded,
            "overall_accuracy": self.overall_accuracy,
            "per_input_class_accuracy": {
                k.value: v for k, v in sorted(self.per_input_class_accuracy.items())
            },
            "transition": transition_dict(self.transition),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1, sort_keys=True) + "\n"


def evaluate(model: RegressionModel, test: Sequence[Sample]) -> EvalReport:
    if not test:
        raise ValueError("empty test set")
    X, _ = stack(test)
    preds = model.predict(X)
    truth = np.array([s.target for s in test])
    err = np.abs(truth - preds)
    nonzero = truth != 0
    if not nonzero.all():
        log.info("%d zero-score targets excluded from AER", int((~nonzero).sum()))
    aer = float(np.mean(err[nonzero] / truth[nonzero])) if nonzero.any() else 0.0

    hits = np.array(
        [
            score_to_label(float(p), CvssVersion.V3) == score_to_label(float(t), CvssVersion.V3)
            for p, t in zip(preds, truth)
        ]
    )
    per_class = {}
    for label in V2_LABELS:
        mask = np.array([s.v2_label is label for s in test])
        if mask.any():
            per_class[label] = float(hits[mask].mean())
    matrix = np.zeros((3, 4), dtype=np.int64)
    for s, p in zip(test, preds):
        matrix[ROW_LABELS.index(s.v2_label), _col(score_to_label(float(p), CvssVersion.V3))] += 1
    return EvalReport(
        ae=float(err.mean()),
        aer=aer,
        overall_accuracy=float(hits.mean()),
        per_input_class_accuracy=per_class,
        transition=matrix,
        n=len(test),
        aer_excluded=int((~nonzero).sum()),
    )


def ground_truth_transition(corpus: Corpus) -> np.ndarray:
    """Counts of feed v2 label x feed v3 label over dual-scored records."""
    matrix = np.zeros((3, 4), dtype=np.int64)
    for rec in corpus:
        if rec.v2 is None or rec.v3 is None or rec.v3.provenance is not Provenance.FROM_FEED:
            continue
        matrix[ROW_LABELS.index(rec.v2.label), _col(rec.v3.label)] += 1
    return matrix


@dataclass(frozen=True)
class BackfillResult:
    corpus: Corpus
    transition: np.ndarray
    predicted: int
    skipped_no_v2: int


def backfill_v3(corpus: Corpus, model: RegressionModel) -> BackfillResult:
    """Give every v2-only record a predicted v3 score. Feed-supplied v3
    assessments are never touched; earlier predictions are recomputed."""
    todo = [
        rec
        for rec in corpus
        if rec.v3 is None or rec.v3.provenance is Provenance.PREDICTED
    ]
    with_v2 = [rec for rec in todo if rec.v2 is not None]
    matrix = np.zeros((3, 4), dtype=np.int64)
    if not with_v2:
        return BackfillResult(corpus, matrix, 0, len(todo))
    X = np.vstack([encode_features(rec, model.cwe_table) for rec in with_v2])
    scores = np.round(model.predict(X), 1)
    updated = []
    for rec, score in zip(with_v2, scores):
        v3 = CvssV3Assessment(float(score), Provenance.PREDICTED)
        matrix[ROW_LABELS.index(rec.v2.label), _col(v3.label)] += 1
        updated.append(rec.evolve(v3=v3))
    return BackfillResult(corpus.with_records(updated), matrix, len(updated), len(todo) - len(with_v2))


def transition_dict(matrix: np.ndarray) -> dict:
    return {
        r.short: {c.short: int(matrix[i, j]) for j, c in enumerate(COL_LABELS)}
        for i, r in enumerate(ROW_LABELS)
    }


def transition_csv(matrix: np.ndarray) -> str:
    """Counts and row percentages, one row per v2 label."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["v2"]
    for c in COL_LABELS:
        header += [f"{c.short}_count", f"{c.short}_pct"]
    w.writerow(header)
    for i, r in enumerate(ROW_LABELS):
        total = int(matrix[i].sum())
        row = [r.short]
        for j in range(len(COL_LABELS)):
            n = int(matrix[i, j])
            row += [n, f"{(100.0 * n / total) if total else 0.0:.2f}"]
        w.writerow(row)
    return buf.getvalue()
