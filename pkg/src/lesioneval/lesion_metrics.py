"""Lesion-level detection accuracy for multifocal segmentations.

Two families of definitions are implemented:

* a symmetric scheme that matches predicted and ground-truth lesions
  one-to-one by descending IoU (a lesion pair counts as a true positive
  only when its IoU strictly exceeds the threshold, and each lesion is
  counted at most once), and
* an asymmetric scheme that scores each ground-truth lesion by the fraction
  of its voxels covered by any prediction, and each predicted lesion by the
  fraction of its voxels lying inside any ground-truth lesion.  Under the
  ground-truth view false positives are undefined; under the prediction
  view false negatives are undefined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import ComponentLabeling


@dataclass(frozen=True)
class LesionSet:
    """An ordered collection of disjoint lesions, each a sorted array of
    linear voxel indices."""

    lesions: tuple[np.ndarray, ...]
    spacing: tuple[float, float, float]

    def __post_init__(self):
        for les in self.lesions:
            if les.size == 0:
                raise ValueError("lesions must be non-empty")

    def __len__(self) -> int:
        return len(self.lesions)

    @classmethod
    def from_labeling(cls, labeling: ComponentLabeling) -> "LesionSet":
        return cls(labeling.voxel_lists, labeling.labels.spacing)


@dataclass(frozen=True)
class MatchOutcome:
    """Lesion-level TP/FP/FN bookkeeping for one matching scheme.

    ``scheme`` is one of ``iou``, ``gt_based``, ``pred_based``.  Counts that
    a scheme does not define are None (no false positives under gt_based, no
    false negatives under pred_based).  ``assignments`` lists accepted
    ``(pred_index, gt_index, iou)`` triples for the iou scheme;
    ``per_lesion_scores`` carries the overlap fraction per ground-truth
    lesion (gt_based) or per predicted lesion (pred_based).
    """

    scheme: str
    threshold: float
    tp: int
    fp: int | None
    fn: int | None
    assignments: tuple[tuple[int, int, float], ...] = ()
    per_lesion_scores: tuple[float, ...] | None = None


@dataclass(frozen=True)
class DetectionSummary:
    """Precision/recall view of a MatchOutcome.

    A rate is None when its denominator is zero or when the scheme does not
    define the counts it needs.
    """

    precision: float | None
    recall: float | None
    tp: int
    fp: int | None
    fn: int | None


def _check_threshold(value: float):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"overlap threshold must lie in [0, 1], got {value}")


def _pair_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.intersect1d(a, b, assume_unique=True).size
    if inter == 0:
        return 0.0
    return inter / (a.size + b.size - inter)


def match_iou(pred: LesionSet, gt: LesionSet, s_iou: float) -> MatchOutcome:
    """One-to-one greedy matching by descending IoU.

    All (pred, gt) lesion pairs are ranked by IoU descending, ties broken by
    (gt index, pred index) ascending; a pair is accepted when both lesions
    are still unmatched and its IoU strictly exceeds ``s_iou``.  Accepted
    pairs are true positives, leftover predictions false positives, leftover
    ground-truth lesions false negatives.
    """
    _check_threshold(s_iou)
    pairs = []
    for n, g in enumerate(gt.lesions):
        for m, p in enumerate(pred.lesions):
            v = _pair_iou(p, g)
            if v > s_iou:
                pairs.append((v, n, m))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))

    gt_taken = np.zeros(len(gt), dtype=bool)
    pred_taken = np.zeros(len(pred), dtype=bool)
    assignments = []
    for v, n, m in pairs:
        if gt_taken[n] or pred_taken[m]:
            continue
        gt_taken[n] = True
        pred_taken[m] = True
        assignments.append((m, n, v))
    tp = len(assignments)
    return MatchOutcome(
        scheme="iou",
        threshold=float(s_iou),
        tp=tp,
        fp=len(pred) - tp,
        fn=len(gt) - tp,
        assignments=tuple(assignments),
    )


def score_gt(pred: LesionSet, gt: LesionSet) -> np.ndarray:
    """Covered fraction of each ground-truth lesion.

    Because predicted lesions are disjoint, summing per-prediction overlaps
    equals counting the predicted-foreground voxels inside the lesion.
    """
    if len(pred) == 0:
        return np.zeros(len(gt))
    pred_all = np.concatenate(pred.lesions)
    return np.array([np.isin(g, pred_all, assume_unique=False).sum() / g.size for g in gt.lesions])


def score_pred(pred: LesionSet, gt: LesionSet) -> np.ndarray:
    """Fraction of each predicted lesion lying inside any ground-truth lesion."""
    if len(gt) == 0:
        return np.zeros(len(pred))
    gt_all = np.concatenate(gt.lesions)
    return np.array([np.isin(p, gt_all, assume_unique=False).sum() / p.size for p in pred.lesions])


def match_gt(pred: LesionSet, gt: LesionSet, s_gt: float) -> MatchOutcome:
    """Ground-truth-view outcome: a lesion is detected when its covered
    fraction strictly exceeds ``s_gt``.  False positives are undefined."""
    _check_threshold(s_gt)
    scores = score_gt(pred, gt)
    tp = int((scores > s_gt).sum())
    return MatchOutcome(
        scheme="gt_based",
        threshold=float(s_gt),
        tp=tp,
        fp=None,
        fn=len(gt) - tp,
        per_lesion_scores=tuple(float(s) for s in scores),
    )


def match_pred(pred: LesionSet, gt: LesionSet, s_pred: float) -> MatchOutcome:
    """Prediction-view outcome: a predicted lesion is a true positive when
    its inside-ground-truth fraction strictly exceeds ``s_pred``.  False
    negatives are undefined."""
    _check_threshold(s_pred)
    scores = score_pred(pred, gt)
    tp = int((scores > s_pred).sum())
    return MatchOutcome(
        scheme="pred_based",
        threshold=float(s_pred),
        tp=tp,
        fp=len(pred) - tp,
        fn=None,
        per_lesion_scores=tuple(float(s) for s in scores),
    )


def _summary(outcome: MatchOutcome) -> DetectionSummary:
    tp, fp, fn = outcome.tp, outcome.fp, outcome.fn
    precision = tp / (tp + fp) if fp is not None and tp + fp > 0 else None
    recall = tp / (tp + fn) if fn is not None and tp + fn > 0 else None
    return DetectionSummary(precision=precision, recall=recall, tp=tp, fp=fp, fn=fn)


def detect_iou(pred: LesionSet, gt: LesionSet, s_iou: float) -> DetectionSummary:
    return _summary(match_iou(pred, gt, s_iou))


def detect_gt(pred: LesionSet, gt: LesionSet, s_gt: float) -> DetectionSummary:
    return _summary(match_gt(pred, gt, s_gt))


def detect_pred(pred: LesionSet, gt: LesionSet, s_pred: float) -> DetectionSummary:
    return _summary(match_pred(pred, gt, s_pred))
