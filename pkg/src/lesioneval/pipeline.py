"""Per-case evaluation at a probability cut-off and cut-off sweeps."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .components import filter_small, label_components
from .lesion_metrics import DetectionSummary, LesionSet, detect_gt, detect_iou, detect_pred
from .volume import CasePair, Volume
from .voxel_metrics import VoxelMetrics, voxel_metrics

#: Exact header of the sweep CSV report.
SWEEP_CSV_HEADER = (
    "cutoff,precision_pred,recall_gt,precision_iou,recall_iou,"
    "dsc_mean,dsc_std,hd95_mean,hd95_std,"
    "tp_gt,fn_gt,tp_pred,fp_pred,tp_iou,fp_iou,fn_iou,n_cases_dsc_undefined"
)

DEFAULT_THRESHOLDS = (0.3, 0.3, 0.3)
DEFAULT_MIN_VOXELS = 8
DEFAULT_CUTOFFS = tuple(round(0.1 * k, 10) for k in range(1, 10))


@dataclass(frozen=True)
class CaseMetrics:
    """Everything measured for one case at one cut-off."""

    case_id: str
    cutoff: float
    voxel: VoxelMetrics
    n_gt_lesions: int
    n_pred_lesions: int
    iou_summary: DetectionSummary
    gt_summary: DetectionSummary
    pred_summary: DetectionSummary
    gt_empty: bool
    pred_empty: bool


@dataclass(frozen=True)
class SweepRow:
    """Pooled metrics for one cut-off, mirroring one row of the CSV report."""

    cutoff: float
    precision_pred: float | None
    recall_gt: float | None
    precision_iou: float | None
    recall_iou: float | None
    dsc_mean: float | None
    dsc_std: float | None
    hd95_mean: float | None
    hd95_std: float | None
    tp_gt: int
    fn_gt: int
    tp_pred: int
    fp_pred: int
    tp_iou: int
    fp_iou: int
    fn_iou: int
    n_cases_dsc_undefined: int


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]

    def to_csv(self) -> str:
        lines = [SWEEP_CSV_HEADER]
        for r in self.rows:
            lines.append(
                ",".join(
                    _fmt(v)
                    for v in (
                        r.cutoff,
                        r.precision_pred,
                        r.recall_gt,
                        r.precision_iou,
                        r.recall_iou,
                        r.dsc_mean,
                        r.dsc_std,
                        r.hd95_mean,
                        r.hd95_std,
                        r.tp_gt,
                        r.fn_gt,
                        r.tp_pred,
                        r.fp_pred,
                        r.tp_iou,
                        r.fp_iou,
                        r.fn_iou,
                        r.n_cases_dsc_undefined,
                    )
                )
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        """Compact human-readable table with mean(std) voxel columns."""
        def rate(v):
            return "  n/a" if v is None else f"{v:.2f}"

        def mean_std(m, s):
            return "   n/a     " if m is None else f"{m:6.2f}({s:.2f})"

        lines = ["c/o   prec_pred  rec_gt  prec_iou  rec_iou  dsc          hd95_mm"]
        for r in self.rows:
            lines.append(
                f"{r.cutoff:<5g}  {rate(r.precision_pred)}     {rate(r.recall_gt)}    "
                f"{rate(r.precision_iou)}     {rate(r.recall_iou)} {mean_std(r.dsc_mean, r.dsc_std)} "
                f"{mean_std(r.hd95_mean, r.hd95_std)}"
            )
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def binarize(prob: Volume, cutoff: float) -> Volume:
    """Threshold a probability map: foreground where probability >= cutoff."""
    if prob.kind != "probability":
        raise ValueError(f"binarize expects a probability volume, got {prob.kind}")
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError(f"cutoff must lie in [0, 1], got {cutoff}")
    return Volume((prob.data >= cutoff).astype(np.uint8), prob.spacing, "binary")


def evaluate_case(
    case: CasePair,
    cutoff: float = 0.5,
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS,
    min_voxels: int = DEFAULT_MIN_VOXELS,
) -> CaseMetrics:
    """Evaluate one case at one cut-off.

    Probability predictions are thresholded at ``cutoff`` and their
    components below ``min_voxels`` voxels are discarded before lesion-level
    analysis; binary predictions are used as given (the cut-off is ignored
    and no size filter applies, matching how reader-drawn masks are
    treated).  Ground truth is never filtered.  Voxel-level metrics are
    computed on the unfiltered masks.
    """
    s_iou, s_gt, s_pred = thresholds
    if case.pred.kind == "probability":
        pred_mask = binarize(case.pred, cutoff)
        pred_lab = filter_small(label_components(pred_mask), min_voxels)
    else:
        pred_mask = case.pred
        pred_lab = label_components(pred_mask)
    gt_lab = label_components(case.gt)

    vm = voxel_metrics(pred_mask, case.gt)
    pred_set = LesionSet.from_labeling(pred_lab)
    gt_set = LesionSet.from_labeling(gt_lab)
    return CaseMetrics(
        case_id=case.case_id,
        cutoff=float(cutoff),
        voxel=vm,
        n_gt_lesions=gt_lab.count,
        n_pred_lesions=pred_lab.count,
        iou_summary=detect_iou(pred_set, gt_set, s_iou),
        gt_summary=detect_gt(pred_set, gt_set, s_gt),
        pred_summary=detect_pred(pred_set, gt_set, s_pred),
        gt_empty=case.gt.n_foreground == 0,
        pred_empty=pred_mask.n_foreground == 0,
    )


def evaluate_grid(
    cases,
    cutoffs,
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS,
    min_voxels: int = DEFAULT_MIN_VOXELS,
    threads: int = 1,
) -> list[CaseMetrics]:
    """Evaluate every case at every cut-off.

    Records come back ordered by (case order, cutoff order) regardless of
    ``threads``; evaluate_case is pure, so farming cases out to a thread
    pool cannot change any value.
    """
    tasks = [(case, co) for case in cases for co in cutoffs]
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(
                ex.map(lambda t: evaluate_case(t[0], t[1], thresholds, min_voxels), tasks)
            )
    return [evaluate_case(case, co, thresholds, min_voxels) for case, co in tasks]


def _pooled_rate(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def _mean_std(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    # Sorting first makes the float reduction independent of case order.
    arr = np.sort(np.asarray(values, dtype=np.float64))
    return float(arr.mean()), float(arr.std())


def summarize(records) -> SweepTable:
    """Pool per-case records into one SweepRow per cut-off.

    Detection rates are micro-averaged: TP/FP/FN counts are pooled over all
    cases first, then divided.  DSC and HD95 are averaged (population std)
    over the cases where they are defined; cases with undefined DSC are
    counted separately rather than imputed.
    """
    by_cutoff: dict[float, list[CaseMetrics]] = {}
    for rec in records:
        by_cutoff.setdefault(rec.cutoff, []).append(rec)

    rows = []
    for cutoff in sorted(by_cutoff):
        recs = by_cutoff[cutoff]
        tp_gt = sum(r.gt_summary.tp for r in recs)
        fn_gt = sum(r.gt_summary.fn for r in recs)
        tp_pred = sum(r.pred_summary.tp for r in recs)
        fp_pred = sum(r.pred_summary.fp for r in recs)
        tp_iou = sum(r.iou_summary.tp for r in recs)
        fp_iou = sum(r.iou_summary.fp for r in recs)
        fn_iou = sum(r.iou_summary.fn for r in recs)
        dsc_mean, dsc_std = _mean_std([r.voxel.dsc for r in recs if r.voxel.dsc is not None])
        hd_mean, hd_std = _mean_std(
            [r.voxel.hd95_mm for r in recs if r.voxel.hd95_mm is not None]
        )
        rows.append(
            SweepRow(
                cutoff=cutoff,
                precision_pred=_pooled_rate(tp_pred, tp_pred + fp_pred),
                recall_gt=_pooled_rate(tp_gt, tp_gt + fn_gt),
                precision_iou=_pooled_rate(tp_iou, tp_iou + fp_iou),
                recall_iou=_pooled_rate(tp_iou, tp_iou + fn_iou),
                dsc_mean=dsc_mean,
                dsc_std=dsc_std,
                hd95_mean=hd_mean,
                hd95_std=hd_std,
                tp_gt=tp_gt,
                fn_gt=fn_gt,
                tp_pred=tp_pred,
                fp_pred=fp_pred,
                tp_iou=tp_iou,
                fp_iou=fp_iou,
                fn_iou=fn_iou,
                n_cases_dsc_undefined=sum(1 for r in recs if r.voxel.dsc is None),
            )
        )
    return SweepTable(tuple(rows))


def sweep(
    cases,
    cutoffs=DEFAULT_CUTOFFS,
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS,
    min_voxels: int = DEFAULT_MIN_VOXELS,
    threads: int = 1,
) -> SweepTable:
    """Evaluate all cases over all cut-offs and pool into a SweepTable."""
    if not cases:
        raise ValueError("sweep requires at least one case")
    return summarize(evaluate_grid(cases, cutoffs, thresholds, min_voxels, threads))


def case_metrics_to_record(cm: CaseMetrics) -> dict:
    """Flatten CaseMetrics into a JSON-ready dict (one stream record)."""
    return {
        "case_id": cm.case_id,
        "cutoff": cm.cutoff,
        "dsc": cm.voxel.dsc,
        "iou": cm.voxel.iou,
        "hd95_mm": cm.voxel.hd95_mm,
        "dsc_undefined_reason": cm.voxel.dsc_undefined_reason,
        "hd95_undefined_reason": cm.voxel.hd95_undefined_reason,
        "n_gt_lesions": cm.n_gt_lesions,
        "n_pred_lesions": cm.n_pred_lesions,
        "precision_iou": cm.iou_summary.precision,
        "recall_iou": cm.iou_summary.recall,
        "tp_iou": cm.iou_summary.tp,
        "fp_iou": cm.iou_summary.fp,
        "fn_iou": cm.iou_summary.fn,
        "recall_gt": cm.gt_summary.recall,
        "tp_gt": cm.gt_summary.tp,
        "fn_gt": cm.gt_summary.fn,
        "precision_pred": cm.pred_summary.precision,
        "tp_pred": cm.pred_summary.tp,
        "fp_pred": cm.pred_summary.fp,
        "gt_empty": cm.gt_empty,
        "pred_empty": cm.pred_empty,
    }


def case_metrics_from_record(rec: dict) -> CaseMetrics:
    """Rebuild CaseMetrics from a stream record (inverse of to_record)."""
    vm = VoxelMetrics(
        dsc=rec["dsc"],
        iou=rec["iou"],
        hd95_mm=rec["hd95_mm"],
        dsc_undefined_reason=rec.get("dsc_undefined_reason"),
        hd95_undefined_reason=rec.get("hd95_undefined_reason"),
    )
    return CaseMetrics(
        case_id=rec["case_id"],
        cutoff=rec["cutoff"],
        voxel=vm,
        n_gt_lesions=rec["n_gt_lesions"],
        n_pred_lesions=rec["n_pred_lesions"],
        iou_summary=DetectionSummary(
            precision=rec["precision_iou"],
            recall=rec["recall_iou"],
            tp=rec["tp_iou"],
            fp=rec["fp_iou"],
            fn=rec["fn_iou"],
        ),
        gt_summary=DetectionSummary(
            precision=None, recall=rec["recall_gt"], tp=rec["tp_gt"], fp=None, fn=rec["fn_gt"]
        ),
        pred_summary=DetectionSummary(
            precision=rec["precision_pred"], recall=None, tp=rec["tp_pred"], fp=rec["fp_pred"], fn=None
        ),
        gt_empty=rec["gt_empty"],
        pred_empty=rec["pred_empty"],
    )


def records_to_jsonl(records) -> str:
    """Serialise CaseMetrics records as one JSON object per line."""
    return "".join(
        json.dumps(case_metrics_to_record(r), sort_keys=True) + "\n" for r in records
    )


def records_from_jsonl(text: str) -> list[CaseMetrics]:
    return [case_metrics_from_record(json.loads(line)) for line in text.splitlines() if line.strip()]
