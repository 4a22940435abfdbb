"""Command-line interface: evaluate, sweep, compare, phantom.

Exit codes: 0 success, 2 validation error (bad arguments, malformed or
mismatched inputs, degenerate statistics), 1 I/O failure.  All commands are
deterministic functions of their inputs, flags and seed; diagnostics go to
stderr, data to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import phantom, pipeline, stats, volume_io
from .errors import (
    FormatError,
    IoError,
    ShapeError,
    SpecError,
    StatsError,
    UnsupportedError,
)
from .pipeline import SWEEP_CSV_HEADER, _fmt  # noqa: F401  (header re-exported for users)
from .volume import CasePair

_METRIC_ORIENTATION = {
    "dsc": stats.HIGHER_BETTER,
    "iou": stats.HIGHER_BETTER,
    "hd95_mm": stats.LOWER_BETTER,
    "precision_pred": stats.HIGHER_BETTER,
    "recall_gt": stats.HIGHER_BETTER,
    "precision_iou": stats.HIGHER_BETTER,
    "recall_iou": stats.HIGHER_BETTER,
}

_DEFAULT_COMPARISONS = (
    ("dsc", "hd95_mm"),
    ("dsc", "precision_pred"),
    ("dsc", "recall_gt"),
    ("dsc", "precision_iou"),
    ("dsc", "recall_iou"),
)

PER_CASE_CSV_HEADER = (
    "case_id,cutoff,dsc,iou,hd95_mm,n_gt_lesions,n_pred_lesions,"
    "precision_pred,recall_gt,precision_iou,recall_iou,"
    "tp_gt,fn_gt,tp_pred,fp_pred,tp_iou,fp_iou,fn_iou,gt_empty,pred_empty"
)


def _parse_cutoffs(text: str) -> list[float]:
    """Parse "lo:hi:step" into an inclusive list of cut-offs."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"--cutoffs expects lo:hi:step, got {text!r}")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or lo > hi or not (0 <= lo <= 1 and 0 <= hi <= 1):
        raise ValueError(f"invalid cut-off range {text!r}")
    values = []
    k = 0
    while True:
        v = round(lo + k * step, 10)
        if v > hi + 1e-9:
            break
        values.append(min(v, 1.0))
        k += 1
    return values


def _load_manifest(path) -> list[CasePair]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON manifest: {exc}") from exc
    entries = doc["cases"] if isinstance(doc, dict) and "cases" in doc else doc
    if not isinstance(entries, list) or not entries:
        raise FormatError(f"{path}: manifest must list at least one case")
    base = Path(path).parent
    cases = []
    for entry in entries:
        try:
            case_id = entry["case_id"]
            gt_path = base / entry["gt_path"]
            pred_path = base / entry["pred_path"]
        except (TypeError, KeyError) as exc:
            raise FormatError(
                f"{path}: each case needs case_id, gt_path and pred_path"
            ) from exc
        cases.append(
            CasePair(case_id, volume_io.read_volume(gt_path), volume_io.read_volume(pred_path))
        )
    return cases


def _collect_cases(args) -> list[CasePair]:
    if args.manifest:
        return _load_manifest(args.manifest)
    if not (args.gt and args.pred):
        raise ValueError("provide either --manifest or both --gt and --pred")
    case_id = Path(args.gt).name.split(".")[0]
    return [CasePair(case_id, volume_io.read_volume(args.gt), volume_io.read_volume(args.pred))]


def _emit(text: str, out):
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise IoError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _records_csv(records) -> str:
    lines = [PER_CASE_CSV_HEADER]
    for cm in records:
        rec = pipeline.case_metrics_to_record(cm)
        lines.append(
            ",".join(
                _fmt(rec[k])
                for k in PER_CASE_CSV_HEADER.split(",")
            )
        )
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    cases = _collect_cases(args)
    records = pipeline.evaluate_grid(
        cases,
        [args.cutoff],
        (args.s_iou, args.s_gt, args.s_pred),
        args.min_voxels,
        threads=args.threads,
    )
    if args.format == "csv":
        _emit(_records_csv(records), args.out)
    else:
        _emit(pipeline.records_to_jsonl(records), args.out)
    return 0


def cmd_sweep(args) -> int:
    if not args.manifest:
        raise ValueError("sweep requires --manifest")
    cases = _load_manifest(args.manifest)
    for case in cases:
        if case.pred.kind != "probability":
            raise ValueError(
                f"case {case.case_id}: sweep needs probability predictions, got {case.pred.kind}"
            )
    cutoffs = _parse_cutoffs(args.cutoffs)
    records = pipeline.evaluate_grid(
        cases, cutoffs, (args.s_iou, args.s_gt, args.s_pred), args.min_voxels, threads=args.threads
    )
    table = pipeline.summarize(records)
    if args.cases_out:
        try:
            Path(args.cases_out).write_text(pipeline.records_to_jsonl(records))
        except OSError as exc:
            raise IoError(f"cannot write {args.cases_out}: {exc}") from exc
    if args.format == "structured-text":
        rows = [
            {k: getattr(r, k) for k in r.__dataclass_fields__} for r in table.rows
        ]
        _emit(json.dumps({"rows": rows}, sort_keys=True, indent=2) + "\n", args.out)
    else:
        _emit(table.to_csv(), args.out)
    return 0


def _series(records, metric: str) -> stats.MetricSeries:
    if metric not in _METRIC_ORIENTATION:
        raise ValueError(
            f"unknown metric {metric!r}; expected one of {sorted(_METRIC_ORIENTATION)}"
        )
    values = []
    for cm in records:
        rec = pipeline.case_metrics_to_record(cm)
        if metric not in rec:
            raise ValueError(f"metric column {metric!r} missing from records")
        values.append(rec[metric])
    return stats.MetricSeries(metric, _METRIC_ORIENTATION[metric], tuple(values))


def _report_dict(obj) -> dict:
    return {k: getattr(obj, k) for k in obj.__dataclass_fields__}


def _compare_pair(records, metric_a: str, metric_b: str, seed: int) -> dict:
    a = _series(records, metric_a)
    b = _series(records, metric_b)
    x, y = stats.paired_defined(a, b)
    corr = stats.bootstrap_pearson(x, y, seed=seed)
    kappa = stats.kappa_agreement(a, b, seed=seed)
    return {
        "metric_a": metric_a,
        "orientation_a": a.orientation,
        "metric_b": metric_b,
        "orientation_b": b.orientation,
        "n_cases": int(x.size),
        "pearson": _report_dict(corr),
        "kappa": _report_dict(kappa),
    }


def cmd_compare(args) -> int:
    try:
        text = Path(args.records).read_text()
    except OSError as exc:
        raise IoError(f"cannot read {args.records}: {exc}") from exc
    records = pipeline.records_from_jsonl(text)
    if not records:
        raise ValueError(f"{args.records}: no per-case records found")

    cutoffs = sorted({cm.cutoff for cm in records})
    if args.cutoff is not None:
        if args.cutoff not in cutoffs:
            raise ValueError(f"no records at cutoff {args.cutoff}; present: {cutoffs}")
        cutoffs = [args.cutoff]

    explicit = args.metric_a is not None or args.metric_b is not None
    if explicit and not (args.metric_a and args.metric_b):
        raise ValueError("--metric-a and --metric-b must be given together")
    pairs = [(args.metric_a, args.metric_b)] if explicit else list(_DEFAULT_COMPARISONS)

    report = {"seed": args.seed, "cutoffs": []}
    n_ok = 0
    for cutoff in cutoffs:
        at = [cm for cm in records if cm.cutoff == cutoff]
        entry = {"cutoff": cutoff, "comparisons": []}
        for ma, mb in pairs:
            if explicit:
                entry["comparisons"].append(_compare_pair(at, ma, mb, args.seed))
                n_ok += 1
            else:
                try:
                    entry["comparisons"].append(_compare_pair(at, ma, mb, args.seed))
                    n_ok += 1
                except StatsError as exc:
                    entry["comparisons"].append(
                        {"metric_a": ma, "metric_b": mb, "error": str(exc)}
                    )
        if not explicit:
            try:
                entry["error_estimate"] = _report_dict(stats.dice_estimated_errors(at))
                n_ok += 1
            except StatsError as exc:
                entry["error_estimate"] = {"error": str(exc)}
        report["cutoffs"].append(entry)
    if n_ok == 0:
        raise StatsError("no comparison could be computed from these records")
    _emit(json.dumps(report, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def cmd_phantom(args) -> int:
    out_dir = Path(args.out) if args.out else Path(".")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc

    if args.scenario == "random":
        cases = phantom.random_corpus(
            args.cases,
            seed=args.seed,
            noise=phantom.NoiseParams(
                dilate_max=1, erode_max=1, shift_max=1, drop_prob=0.15,
                spurious_max=2, smooth_sigma=0.6,
            ),
        )
    else:
        cases = [phantom.generate(phantom.preset(args.scenario))]

    manifest = {"scenario": args.scenario, "seed": args.seed, "cases": []}
    for case in cases:
        gt_name = f"{case.case_id}_gt.nii.gz"
        pred_name = f"{case.case_id}_pred.nii.gz"
        volume_io.write_nifti(case.gt, out_dir / gt_name)
        volume_io.write_nifti(case.pred, out_dir / pred_name)
        manifest["cases"].append(
            {"case_id": case.case_id, "gt_path": gt_name, "pred_path": pred_name}
        )
    try:
        (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write manifest: {exc}") from exc
    print(f"wrote {len(cases)} case(s) to {out_dir}", file=sys.stderr)
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--s-iou", type=float, default=0.3, help="IoU matching threshold")
    p.add_argument("--s-gt", type=float, default=0.3, help="covered-fraction threshold per GT lesion")
    p.add_argument("--s-pred", type=float, default=0.3, help="inside-GT fraction threshold per predicted lesion")
    p.add_argument("--min-voxels", type=int, default=8, help="minimum component size kept after thresholding")
    p.add_argument("--threads", type=int, default=1, help="worker threads for case evaluation")
    p.add_argument("--out", help="output path (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesioneval",
        description="Voxel- and lesion-level evaluation of multifocal 3D segmentations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="per-case metrics at one cut-off")
    p_eval.add_argument("--gt", help="ground-truth volume path")
    p_eval.add_argument("--pred", help="prediction volume path")
    p_eval.add_argument("--manifest", help="JSON manifest listing cases")
    p_eval.add_argument("--cutoff", type=float, default=0.5)
    p_eval.add_argument("--format", choices=("csv", "structured-text"), default="structured-text")
    _add_common(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="cut-off sweep over a manifest of cases")
    p_sweep.add_argument("--manifest", required=True)
    p_sweep.add_argument("--cutoffs", default="0.1:0.9:0.1", help="lo:hi:step, inclusive")
    p_sweep.add_argument("--format", choices=("csv", "structured-text"), default="csv")
    p_sweep.add_argument("--cases-out", help="also write the per-case record stream here")
    _add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="agreement statistics between metrics")
    p_cmp.add_argument("records", help="per-case record stream (JSONL) from evaluate/sweep")
    p_cmp.add_argument("--metric-a", help="first metric name (default: full comparison suite)")
    p_cmp.add_argument("--metric-b", help="second metric name")
    p_cmp.add_argument("--cutoff", type=float, help="restrict to one cut-off")
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--out", help="output path (stdout when omitted)")
    p_cmp.set_defaults(func=cmd_compare)

    p_ph = sub.add_parser("phantom", help="generate synthetic scenario volumes")
    p_ph.add_argument("--scenario", required=True, help=f"{', '.join(phantom.PRESET_IDS)} or random")
    p_ph.add_argument("--cases", type=int, default=20, help="corpus size for --scenario random")
    p_ph.add_argument("--seed", type=int, default=0)
    p_ph.add_argument("--out", help="output directory (default: current)")
    p_ph.set_defaults(func=cmd_phantom)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, UnsupportedError, ShapeError, StatsError, SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
