"""Voxel-level overlap and surface-distance metrics between binary masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import Volume, require_same_grid

#: Reason codes attached to undefined metric values.
BOTH_EMPTY = "both-empty"
ONE_EMPTY = "one-empty"


@dataclass(frozen=True)
class VoxelMetrics:
    """Bundle of voxel-level metrics for one (pred, gt) mask pair.

    A ``None`` value means the metric is undefined for this pair; the
    matching ``*_undefined_reason`` field says why.  DSC and IoU are only
    undefined when both masks are empty; HD95 additionally when exactly one
    mask is empty (there is no surface pair to measure).
    """

    dsc: float | None
    iou: float | None
    hd95_mm: float | None
    dsc_undefined_reason: str | None = None
    hd95_undefined_reason: str | None = None


def _counts(pred: Volume, gt: Volume) -> tuple[int, int, int]:
    require_same_grid(pred, gt)
    p = pred.data != 0
    g = gt.data != 0
    return int(np.count_nonzero(p & g)), int(np.count_nonzero(p)), int(np.count_nonzero(g))


def dsc(pred: Volume, gt: Volume) -> float | None:
    """Dice similarity coefficient 2|P∩G| / (|P| + |G|); None if both masks empty."""
    inter, np_, ng = _counts(pred, gt)
    if np_ + ng == 0:
        return None
    return 2.0 * inter / (np_ + ng)


def iou(pred: Volume, gt: Volume) -> float | None:
    """Intersection over union |P∩G| / |P∪G|; None if both masks empty."""
    inter, np_, ng = _counts(pred, gt)
    union = np_ + ng - inter
    if union == 0:
        return None
    return inter / union


def _surface(mask: np.ndarray) -> np.ndarray:
    """Boolean surface mask: foreground voxels with a 6-neighbour that is
    background or outside the grid."""
    padded = np.pad(mask, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1, 1:-1]
        & padded[2:, 1:-1, 1:-1]
        & padded[1:-1, :-2, 1:-1]
        & padded[1:-1, 2:, 1:-1]
        & padded[1:-1, 1:-1, :-2]
        & padded[1:-1, 1:-1, 2:]
    )
    return mask & ~interior


def surface_voxels(mask: Volume) -> np.ndarray:
    """Sorted linear indices of the mask's surface voxels."""
    surf = _surface(mask.data != 0)
    return np.flatnonzero(surf.ravel(order="F"))


def hd95(pred: Volume, gt: Volume) -> float | None:
    """95th percentile of the combined surface-distance multiset, in mm.

    Distances are Euclidean between voxel centres scaled by the spacing.
    For surface sets A (pred) and B (gt) the multiset is
    ``{d(a, B) for a in A} ∪ {d(b, A) for b in B}`` and the percentile uses
    linear interpolation at index ``0.95 * (n - 1)`` of the sorted values.
    Returns None when either mask is empty.
    """
    require_same_grid(pred, gt)
    if pred.n_foreground == 0 or gt.n_foreground == 0:
        return None

    a = _surface(pred.data != 0)
    b = _surface(gt.data != 0)
    # The distance between two point sets does not depend on the grid extent,
    # so crop to the joint bounding box before running the transforms.
    sl = ndimage.find_objects((a | b).astype(np.int8), max_label=1)[0]
    a = a[sl]
    b = b[sl]

    dist_to_b = ndimage.distance_transform_edt(~b, sampling=pred.spacing)
    dist_to_a = ndimage.distance_transform_edt(~a, sampling=pred.spacing)
    values = np.concatenate([dist_to_b[a], dist_to_a[b]])
    return float(np.percentile(values, 95.0))


def voxel_metrics(pred: Volume, gt: Volume) -> VoxelMetrics:
    """Compute DSC, IoU and HD95 for one mask pair with undefined-reasons."""
    inter, np_, ng = _counts(pred, gt)
    if np_ == 0 and ng == 0:
        return VoxelMetrics(None, None, None, BOTH_EMPTY, BOTH_EMPTY)
    d = 2.0 * inter / (np_ + ng)
    j = inter / (np_ + ng - inter)
    if np_ == 0 or ng == 0:
        return VoxelMetrics(d, j, None, None, ONE_EMPTY)
    return VoxelMetrics(d, j, hd95(pred, gt), None, None)
