"""Splitting a binary mask into individual lesions by 26-connectivity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import Volume

#: Full 3x3x3 neighbourhood: voxels sharing a face, edge or corner connect.
STRUCT_26 = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True)
class ComponentLabeling:
    """Partition of a mask's foreground into 26-connected components.

    Label 0 is background.  Labels 1..count are assigned in order of each
    component's smallest linear voxel index, so the numbering is a
    deterministic function of the geometry alone.  ``voxel_lists[k]`` holds
    the sorted linear indices of component ``k + 1``.
    """

    labels: Volume
    count: int
    sizes: np.ndarray
    voxel_lists: tuple[np.ndarray, ...]

    @property
    def n_foreground(self) -> int:
        return int(self.sizes.sum())


def label_components(mask: Volume) -> ComponentLabeling:
    """Label the 26-connected components of a binary mask.

    An empty mask yields count=0.  Component numbering follows the smallest
    linear (x-fastest) voxel index of each component.
    """
    if mask.kind != "binary":
        raise ValueError(f"label_components expects a binary volume, got {mask.kind}")
    lab, n = ndimage.label(mask.data != 0, structure=STRUCT_26)
    flat = lab.ravel(order="F")
    fg = np.flatnonzero(flat)
    if n == 0:
        labels = Volume(np.zeros(mask.dims, dtype=np.int32), mask.spacing, "labels")
        return ComponentLabeling(labels, 0, np.zeros(0, dtype=np.int64), ())

    at = flat[fg]
    # fg is ascending, so the first occurrence of each scipy label is its
    # smallest linear index; renumber in that order.
    scipy_ids, first_pos = np.unique(at, return_index=True)
    order = np.argsort(first_pos, kind="stable")
    lut = np.zeros(n + 1, dtype=np.int32)
    lut[scipy_ids[order]] = np.arange(1, n + 1, dtype=np.int32)

    new_at = lut[at]
    sizes = np.bincount(new_at, minlength=n + 1)[1:].astype(np.int64)
    grouped = fg[np.argsort(new_at, kind="stable")]
    voxel_lists = tuple(np.split(grouped, np.cumsum(sizes)[:-1]))

    labels = Volume(lut[flat].reshape(mask.dims, order="F"), mask.spacing, "labels")
    return ComponentLabeling(labels, int(n), sizes, voxel_lists)


def filter_small(labeling: ComponentLabeling, min_voxels: int = 8) -> ComponentLabeling:
    """Drop components with fewer than ``min_voxels`` voxels.

    Surviving components keep their relative order (still sorted by smallest
    linear voxel index) and are renumbered compactly from 1.
    """
    if min_voxels < 1:
        raise ValueError("min_voxels must be a positive integer")
    keep = labeling.sizes >= min_voxels
    if keep.all():
        return labeling
    kept_ids = np.flatnonzero(keep) + 1
    lut = np.zeros(labeling.count + 1, dtype=np.int32)
    lut[kept_ids] = np.arange(1, kept_ids.size + 1, dtype=np.int32)

    flat = labeling.labels.data.ravel(order="F")
    labels = Volume(
        lut[flat].reshape(labeling.labels.dims, order="F"),
        labeling.labels.spacing,
        "labels",
    )
    voxel_lists = tuple(vl for vl, k in zip(labeling.voxel_lists, keep) if k)
    return ComponentLabeling(labels, int(keep.sum()), labeling.sizes[keep], voxel_lists)
