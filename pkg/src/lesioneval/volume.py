"""3D volume container with physical voxel spacing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

KINDS = ("binary", "probability", "labels")

_CANONICAL_DTYPE = {
    "binary": np.uint8,
    "probability": np.float32,
    "labels": np.int32,
}

#: Relative tolerance for treating two spacings as the same grid.
SPACING_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class Volume:
    """A 3D scalar grid with voxel spacing in millimetres.

    ``data`` is indexed ``data[x, y, z]`` and has shape ``dims == (nx, ny, nz)``.
    The linear index of voxel ``(x, y, z)`` is ``x + nx * (y + ny * z)``,
    i.e. x varies fastest, which matches ``data.ravel(order="F")``.

    ``kind`` constrains the voxel values:

    * ``binary``       every value is 0 or 1 (stored as uint8)
    * ``probability``  every value lies in [0, 1] (stored as float32)
    * ``labels``       non-negative integers, 0 = background (stored as int32)

    Instances are immutable; the underlying array is marked read-only.
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown volume kind {self.kind!r}")
        raw = np.asarray(self.data)
        if raw.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {raw.shape}")
        if raw.size == 0:
            raise ValueError("volume must contain at least one voxel")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValueError(f"spacing must be three positive reals, got {self.spacing!r}")
        self._validate_values(raw)
        arr = raw.astype(_CANONICAL_DTYPE[self.kind], copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", spacing)

    def _validate_values(self, raw: np.ndarray):
        if raw.dtype.kind == "f" and not np.all(np.isfinite(raw)):
            raise ValueError(f"{self.kind} volume contains non-finite values")
        lo, hi = raw.min(), raw.max()
        if self.kind == "binary":
            if lo < 0 or hi > 1 or (raw.dtype.kind == "f" and not np.isin(raw, (0.0, 1.0)).all()):
                raise ValueError("binary volume contains values outside {0, 1}")
        elif self.kind == "probability":
            if lo < 0.0 or hi > 1.0:
                raise ValueError("probability volume contains values outside [0, 1]")
        else:
            if lo < 0:
                raise ValueError("labels volume contains negative values")
            if raw.dtype.kind == "f" and not (raw == np.floor(raw)).all():
                raise ValueError("labels volume contains non-integral values")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def n_foreground(self) -> int:
        """Number of non-zero voxels."""
        return int(np.count_nonzero(self.data))

    def flat(self) -> np.ndarray:
        """Values in linear-index (x-fastest) order."""
        return self.data.ravel(order="F")

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )


def binary_volume(mask, spacing) -> Volume:
    """Build a binary Volume from any array-like of truthy values."""
    return Volume(np.asarray(mask).astype(bool).astype(np.uint8), tuple(spacing), "binary")


def spacings_match(a, b, rtol: float = SPACING_RTOL) -> bool:
    return all(abs(x - y) <= rtol * max(abs(x), abs(y)) for x, y in zip(a, b))


def require_same_grid(a: Volume, b: Volume):
    """Raise ShapeError unless the two volumes share dims and spacing."""
    if a.dims != b.dims:
        raise ShapeError(f"volume dims differ: {a.dims} vs {b.dims}")
    if not spacings_match(a.spacing, b.spacing):
        raise ShapeError(f"volume spacings differ: {a.spacing} vs {b.spacing}")


@dataclass(frozen=True)
class CasePair:
    """One evaluation case: a ground-truth mask and a prediction on the same grid."""

    case_id: str
    gt: Volume
    pred: Volume

    def __post_init__(self):
        if self.gt.kind != "binary":
            raise ValueError("ground truth must be a binary volume")
        if self.pred.kind not in ("binary", "probability"):
            raise ValueError("prediction must be binary or probability")
        require_same_grid(self.gt, self.pred)


def linear_index(x, y, z, dims) -> int:
    """Linear (x-fastest) index of voxel (x, y, z) on a grid of shape dims."""
    nx, ny, _ = dims
    return int(x) + nx * (int(y) + ny * int(z))
