"""Deterministic synthetic ground-truth / prediction pairs.

The built-in presets reproduce the disagreement scenarios between voxel- and
lesion-level metrics with exact voxel arithmetic (cuboid shapes only):

* ``a1`` / ``a2``  one lesion hit exactly, one missed; the missed lesion sits
  farther away in a2 than in a1.  DSC is identical, HD95 grows.
* ``b1``  one of two lesions fully covered, the other missed, plus a false
  blob: DSC is exactly 0.5 and lesion recall (coverage view) is 0.5.
* ``b2``  both lesions half covered, plus a false blob: DSC is again exactly
  0.5 but lesion recall is 1.0 at a 0.3 overlap threshold.
* ``b3``  one lesion, two predicted fragments overlapping it.
* ``b4``  two lesions, one prediction spanning halves of both.

``random_corpus`` builds seeded corpora with probability-map predictions for
property tests and cut-off sweeps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .components import STRUCT_26
from .errors import SpecError
from .volume import CasePair, Volume

PRESET_IDS = ("a1", "a2", "b1", "b2", "b3", "b4")
PRESET_DIMS = (32, 32, 16)
PRESET_SPACING = (0.5, 0.5, 1.0)


@dataclass(frozen=True)
class Cuboid:
    corner: tuple[int, int, int]
    size: tuple[int, int, int]


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius_mm: float


@dataclass(frozen=True)
class ScenarioSpec:
    """Explicit geometry of one synthetic case."""

    scenario_id: str
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    gt_shapes: tuple = ()
    pred_shapes: tuple = ()
    seed: int | None = None


def _rasterize(shape, dims, spacing) -> np.ndarray:
    mask = np.zeros(dims, dtype=bool)
    if isinstance(shape, Cuboid):
        c, s = shape.corner, shape.size
        if any(v < 1 for v in s):
            raise SpecError(f"cuboid size must be positive, got {s}")
        if any(c[i] < 0 or c[i] + s[i] > dims[i] for i in range(3)):
            raise SpecError(f"cuboid {shape} exceeds grid {dims}")
        mask[c[0] : c[0] + s[0], c[1] : c[1] + s[1], c[2] : c[2] + s[2]] = True
    elif isinstance(shape, Sphere):
        if shape.radius_mm <= 0:
            raise SpecError(f"sphere radius must be positive, got {shape.radius_mm}")
        grid = np.indices(dims, dtype=np.float64)
        d2 = sum(
            ((grid[i] - shape.center[i]) * spacing[i]) ** 2 for i in range(3)
        )
        mask = d2 <= shape.radius_mm**2
        if not mask.any():
            raise SpecError(f"sphere {shape} covers no voxel")
        # A sphere touching the grid border would be silently clipped.
        lo = [shape.center[i] - shape.radius_mm / spacing[i] for i in range(3)]
        hi = [shape.center[i] + shape.radius_mm / spacing[i] for i in range(3)]
        if any(lo[i] < -0.5 or hi[i] > dims[i] - 0.5 for i in range(3)):
            raise SpecError(f"sphere {shape} exceeds grid {dims}")
    else:
        raise SpecError(f"unknown shape {shape!r}")
    return mask


def _union(shapes, dims, spacing) -> np.ndarray:
    mask = np.zeros(dims, dtype=bool)
    for shape in shapes:
        mask |= _rasterize(shape, dims, spacing)
    return mask


def generate(spec: ScenarioSpec) -> CasePair:
    """Realise a scenario as a pair of binary volumes.

    The ground-truth shapes must stay pairwise non-adjacent under
    26-connectivity so that each one forms its own lesion.
    """
    gt_mask = _union(spec.gt_shapes, spec.dims, spec.spacing)
    pred_mask = _union(spec.pred_shapes, spec.dims, spec.spacing)
    n_components = ndimage.label(gt_mask, structure=STRUCT_26)[1]
    if n_components != len(spec.gt_shapes):
        raise SpecError(
            f"ground-truth shapes merge into {n_components} component(s); "
            "they must be pairwise non-adjacent"
        )
    return CasePair(
        case_id=spec.scenario_id,
        gt=Volume(gt_mask.astype(np.uint8), spec.spacing, "binary"),
        pred=Volume(pred_mask.astype(np.uint8), spec.spacing, "binary"),
    )


def preset(scenario_id: str, offset: int | None = None) -> ScenarioSpec:
    """Return the ScenarioSpec of one built-in scenario.

    ``offset`` parameterises a1/a2: the x displacement of the missed lesion
    relative to the detected one (defaults 10 for a1, 20 for a2).
    """
    dims, spacing = PRESET_DIMS, PRESET_SPACING

    def cube(corner):
        return Cuboid(corner, (2, 2, 2))

    hit = cube((4, 4, 4))
    blob = cube((24, 4, 4))

    if scenario_id in ("a1", "a2"):
        if offset is None:
            offset = 10 if scenario_id == "a1" else 20
        missed = cube((4 + offset, 4, 4))
        return ScenarioSpec(scenario_id, dims, spacing, (hit, missed), (hit,))
    if offset is not None:
        raise SpecError("offset only applies to scenarios a1 and a2")
    if scenario_id == "b1":
        far = cube((24, 24, 8))
        return ScenarioSpec(scenario_id, dims, spacing, (hit, far), (hit, blob))
    if scenario_id == "b2":
        far = cube((24, 24, 8))
        halves = (Cuboid((4, 4, 4), (2, 2, 1)), Cuboid((24, 24, 8), (2, 2, 1)))
        return ScenarioSpec(scenario_id, dims, spacing, (hit, far), halves + (blob,))
    if scenario_id == "b3":
        gt = Cuboid((8, 8, 8), (4, 2, 2))
        return ScenarioSpec(
            scenario_id, dims, spacing, (gt,), (cube((7, 8, 8)), cube((11, 8, 8)))
        )
    if scenario_id == "b4":
        gts = (cube((8, 8, 8)), cube((11, 8, 8)))
        spanning = Cuboid((9, 8, 8), (3, 2, 2))
        return ScenarioSpec(scenario_id, dims, spacing, gts, (spanning,))
    raise SpecError(f"unknown scenario {scenario_id!r}; expected one of {PRESET_IDS}")


@dataclass(frozen=True)
class NoiseParams:
    """How a prediction is perturbed relative to the ground truth."""

    dilate_max: int = 0
    erode_max: int = 0
    shift_max: int = 0
    drop_prob: float = 0.0
    spurious_max: int = 0
    smooth_sigma: float = 0.0


ZERO_NOISE = NoiseParams()

_STRUCT_6 = ndimage.generate_binary_structure(3, 1)


def _shift(mask: np.ndarray, offset) -> np.ndarray:
    out = np.zeros_like(mask)
    src, dst = [], []
    for ax, off in enumerate(offset):
        n = mask.shape[ax]
        off = int(np.clip(off, -n, n))
        if off >= 0:
            src.append(slice(0, n - off))
            dst.append(slice(off, n))
        else:
            src.append(slice(-off, n))
            dst.append(slice(0, n + off))
    out[tuple(dst)] = mask[tuple(src)]
    return out


def _place_random_lesion(rng, dims, spacing, blocked, min_voxels=8, attempts=200):
    """Draw a cuboid or sphere that fits, has >= min_voxels voxels and does
    not touch (26-adjacency) any voxel of ``blocked``."""
    for _ in range(attempts):
        if rng.random() < 0.5:
            size = tuple(int(s) for s in rng.integers(2, 5, size=3))
            corner = tuple(int(rng.integers(0, dims[i] - size[i] + 1)) for i in range(3))
            shape = Cuboid(corner, size)
        else:
            radius = float(rng.uniform(1.2, 2.4)) * max(spacing)
            margin = [radius / spacing[i] for i in range(3)]
            center = tuple(
                float(rng.uniform(margin[i], dims[i] - 1 - margin[i])) for i in range(3)
            )
            shape = Sphere(center, radius)
        try:
            mask = _rasterize(shape, dims, spacing)
        except SpecError:
            continue
        if mask.sum() < min_voxels:
            continue
        if (mask & blocked).any():
            continue
        return shape, mask
    raise SpecError(f"could not place a lesion on grid {dims} after {attempts} attempts")


def random_case(
    case_id: str,
    dims,
    spacing,
    seed,
    lesion_count_range=(1, 3),
    noise: NoiseParams = ZERO_NOISE,
) -> CasePair:
    """One seeded case: non-adjacent lesions plus a perturbed probability map."""
    rng = np.random.Generator(np.random.PCG64(seed))
    lo, hi = lesion_count_range
    if lo < 1 or hi < lo:
        raise SpecError(f"invalid lesion_count_range {lesion_count_range}")
    n_lesions = int(rng.integers(lo, hi + 1))

    gt_mask = np.zeros(dims, dtype=bool)
    blocked = np.zeros(dims, dtype=bool)
    lesions = []
    for _ in range(n_lesions):
        _, mask = _place_random_lesion(rng, dims, spacing, blocked)
        lesions.append(mask)
        gt_mask |= mask
        blocked |= ndimage.binary_dilation(mask, structure=STRUCT_26)

    pred_mask = np.zeros(dims, dtype=bool)
    for mask in lesions:
        if noise.drop_prob > 0 and rng.random() < noise.drop_prob:
            continue
        m = mask
        if noise.shift_max > 0:
            m = _shift(m, rng.integers(-noise.shift_max, noise.shift_max + 1, size=3))
        if noise.erode_max > 0:
            e = int(rng.integers(0, noise.erode_max + 1))
            if e:
                m = ndimage.binary_erosion(m, structure=_STRUCT_6, iterations=e)
        if noise.dilate_max > 0:
            d = int(rng.integers(0, noise.dilate_max + 1))
            if d:
                m = ndimage.binary_dilation(m, structure=_STRUCT_6, iterations=d)
        pred_mask |= m
    if noise.spurious_max > 0:
        for _ in range(int(rng.integers(0, noise.spurious_max + 1))):
            size = tuple(int(s) for s in rng.integers(2, 4, size=3))
            corner = tuple(int(rng.integers(0, dims[i] - size[i] + 1)) for i in range(3))
            pred_mask |= _rasterize(Cuboid(corner, size), dims, spacing)

    prob = pred_mask.astype(np.float32)
    if noise.smooth_sigma > 0:
        prob = ndimage.gaussian_filter(prob, sigma=noise.smooth_sigma)
        prob = np.clip(prob, 0.0, 1.0)
    return CasePair(
        case_id=case_id,
        gt=Volume(gt_mask.astype(np.uint8), spacing, "binary"),
        pred=Volume(prob, spacing, "probability"),
    )


def random_corpus(
    n_cases: int,
    dims=PRESET_DIMS,
    seed: int = 0,
    spacing=PRESET_SPACING,
    lesion_count_range=(1, 3),
    noise: NoiseParams = ZERO_NOISE,
) -> list[CasePair]:
    """A list of seeded cases; identical for identical arguments.

    Case ``i`` uses the ``i``-th child stream of ``SeedSequence(seed)``, so
    corpora of different sizes share their common prefix.
    """
    if n_cases < 1:
        raise SpecError("n_cases must be positive")
    children = np.random.SeedSequence(seed).spawn(n_cases)
    return [
        random_case(f"case_{i:03d}", tuple(dims), tuple(spacing), children[i], lesion_count_range, noise)
        for i in range(n_cases)
    ]


def spec_to_json(spec: ScenarioSpec) -> str:
    """Serialise a ScenarioSpec as JSON."""
    def shape_dict(s):
        if isinstance(s, Cuboid):
            return {"type": "cuboid", "corner": list(s.corner), "size": list(s.size)}
        return {"type": "sphere", "center": list(s.center), "radius_mm": s.radius_mm}

    return json.dumps(
        {
            "scenario_id": spec.scenario_id,
            "dims": list(spec.dims),
            "spacing_mm": list(spec.spacing),
            "gt_shapes": [shape_dict(s) for s in spec.gt_shapes],
            "pred_shapes": [shape_dict(s) for s in spec.pred_shapes],
            "seed": spec.seed,
        },
        sort_keys=True,
        indent=2,
    )


def spec_from_json(text: str) -> ScenarioSpec:
    def parse_shape(d):
        if d.get("type") == "cuboid":
            return Cuboid(tuple(d["corner"]), tuple(d["size"]))
        if d.get("type") == "sphere":
            return Sphere(tuple(d["center"]), d["radius_mm"])
        raise SpecError(f"unknown shape type {d.get('type')!r}")

    try:
        doc = json.loads(text)
        return ScenarioSpec(
            scenario_id=doc["scenario_id"],
            dims=tuple(doc["dims"]),
            spacing=tuple(doc["spacing_mm"]),
            gt_shapes=tuple(parse_shape(s) for s in doc["gt_shapes"]),
            pred_shapes=tuple(parse_shape(s) for s in doc["pred_shapes"]),
            seed=doc.get("seed"),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SpecError(f"invalid scenario document: {exc}") from exc
