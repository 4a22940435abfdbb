"""Reading and writing volumes: minimal NIfTI-1 and a raw+JSON-sidecar format.

Only single-file NIfTI-1 (``.nii``, optionally gzip-compressed) with magic
``n+1\\0`` is handled, honouring the ``dim``, ``datatype``, ``bitpix``,
``pixdim`` and ``vox_offset`` header fields.  Orientation information
(qform/sform) is ignored: every metric in this package depends only on the
voxel grid and its spacing.  The raw format is a bare little-endian voxel
stream plus a JSON sidecar declaring ``dims``, ``spacing_mm``, ``dtype``
(``u8`` or ``f32``) and ``order`` (always ``x-fastest``).
"""

from __future__ import annotations

import gzip
import json
import struct
import warnings
from pathlib import Path

import numpy as np

from .errors import FormatError, IoError, UnsupportedError
from .volume import Volume

_HDR_SIZE = 348
_MAGIC_SINGLE = b"n+1\x00"
_MAGIC_PAIR = b"ni1\x00"

# NIfTI-1 datatype code -> numpy dtype (little-endian base)
_NIFTI_DTYPES = {2: "u1", 4: "i2", 16: "f4"}
_NIFTI_BITPIX = {2: 8, 4: 16, 16: 32}

_RAW_DTYPES = {"u8": "u1", "f32": "<f4"}


def _read_bytes(path) -> bytes:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if blob[:2] == b"\x1f\x8b":
        try:
            blob = gzip.decompress(blob)
        except (OSError, EOFError) as exc:
            raise FormatError(f"{path}: corrupt gzip stream: {exc}") from exc
    return blob


def _write_bytes(path, blob: bytes):
    path = Path(path)
    try:
        if path.suffix == ".gz":
            # mtime=0 keeps output bytes independent of wall-clock time.
            with open(path, "wb") as f:
                with gzip.GzipFile(fileobj=f, mode="wb", mtime=0) as gz:
                    gz.write(blob)
        else:
            path.write_bytes(blob)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def infer_kind(arr: np.ndarray) -> tuple[str, np.ndarray]:
    """Classify voxel values as binary / probability / labels.

    Returns the kind together with the array cast to the canonical dtype
    for that kind.  Raises FormatError when the values fit no kind.
    """
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise FormatError("voxel data contains NaN or infinite values")
    lo = arr.min()
    hi = arr.max()
    if arr.dtype.kind in "ui":
        if lo < 0:
            raise FormatError("integer voxel data contains negative values")
        if hi <= 1:
            return "binary", arr.astype(np.uint8)
        return "labels", arr.astype(np.int32)
    if np.isin(arr, (0.0, 1.0)).all():
        return "binary", arr.astype(np.uint8)
    if 0.0 <= lo and hi <= 1.0:
        return "probability", arr.astype(np.float32)
    if lo >= 0 and (arr == np.floor(arr)).all():
        return "labels", arr.astype(np.int32)
    raise FormatError(
        f"voxel values in [{lo}, {hi}] fit no supported kind "
        "(binary, probability in [0,1], or non-negative integer labels)"
    )


def read_nifti(path) -> Volume:
    """Read a single-file NIfTI-1 volume (.nii or .nii.gz).

    The volume kind is inferred from the voxel values; negative pixdim
    entries are absolute-valued with a warning (their sign only encodes
    orientation, which is irrelevant here).
    """
    blob = _read_bytes(path)
    if len(blob) < _HDR_SIZE:
        raise FormatError(f"{path}: file shorter than the {_HDR_SIZE}-byte header")

    for bo in ("<", ">"):
        (sizeof_hdr,) = struct.unpack_from(bo + "i", blob, 0)
        if sizeof_hdr == _HDR_SIZE:
            break
    else:
        raise FormatError(f"{path}: sizeof_hdr is not {_HDR_SIZE} in either byte order")

    magic = blob[344:348]
    if magic == _MAGIC_PAIR:
        raise UnsupportedError(f"{path}: two-file NIfTI-1 (hdr/img pairs) is not supported")
    if magic != _MAGIC_SINGLE:
        raise FormatError(f"{path}: bad magic {magic!r}")

    dim = struct.unpack_from(bo + "8h", blob, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise FormatError(f"{path}: dim[0]={ndim} outside 1..7")
    if ndim < 3:
        raise UnsupportedError(f"{path}: only 3D volumes are supported, got dim[0]={ndim}")
    if any(d > 1 for d in dim[4 : ndim + 1]):
        raise UnsupportedError(f"{path}: non-singleton dimensions beyond the third: {dim}")
    dims = tuple(int(d) for d in dim[1:4])
    if any(d < 1 for d in dims):
        raise FormatError(f"{path}: non-positive spatial dims {dims}")

    (datatype, bitpix) = struct.unpack_from(bo + "2h", blob, 70)
    if datatype not in _NIFTI_DTYPES:
        raise UnsupportedError(
            f"{path}: datatype code {datatype} not supported (uint8, int16, float32 only)"
        )
    if bitpix != _NIFTI_BITPIX[datatype]:
        raise FormatError(f"{path}: bitpix {bitpix} inconsistent with datatype {datatype}")

    pixdim = struct.unpack_from(bo + "8f", blob, 76)
    spacing = pixdim[1:4]
    if any(not np.isfinite(s) or s == 0 for s in spacing):
        raise FormatError(f"{path}: non-positive pixdim {spacing}")
    if any(s < 0 for s in spacing):
        warnings.warn(f"{path}: negative pixdim {spacing}; using absolute values")
    spacing = tuple(abs(float(s)) for s in spacing)

    (vox_offset,) = struct.unpack_from(bo + "f", blob, 108)
    if vox_offset == 0:
        offset = _HDR_SIZE + 4
    elif float(vox_offset).is_integer() and vox_offset >= _HDR_SIZE:
        offset = int(vox_offset)
    else:
        raise FormatError(f"{path}: invalid vox_offset {vox_offset}")

    count = dims[0] * dims[1] * dims[2]
    dtype = np.dtype(bo + _NIFTI_DTYPES[datatype])
    need = offset + count * dtype.itemsize
    if len(blob) < need:
        raise FormatError(f"{path}: file truncated ({len(blob)} bytes, need {need})")

    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    arr = arr.reshape(dims, order="F")
    kind, data = infer_kind(arr)
    return Volume(data, spacing, kind)


def read_raw(data_path, meta_path) -> Volume:
    """Read a raw little-endian voxel stream described by a JSON sidecar."""
    try:
        meta = json.loads(Path(meta_path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{meta_path}: invalid JSON: {exc}") from exc

    for key in ("dims", "spacing_mm", "dtype", "order"):
        if key not in meta:
            raise FormatError(f"{meta_path}: missing required field {key!r}")
    if meta["order"] != "x-fastest":
        raise UnsupportedError(f"{meta_path}: unsupported voxel order {meta['order']!r}")
    if meta["dtype"] not in _RAW_DTYPES:
        raise UnsupportedError(f"{meta_path}: unsupported dtype {meta['dtype']!r}")
    dims = tuple(meta["dims"])
    if len(dims) != 3 or any(not isinstance(d, int) or d < 1 for d in dims):
        raise FormatError(f"{meta_path}: dims must be three positive integers, got {dims}")
    spacing = tuple(meta["spacing_mm"])
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise FormatError(f"{meta_path}: spacing_mm must be three positive reals")

    dtype = np.dtype(_RAW_DTYPES[meta["dtype"]])
    blob = _read_bytes(data_path)
    count = dims[0] * dims[1] * dims[2]
    if len(blob) != count * dtype.itemsize:
        raise FormatError(
            f"{data_path}: expected {count * dtype.itemsize} bytes for dims {dims}, "
            f"got {len(blob)}"
        )
    arr = np.frombuffer(blob, dtype=dtype).reshape(dims, order="F")
    kind, data = infer_kind(arr)
    return Volume(data, spacing, kind)


def _nifti_payload(v: Volume) -> tuple[int, np.ndarray]:
    if v.kind == "binary":
        return 2, v.data.astype("<u1")
    if v.kind == "probability":
        return 16, v.data.astype("<f4")
    if v.data.max() > np.iinfo(np.int16).max:
        raise UnsupportedError("labels volume exceeds the int16 range of the NIfTI writer")
    return 4, v.data.astype("<i2")


def write_nifti(v: Volume, path):
    """Write a Volume as single-file NIfTI-1; gzip when the path ends in .gz."""
    datatype, payload = _nifti_payload(v)
    hdr = bytearray(_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, _HDR_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, *v.dims, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, datatype, _NIFTI_BITPIX[datatype])
    struct.pack_into("<8f", hdr, 76, 1.0, *v.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(_HDR_SIZE + 4))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    hdr[344:348] = _MAGIC_SINGLE
    # 4-byte extender: no header extensions present.
    blob = bytes(hdr) + b"\x00\x00\x00\x00" + payload.ravel(order="F").tobytes()
    _write_bytes(path, blob)


def write_raw(v: Volume, data_path, meta_path=None):
    """Write a Volume as raw voxels plus a JSON sidecar.

    The sidecar defaults to ``<data_path>.json``.  Binary masks are stored
    as u8; probability maps as f32; labels as u8 when they fit, else f32
    (float32 holds integers exactly up to 2**24).
    """
    if v.kind == "binary":
        dtype_name, payload = "u8", v.data.astype("<u1")
    elif v.kind == "probability":
        dtype_name, payload = "f32", v.data.astype("<f4")
    elif v.data.max() <= np.iinfo(np.uint8).max:
        dtype_name, payload = "u8", v.data.astype("<u1")
    else:
        dtype_name, payload = "f32", v.data.astype("<f4")
    meta = {
        "dims": list(v.dims),
        "spacing_mm": [float(s) for s in v.spacing],
        "dtype": dtype_name,
        "order": "x-fastest",
    }
    meta_path = Path(meta_path) if meta_path is not None else Path(str(data_path) + ".json")
    _write_bytes(data_path, payload.ravel(order="F").tobytes())
    try:
        meta_path.write_text(json.dumps(meta, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {meta_path}: {exc}") from exc


def write_volume(v: Volume, path, format: str = "nifti"):
    """Write a Volume in the requested on-disk format ("nifti" or "raw")."""
    if format == "nifti":
        write_nifti(v, path)
    elif format == "raw":
        write_raw(v, path)
    else:
        raise ValueError(f"unknown format {format!r}")


def read_volume(path) -> Volume:
    """Dispatch on file extension: .nii/.nii.gz -> NIfTI, otherwise raw+sidecar."""
    name = str(path)
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        return read_nifti(path)
    return read_raw(path, str(path) + ".json")
