"""In-memory array model and bit-exact on-disk interchange formats.

Arrays are plain numpy ndarrays (C order). Three containers move data
between tools, and between this package and any external feature producer:

FMAP binary layout (little-endian regardless of host)::

    offset  size      field
    0       4         magic b"FMAP"
    4       1         format version (currently 1)
    5       1         dtype code: 1=float32, 2=uint8, 3=uint16
    6       2         reserved, must be 0 (pads the header to 4-byte alignment)
    8       4         rank, uint32
    12      4*rank    dims, uint32 each
    ...     prod*size row-major payload, little-endian

A JSON sidecar ``<path>.json`` carries slice_ref, encoder_id, grid and
channel count. Masks travel as 8-bit grayscale PNG where the pixel value is
the label id. Manifests are JSON lines, one entry per line; an optional
first line ``{"dataset_name": ...}`` names the dataset.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError, LabelError, LengthError, ValidationError

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1

_DTYPE_CODES = {"float32": 1, "uint8": 2, "uint16": 3}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def check_tensor(arr: np.ndarray, dtypes: tuple[str, ...] = ("float32", "uint8", "uint16")) -> np.ndarray:
    """Validate an array against the tensor contract (rank 1-4, no zero dims)."""
    arr = np.asarray(arr)
    if arr.dtype.name not in dtypes:
        raise ValidationError(f"dtype {arr.dtype.name} not in {dtypes}")
    if not 1 <= arr.ndim <= 4:
        raise DimensionError(f"rank {arr.ndim} outside 1..4")
    if any(d == 0 for d in arr.shape):
        raise DimensionError(f"zero dimension in shape {arr.shape}")
    return arr


@dataclass
class FeatureMap:
    """Patch-embedding grid for one slice: (grid_h, grid_w, channels) float32."""

    values: np.ndarray
    slice_ref: str = ""
    encoder_id: str = ""

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise DimensionError(f"feature map must be rank 3, got {self.values.ndim}")
        if any(d == 0 for d in self.values.shape):
            raise DimensionError(f"zero dimension in {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValidationError("feature map contains non-finite values")

    @property
    def grid_h(self) -> int:
        return self.values.shape[0]

    @property
    def grid_w(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass
class LabelMask:
    """Integer-labeled 2D [H,W] or 3D [D,H,W] mask."""

    labels: np.ndarray
    label_names: dict[int, str] | None = None

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels)
        if self.labels.dtype not in (np.uint8, np.uint16):
            raise ValidationError(f"mask dtype must be uint8/uint16, got {self.labels.dtype}")
        if self.labels.ndim not in (2, 3):
            raise DimensionError(f"mask must be 2D or 3D, got rank {self.labels.ndim}")
        if self.label_names is not None:
            declared = set(self.label_names)
            present = set(np.unique(self.labels).tolist())
            if not present <= declared:
                raise LabelError(f"labels {sorted(present - declared)} not declared in label_names")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.labels.shape


@dataclass
class ManifestEntry:
    patient_id: str
    series_id: str
    slice_index: int
    image_path: str
    mask_path: str | None = None
    feature_path: str | None = None
    class_label: str | None = None
    attrs: dict | None = None

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.patient_id, self.series_id, self.slice_index)

    def to_json(self) -> dict:
        d = {
            "patient_id": self.patient_id,
            "series_id": self.series_id,
            "slice_index": self.slice_index,
            "image_path": self.image_path,
        }
        for k in ("mask_path", "feature_path", "class_label", "attrs"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        return d


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    dataset_name: str = ""

    def __post_init__(self):
        self._check_unique()

    def _check_unique(self):
        seen = set()
        for e in self.entries:
            if e.key in seen:
                raise ValidationError(f"duplicate manifest key {e.key}")
            seen.add(e.key)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        self._check_unique()
        with path.open("w") as fh:
            if self.dataset_name:
                fh.write(json.dumps({"dataset_name": self.dataset_name}) + "\n")
            for e in self.entries:
                fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        entries: list[ManifestEntry] = []
        dataset_name = ""
        with path.open() as fh:
            for lineno, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}:{lineno + 1}: not valid JSON") from exc
                if "patient_id" not in rec:
                    if "dataset_name" in rec:
                        dataset_name = rec["dataset_name"]
                        continue
                    raise FormatError(f"{path}:{lineno + 1}: neither entry nor header")
                entries.append(ManifestEntry(
                    patient_id=rec["patient_id"],
                    series_id=rec["series_id"],
                    slice_index=int(rec["slice_index"]),
                    image_path=rec["image_path"],
                    mask_path=rec.get("mask_path"),
                    feature_path=rec.get("feature_path"),
                    class_label=rec.get("class_label"),
                    attrs=rec.get("attrs"),
                ))
        return cls(entries=entries, dataset_name=dataset_name)


def write_fmap(fmap: FeatureMap, path: str | Path) -> None:
    """Write a feature map in the FMAP container plus its JSON sidecar."""
    path = Path(path)
    arr = fmap.values
    if not np.isfinite(arr).all():
        raise ValidationError("refusing to write non-finite feature map")
    header = struct.pack("<4sBBH", FMAP_MAGIC, FMAP_VERSION, _DTYPE_CODES["float32"], 0)
    header += struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype("<f4", copy=False).tobytes(order="C")
    path.write_bytes(header + payload)
    sidecar = {
        "slice_ref": fmap.slice_ref,
        "encoder_id": fmap.encoder_id,
        "grid": [fmap.grid_h, fmap.grid_w],
        "channels": fmap.channels,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def read_fmap(path: str | Path) -> FeatureMap:
    """Read an FMAP file written by write_fmap; strict about magic and length."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 12:
        raise LengthError(f"{path}: too short for an FMAP header")
    magic, version, dtype_code, reserved = struct.unpack_from("<4sBBH", blob, 0)
    if magic != FMAP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FMAP_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype_code not in _CODE_DTYPES:
        raise FormatError(f"{path}: unknown dtype code {dtype_code}")
    (rank,) = struct.unpack_from("<I", blob, 8)
    if not 1 <= rank <= 4:
        raise FormatError(f"{path}: rank {rank} outside 1..4")
    header_len = 12 + 4 * rank
    if len(blob) < header_len:
        raise LengthError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I", blob, 12)
    dtype = np.dtype("<" + {"float32": "f4", "uint8": "u1", "uint16": "u2"}[_CODE_DTYPES[dtype_code]])
    expected = int(np.prod(dims)) * dtype.itemsize
    payload = blob[header_len:]
    if len(payload) != expected:
        raise LengthError(f"{path}: payload {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype=dtype).reshape(dims)
    sidecar_path = Path(str(path) + ".json")
    slice_ref, encoder_id = "", ""
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text())
        slice_ref = meta.get("slice_ref", "")
        encoder_id = meta.get("encoder_id", "")
    return FeatureMap(values=values.astype(np.float32), slice_ref=slice_ref, encoder_id=encoder_id)


def save_mask_png(mask: LabelMask | np.ndarray, path: str | Path) -> None:
    """Store a 2D mask as 8-bit grayscale PNG, pixel value = label id."""
    labels = mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)
    if labels.ndim != 2:
        raise DimensionError("PNG container only holds 2D masks")
    if labels.max(initial=0) > 255:
        raise LabelError("labels above 255 do not fit the 8-bit PNG container")
    Image.fromarray(labels.astype(np.uint8), mode="L").save(Path(path), format="PNG")


def load_mask_png(path: str | Path) -> LabelMask:
    """Load an 8-bit grayscale PNG mask; any other PNG flavor is rejected."""
    with Image.open(Path(path)) as img:
        if img.mode != "L":
            raise FormatError(f"{path}: expected 8-bit grayscale, got mode {img.mode}")
        labels = np.asarray(img, dtype=np.uint8)
    return LabelMask(labels=labels)


def save_image_png(values01: np.ndarray, path: str | Path) -> None:
    """Store a [0,1] float image as 8-bit PNG with round-half-away-from-zero."""
    arr = np.asarray(values01, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError("PNG container only holds 2D images")
    px = np.floor(arr * 255.0 + 0.5).clip(0, 255).astype(np.uint8)
    Image.fromarray(px, mode="L").save(Path(path), format="PNG")


def load_image_png(path: str | Path) -> np.ndarray:
    """Load an 8-bit grayscale PNG into float32 intensities in [0,1]."""
    with Image.open(Path(path)) as img:
        if img.mode != "L":
            raise FormatError(f"{path}: expected 8-bit grayscale, got mode {img.mode}")
        arr = np.asarray(img, dtype=np.float32)
    return arr / 255.0
