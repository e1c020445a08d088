"""Curation pipeline: DICOM series -> validated continuous volume ->
normalized 2D slices + manifest.

De-identification is a fixed allow-list (Modality, BodyPartExamined,
SeriesDescription) copied into manifest entries; every other attribute is
dropped at the door. Slices whose orientation differs from the series'
modal orientation are treated as reference slices and discarded.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dicomio import read_dicom
from .errors import (
    DimensionError,
    DuplicateSliceError,
    FormatError,
    MixedSeriesError,
    SizeError,
)
from .interchange import Manifest, ManifestEntry, save_image_png


@dataclass
class Volume:
    voxels: np.ndarray                      # (D, H, W) float32
    spacing_mm: tuple[float, float, float]  # (dz, dy, dx)
    patient_id: str
    series_id: str
    orientation: np.ndarray                 # rows: row dir, col dir, slice normal
    slice_positions: np.ndarray             # projections onto the slice normal, sorted
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float32)
        if self.voxels.ndim != 3 or self.voxels.shape[0] < 2:
            raise DimensionError("volume needs at least 2 slices")
        if any(s <= 0 for s in self.spacing_mm):
            raise DimensionError("spacing must be strictly positive")


@dataclass
class NormalizationMode:
    mode: str = "slice_wise"   # slice_wise | volume_wise

    def __post_init__(self):
        if self.mode not in ("slice_wise", "volume_wise"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")


@dataclass
class ContinuityResult:
    ok: bool
    reason: str = ""
    index: int | None = None   # first offending gap index when rejected


def parse_dicom_series(directory: str | Path) -> Volume:
    """Assemble one volume from the single-frame DICOM files in a directory.

    Slices are sorted by the projection of their position onto the slice
    normal (cross product of the orientation vectors).
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.is_file())
    if not files:
        raise SizeError(f"{directory}: no files")
    slices = []
    for f in files:
        try:
            slices.append(read_dicom(f))
        except FormatError as exc:
            raise FormatError(f"unreadable DICOM {f.name}: {exc}") from exc

    series_uids = {s.series_uid for s in slices}
    if len(series_uids) > 1:
        raise MixedSeriesError(f"{directory}: series {sorted(series_uids)}")

    # Reference slices (different orientation than the series mode) are dropped.
    orient_counts = Counter(tuple(round(v, 6) for v in s.orientation) for s in slices)
    modal_orientation = orient_counts.most_common(1)[0][0]
    slices = [s for s in slices if tuple(round(v, 6) for v in s.orientation) == modal_orientation]
    if len(slices) < 2:
        raise SizeError(f"{directory}: fewer than 2 slices share the modal orientation")

    row_dir = np.array(modal_orientation[:3], dtype=np.float64)
    col_dir = np.array(modal_orientation[3:], dtype=np.float64)
    normal = np.cross(row_dir, col_dir)

    projections = np.array([float(np.dot(s.position, normal)) for s in slices])
    order = np.argsort(projections, kind="stable")
    slices = [slices[i] for i in order]
    projections = projections[order]
    gaps = np.diff(projections)
    for i, g in enumerate(gaps):
        if abs(g) < 1e-6:
            raise DuplicateSliceError(f"{directory}: slices {i} and {i + 1} share a position")

    shapes = {s.pixels.shape for s in slices}
    if len(shapes) > 1:
        raise DimensionError(f"{directory}: inconsistent slice shapes {sorted(shapes)}")

    voxels = np.stack([
        s.pixels.astype(np.float32) * np.float32(s.rescale_slope) + np.float32(s.rescale_intercept)
        for s in slices
    ])
    dz = float(np.median(gaps))
    dy, dx = slices[0].pixel_spacing
    return Volume(
        voxels=voxels,
        spacing_mm=(dz, float(dy), float(dx)),
        patient_id=slices[0].patient_id,
        series_id=slices[0].series_uid,
        orientation=np.stack([row_dir, col_dir, normal]),
        slice_positions=projections,
        attrs=dict(slices[0].attrs),
    )


def validate_continuity(vol: Volume, rel_tol: float = 0.01) -> ContinuityResult:
    """Accept iff every inter-slice gap equals the median gap within rel_tol."""
    gaps = np.diff(vol.slice_positions)
    med = float(np.median(gaps))
    for i, g in enumerate(gaps):
        if abs(g - med) > rel_tol * med:
            return ContinuityResult(
                ok=False,
                reason=f"gap {g:.6g} at index {i} deviates from median {med:.6g} "
                       f"by more than {rel_tol:.2%}",
                index=i,
            )
    return ContinuityResult(ok=True)


def _minmax(arr: np.ndarray) -> np.ndarray:
    lo = float(arr.min())
    hi = float(arr.max())
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def normalize(vol: Volume, mode: NormalizationMode) -> Volume:
    """Min-max normalization into [0,1], per slice or over the whole volume.

    Constant regions map to all-zeros.
    """
    v = vol.voxels.astype(np.float64)
    if mode.mode == "slice_wise":
        out = np.stack([_minmax(v[i]) for i in range(v.shape[0])])
    else:
        out = _minmax(v)
    return Volume(
        voxels=out.astype(np.float32),
        spacing_mm=vol.spacing_mm,
        patient_id=vol.patient_id,
        series_id=vol.series_id,
        orientation=vol.orientation,
        slice_positions=vol.slice_positions,
        attrs=dict(vol.attrs),
    )


def export_slices(vol: Volume, mode: NormalizationMode, out_dir: str | Path) -> Manifest:
    """Write each normalized slice as 8-bit grayscale PNG plus manifest entries."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    norm = normalize(vol, mode)
    entries = []
    for i in range(norm.voxels.shape[0]):
        name = f"{vol.patient_id}_{vol.series_id}_{i:04d}.png"
        path = out_dir / name
        save_image_png(norm.voxels[i], path)
        entries.append(ManifestEntry(
            patient_id=vol.patient_id,
            series_id=vol.series_id,
            slice_index=i,
            image_path=str(path),
            attrs=dict(vol.attrs) or None,
        ))
    return Manifest(entries=entries, dataset_name=vol.series_id)
