"""Deterministic synthetic-data factory.

Everything the evaluation pipelines consume can be generated here with no
trained encoder: blob images with exact masks, proxy feature maps, and
minimal DICOM series for the curation tests. Feature proxies are oracles
for pipeline correctness, not encoder emulations.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dicomio import DicomSlice, write_dicom
from .errors import ValidationError
from .interchange import (
    FeatureMap,
    Manifest,
    ManifestEntry,
    load_image_png,
    load_mask_png,
    save_image_png,
    save_mask_png,
    write_fmap,
)

OBJECT_KINDS = ("ellipse", "two_blobs", "ramp", "constant")
FEATURE_MODES = ("onehot_oracle", "intensity_positional", "noise")


@dataclass
class SynthSpec:
    seed: int = 0
    image_size: tuple[int, int] = (64, 64)
    n_volumes: int = 4
    slices_per_volume: int = 6
    object_kind: str = "ellipse"
    feature_mode: str = "onehot_oracle"
    noise_sigma: float = 0.05
    n_classes: int = 2
    patch_size: int = 8

    def __post_init__(self):
        if self.image_size[0] <= 0 or self.image_size[1] <= 0:
            raise ValidationError("image size must be positive")
        if self.n_volumes < 1 or self.slices_per_volume < 1:
            raise ValidationError("need at least one volume and slice")
        if self.object_kind not in OBJECT_KINDS:
            raise ValidationError(f"unknown object kind {self.object_kind!r}")
        if self.feature_mode not in FEATURE_MODES:
            raise ValidationError(f"unknown feature mode {self.feature_mode!r}")

    @classmethod
    def from_json(cls, d: dict) -> "SynthSpec":
        spec = cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})
        if isinstance(spec.image_size, list):
            spec.image_size = tuple(spec.image_size)
        return spec


def _ellipse_mask(H, W, cy, cx, ry, rx) -> np.ndarray:
    ys = np.arange(H)[:, None]
    xs = np.arange(W)[None, :]
    return ((((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2) <= 1.0).astype(np.uint8)


def _render_slice(spec: SynthSpec, vol_idx: int, slice_idx: int,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, str]:
    """One (image, mask, class_label) triple; image in [0,1], mask uint8."""
    H, W = spec.image_size
    cls = vol_idx % spec.n_classes
    label = f"band{cls}"
    fg = 0.35 + 0.5 * (cls / max(1, spec.n_classes - 1))
    image = np.full((H, W), 0.08, dtype=np.float64)
    mask = np.zeros((H, W), dtype=np.uint8)

    if spec.object_kind == "ellipse":
        cy = H / 2 + rng.uniform(-H / 10, H / 10)
        cx = W / 2 + rng.uniform(-W / 10, W / 10)
        ry = rng.uniform(H / 5, H / 3.2)
        rx = rng.uniform(W / 5, W / 3.2)
        mask = _ellipse_mask(H, W, cy, cx, ry, rx)
        image[mask == 1] = fg
    elif spec.object_kind == "two_blobs":
        r = min(H, W) / 8
        for cx in (W / 4, 3 * W / 4):
            mask |= _ellipse_mask(H, W, H / 2, cx, r, r)
        image[mask == 1] = fg
    elif spec.object_kind == "ramp":
        ys = np.arange(H)[:, None]
        xs = np.arange(W)[None, :]
        image = (ys + xs) / (H + W - 2)
    else:  # constant
        image = np.full((H, W), 0.5, dtype=np.float64)

    if spec.noise_sigma > 0 and spec.object_kind in ("ellipse", "two_blobs"):
        image = image + rng.normal(0.0, spec.noise_sigma, size=(H, W))
    return image.clip(0.0, 1.0), mask, label


def make_dataset(spec: SynthSpec, out_dir: str | Path) -> tuple[Manifest, list, list]:
    """Render volumes of blob slices to PNG; one patient per volume."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries, images, masks = [], [], []
    for v in range(spec.n_volumes):
        rng = np.random.default_rng([spec.seed, v])
        pid, sid = f"P{v:03d}", f"S{v:03d}"
        for i in range(spec.slices_per_volume):
            image, mask, label = _render_slice(spec, v, i, rng)
            img_path = out_dir / f"{pid}_{sid}_{i:04d}.png"
            mask_path = out_dir / f"{pid}_{sid}_{i:04d}_mask.png"
            save_image_png(image, img_path)
            save_mask_png(mask, mask_path)
            entries.append(ManifestEntry(
                patient_id=pid, series_id=sid, slice_index=i,
                image_path=str(img_path), mask_path=str(mask_path),
                class_label=label,
            ))
            images.append(image)
            masks.append(mask)
    return Manifest(entries=entries, dataset_name=f"synth_{spec.object_kind}"), images, masks


def _patch_grid(H: int, W: int, patch: int) -> tuple[int, int]:
    return (H + patch - 1) // patch, (W + patch - 1) // patch


def _features_for_slice(image: np.ndarray, mask: np.ndarray, mode: str,
                        patch: int, rng: np.random.Generator) -> np.ndarray:
    H, W = image.shape
    if mode == "onehot_oracle":
        # pixel-resolution one-hot of the mask label: perfectly separable
        onehot = np.stack([(mask == 0), (mask == 1)], axis=-1)
        return onehot.astype(np.float32)
    gh, gw = _patch_grid(H, W, patch)
    if mode == "noise":
        return rng.normal(0.0, 1.0, size=(gh, gw, 8)).astype(np.float32)
    vals = np.zeros((gh, gw, 4), dtype=np.float32)
    for pi in range(gh):
        for pj in range(gw):
            block = image[pi * patch:(pi + 1) * patch, pj * patch:(pj + 1) * patch]
            vals[pi, pj] = (
                block.mean(),
                (pi + 0.5) / gh,
                (pj + 0.5) / gw,
                block.var(),
            )
    return vals


def make_features(manifest: Manifest, mode: str, out_dir: str | Path,
                  seed: int = 0, patch_size: int = 8) -> Manifest:
    """Proxy feature maps for every manifest slice, written as FMAP files."""
    if mode not in FEATURE_MODES:
        raise ValidationError(f"unknown feature mode {mode!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for ordinal, e in enumerate(manifest.entries):
        image = load_image_png(e.image_path)
        mask = load_mask_png(e.mask_path).labels if e.mask_path else np.zeros_like(image, dtype=np.uint8)
        rng = np.random.default_rng([seed, ordinal])
        values = _features_for_slice(image, mask, mode, patch_size, rng)
        fmap = FeatureMap(values=values,
                          slice_ref=f"{e.patient_id}/{e.series_id}/{e.slice_index}",
                          encoder_id=f"oracle:{mode}")
        fpath = out_dir / f"{e.patient_id}_{e.series_id}_{e.slice_index:04d}.fmap"
        write_fmap(fmap, fpath)
        entries.append(ManifestEntry(
            patient_id=e.patient_id, series_id=e.series_id, slice_index=e.slice_index,
            image_path=e.image_path, mask_path=e.mask_path,
            feature_path=str(fpath), class_label=e.class_label,
        ))
    return Manifest(entries=entries, dataset_name=manifest.dataset_name)


def shifted_copy(manifest: Manifest, out_dir: str | Path, shift: float) -> Manifest:
    """Brightness-shifted duplicate of an image set (clipped to [0,1])."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for e in manifest.entries:
        image = (load_image_png(e.image_path) + shift).clip(0.0, 1.0)
        path = out_dir / Path(e.image_path).name
        save_image_png(image, path)
        entries.append(ManifestEntry(
            patient_id=e.patient_id, series_id=e.series_id, slice_index=e.slice_index,
            image_path=str(path), mask_path=e.mask_path, class_label=e.class_label,
        ))
    return Manifest(entries=entries, dataset_name=f"{manifest.dataset_name}_shift{shift:g}")


def reference_dicom_volume(spec: SynthSpec) -> np.ndarray:
    """Float voxel buffer the synthetic DICOM series quantizes; (D,H,W)."""
    H, W = spec.image_size
    D = spec.slices_per_volume
    ys = np.arange(H)[:, None] / max(1, H - 1)
    xs = np.arange(W)[None, :] / max(1, W - 1)
    vol = np.empty((D, H, W), dtype=np.float64)
    for i in range(D):
        phase = (i + 1) / (D + 1)
        vol[i] = 200.0 * (np.sin(3.0 * np.pi * (ys + phase)) * np.cos(2.0 * np.pi * xs) + 1.2)
    return vol


def make_dicom_series(spec: SynthSpec, out_dir: str | Path,
                      drop_slice: int | None = None) -> Path:
    """Minimal valid single-frame DICOM series; drop_slice omits one file
    so the continuity check has something to reject."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vol = reference_dicom_volume(spec)
    vmin, vmax = float(vol.min()), float(vol.max())
    slope = (vmax - vmin) / 65535.0 if vmax > vmin else 1.0
    base_uid = f"1.2.826.0.1.3680043.10.1465.{spec.seed % 1000}"
    for i in range(vol.shape[0]):
        if i == drop_slice:
            continue
        pixels = np.floor((vol[i] - vmin) / slope + 0.5).clip(0, 65535).astype(np.uint16)
        write_dicom(out_dir / f"slice_{i:04d}.dcm", DicomSlice(
            patient_id="SYNTH-P0",
            study_uid=base_uid + ".1",
            series_uid=base_uid + ".1.1",
            sop_instance_uid=f"{base_uid}.1.1.{i + 1}",
            modality="MR",
            instance_number=i + 1,
            position=(0.0, 0.0, 2.0 * i),
            orientation=(1, 0, 0, 0, 1, 0),
            pixel_spacing=(0.8, 0.8),
            slice_thickness=2.0,
            rescale_slope=slope,
            rescale_intercept=vmin,
            pixels=pixels,
            attrs={"BodyPartExamined": "PHANTOM", "SeriesDescription": "synthetic"},
        ))
    return out_dir
