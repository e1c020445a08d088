"""Segmentation and classification metrics: 2D/3D DSC, 3D NSD, accuracy, confusion.

Conventions (documented defaults, flagged in reports):
  * DSC of two empty masks is 1.0; exactly one empty gives 0.0.
  * The slice-wise DSC mean runs over slices whose ground truth is non-empty.
  * NSD surfaces use 6-connectivity with the array boundary counted as
    background; default tolerance is 1.0 voxel, optionally scaled by spacing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimensionError, EmptyGroundTruthError, LabelError


@dataclass
class NsdConfig:
    tolerance_vox: float = 1.0

    def __post_init__(self):
        if self.tolerance_vox < 0:
            raise ValueError("tolerance must be non-negative")


def _as_binary(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if not np.isin(arr, (0, 1)).all():
        raise LabelError(f"{name} is not a binary mask")
    return arr.astype(bool)


def dsc(pred: np.ndarray, gt: np.ndarray) -> float:
    """Dice coefficient 2|P∩G| / (|P|+|G|); both-empty convention 1.0."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {gt.shape}")
    p = _as_binary(pred, "pred")
    g = _as_binary(gt, "gt")
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def dsc2d_mean(pred_vol: np.ndarray, gt_vol: np.ndarray) -> float:
    """Mean per-slice DSC over slices with non-empty ground truth (axis 0)."""
    pred_vol = np.asarray(pred_vol)
    gt_vol = np.asarray(gt_vol)
    if pred_vol.shape != gt_vol.shape:
        raise DimensionError(f"shape mismatch {pred_vol.shape} vs {gt_vol.shape}")
    scores = [dsc(pred_vol[i], gt_vol[i]) for i in range(gt_vol.shape[0]) if gt_vol[i].any()]
    if not scores:
        raise EmptyGroundTruthError("no slice has non-empty ground truth")
    return float(np.mean(scores))


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Coordinates (N,3) of foreground voxels with a 6-neighbor background
    voxel or touching the array boundary, in ascending C order."""
    m = _as_binary(np.asarray(mask), "mask")
    if m.ndim != 3:
        raise DimensionError("surface extraction expects a 3D mask")
    return np.argwhere(_surface_mask(m))


def _surface_mask(m: np.ndarray) -> np.ndarray:
    padded = np.pad(m, 1, constant_values=False)
    interior = np.ones_like(m, dtype=bool)
    for axis in range(3):
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        interior &= padded[tuple(lo)] & padded[tuple(hi)]
    return m & ~interior


def nsd(pred: np.ndarray, gt: np.ndarray, cfg: NsdConfig | None = None,
        spacing: tuple[float, float, float] | None = None) -> float:
    """Normalized surface dice at tolerance cfg.tolerance_vox.

    Fraction of surface voxels of each mask lying within the tolerance of the
    other mask's surface (exact Euclidean distance transform). Both masks
    empty -> 1.0; exactly one empty -> 0.0.
    """
    cfg = cfg or NsdConfig()
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {gt.shape}")
    p = _as_binary(pred, "pred")
    g = _as_binary(gt, "gt")
    if p.ndim != 3:
        raise DimensionError("NSD expects 3D masks")
    if not p.any() and not g.any():
        return 1.0
    if not p.any() or not g.any():
        return 0.0
    sp = _surface_mask(p)
    sg = _surface_mask(g)
    # Distance from every voxel to the nearest surface voxel of the other set.
    dist_to_g = ndimage.distance_transform_edt(~sg, sampling=spacing)
    dist_to_p = ndimage.distance_transform_edt(~sp, sampling=spacing)
    tau = cfg.tolerance_vox
    hits = int((dist_to_g[sp] <= tau).sum()) + int((dist_to_p[sg] <= tau).sum())
    return hits / (int(sp.sum()) + int(sg.sum()))


def accuracy(preds: np.ndarray, truth: np.ndarray) -> float:
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape:
        raise DimensionError("prediction/truth length mismatch")
    return float((preds == truth).mean())


def confusion(preds: np.ndarray, truth: np.ndarray, n_classes: int) -> np.ndarray:
    """confusion[i][j] = count(truth == i and pred == j)."""
    preds = np.asarray(preds).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if preds.shape != truth.shape:
        raise DimensionError("prediction/truth length mismatch")
    for name, arr in (("preds", preds), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise LabelError(f"{name} labels outside [0, {n_classes})")
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(mat, (truth, preds), 1)
    return mat


@dataclass
class CaseMetrics:
    case_id: str
    dsc2d_mean: float
    dsc3d: float
    nsd3d: float


@dataclass
class MetricReport:
    """Per-case segmentation metrics with recomputable mean/std aggregates."""

    per_case: list[CaseMetrics] = field(default_factory=list)
    nsd_tolerance: float = 1.0

    def aggregate(self) -> dict:
        out = {}
        for key in ("dsc2d_mean", "dsc3d", "nsd3d"):
            vals = np.array([getattr(c, key) for c in self.per_case], dtype=np.float64)
            std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            out[key] = {"mean": float(vals.mean()) if vals.size else 0.0, "std": std}
        return out

    def to_json(self) -> dict:
        return {
            "nsd_tolerance": self.nsd_tolerance,
            "conventions": "empty-empty DSC/NSD = 1.0; one-side-empty = 0.0; "
                           "2D DSC averaged over GT-nonempty slices",
            "per_case": [vars(c) for c in self.per_case],
            "aggregate": self.aggregate(),
        }


def evaluate_case(case_id: str, pred_vol: np.ndarray, gt_vol: np.ndarray,
                  cfg: NsdConfig | None = None,
                  spacing: tuple[float, float, float] | None = None) -> CaseMetrics:
    cfg = cfg or NsdConfig()
    return CaseMetrics(
        case_id=case_id,
        dsc2d_mean=dsc2d_mean(pred_vol, gt_vol),
        dsc3d=dsc(pred_vol, gt_vol),
        nsd3d=nsd(pred_vol, gt_vol, cfg, spacing=spacing),
    )
