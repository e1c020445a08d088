"""Zero-shot segmentation: k-means over spatial features or raw pixels,
cluster-to-mask assignment, per-k scoring.

The clustering is bit-for-bit deterministic for a fixed (points, config):
k-means++ seeding draws from the portable xorshift64* stream (see rng.py),
points and centroids are held in float32, and all distance reductions run
in float64 in fixed index order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionError,
    EmptyGroundTruthError,
    EmptySelectionError,
    SizeError,
    ValidationError,
)
from .interchange import FeatureMap, LabelMask, Manifest, load_image_png, load_mask_png, read_fmap
from .metrics import dsc
from .rng import Xorshift64Star, derive_seed


@dataclass
class ZeroShotConfig:
    k: int = 32
    seed: int = 0
    max_iters: int = 100
    init: str = "kmeanspp"
    source: str = "features"            # features | raw_pixels
    assign: str = "best_overlap"        # best_overlap | majority
    raw_coords: bool = True             # include (y/H, x/W) in the raw-pixel baseline

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.init != "kmeanspp":
            raise ValueError(f"unknown init {self.init!r}")
        if self.source not in ("features", "raw_pixels"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.assign not in ("best_overlap", "majority"):
            raise ValueError(f"unknown assignment rule {self.assign!r}")


@dataclass
class Clustering:
    assignments: np.ndarray      # (n,) uint16
    centroids: np.ndarray        # (k, c) float32
    inertia: float
    iters_run: int
    inertia_history: list[float] = field(default_factory=list)


def _sq_dists(points64: np.ndarray, centroids64: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, float64."""
    # ||p - c||^2 expanded; clamped at 0 against rounding.
    d = (
        (points64 * points64).sum(axis=1)[:, None]
        - 2.0 * points64 @ centroids64.T
        + (centroids64 * centroids64).sum(axis=1)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeanspp_init(points64: np.ndarray, k: int, rng: Xorshift64Star) -> np.ndarray:
    n = points64.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.randint(n)
    best = ((points64 - points64[chosen[0]]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = float(best.sum())
        if total <= 0.0:
            idx = rng.randint(n)
        else:
            r = rng.uniform() * total
            idx = int(np.searchsorted(np.cumsum(best), r, side="right"))
            idx = min(idx, n - 1)
        chosen[i] = idx
        best = np.minimum(best, ((points64 - points64[idx]) ** 2).sum(axis=1))
    return chosen


def kmeans(points: np.ndarray, cfg: ZeroShotConfig) -> Clustering:
    """Lloyd iterations from k-means++ seeding until assignment fixpoint.

    Empty clusters are re-seeded to the point currently farthest from its
    assigned centroid. Ties in the assignment step go to the lowest
    centroid index.
    """
    points = np.ascontiguousarray(points, dtype=np.float32)
    if points.ndim != 2:
        raise DimensionError("points must be (n, c)")
    if not np.isfinite(points).all():
        raise ValidationError("non-finite point")
    n = points.shape[0]
    if n < cfg.k:
        raise SizeError(f"{n} points < k={cfg.k}")
    p64 = points.astype(np.float64)
    rng = Xorshift64Star(cfg.seed)
    centroids = points[_kmeanspp_init(p64, cfg.k, rng)].copy()

    assignments = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    iters = 0
    for _ in range(cfg.max_iters):
        iters += 1
        d = _sq_dists(p64, centroids.astype(np.float64))
        new_assign = d.argmin(axis=1)
        history.append(float(d[np.arange(n), new_assign].sum()))
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        counts = np.bincount(assignments, minlength=cfg.k)
        sums = np.zeros((cfg.k, points.shape[1]), dtype=np.float64)
        np.add.at(sums, assignments, p64)
        nonempty = counts > 0
        centroids[nonempty] = (sums[nonempty] / counts[nonempty, None]).astype(np.float32)
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            own = d[np.arange(n), assignments].copy()
            for cid in empty:
                far = int(own.argmax())
                centroids[cid] = points[far]
                own[far] = -1.0  # keep a second empty cluster from stealing the same point
    final_d = _sq_dists(p64, centroids.astype(np.float64))
    assignments = final_d.argmin(axis=1)
    inertia = float(final_d[np.arange(n), assignments].sum())
    return Clustering(
        assignments=assignments.astype(np.uint16),
        centroids=centroids,
        inertia=inertia,
        iters_run=iters,
        inertia_history=history,
    )


def features_to_points(fmap: FeatureMap) -> np.ndarray:
    """Row-major flattening of the patch grid into (grid_h*grid_w, channels)."""
    return fmap.values.reshape(-1, fmap.channels)


def point_index_to_grid(idx: int, grid_w: int) -> tuple[int, int]:
    """Inverse of the row-major flattening."""
    return divmod(idx, grid_w)


def labels_to_mask(assignments: np.ndarray, grid: tuple[int, int],
                   out_dims: tuple[int, int]) -> LabelMask:
    """Nearest-neighbor upsampling of the patch-label grid to pixel resolution."""
    h, w = grid
    H, W = out_dims
    assignments = np.asarray(assignments)
    if assignments.size != h * w:
        raise DimensionError(f"{assignments.size} labels cannot fill a {h}x{w} grid")
    if H < h or W < w:
        raise DimensionError("output must be at least as large as the patch grid")
    grid_labels = assignments.reshape(h, w)
    rows = (np.arange(H, dtype=np.int64) * h) // H
    cols = (np.arange(W, dtype=np.int64) * w) // W
    return LabelMask(labels=grid_labels[np.ix_(rows, cols)].astype(np.uint16))


def best_overlap_cluster(cluster_mask: np.ndarray, n_clusters: int,
                         gt: np.ndarray) -> tuple[int, np.ndarray]:
    """Cluster whose binary mask maximizes DSC against gt; ties -> lowest id."""
    gt = np.asarray(gt)
    if not gt.any():
        raise EmptyGroundTruthError("ground truth is empty")
    cluster_mask = np.asarray(cluster_mask)
    if cluster_mask.shape != gt.shape:
        raise DimensionError("cluster mask / gt shape mismatch")
    best_id, best_dsc, best_bin = -1, -1.0, None
    for cid in range(n_clusters):
        binary = (cluster_mask == cid).astype(np.uint8)
        score = dsc(binary, (gt > 0).astype(np.uint8))
        if score > best_dsc:
            best_id, best_dsc, best_bin = cid, score, binary
    return best_id, best_bin


def majority_vote_mask(cluster_mask: np.ndarray, n_clusters: int,
                       gt: np.ndarray) -> np.ndarray:
    """Binary prediction from mapping each cluster to its majority gt label.

    A cluster maps to foreground only when strictly more than half of its
    pixels are foreground in the ground truth.
    """
    cluster_mask = np.asarray(cluster_mask)
    g = (np.asarray(gt) > 0)
    pred = np.zeros_like(g, dtype=np.uint8)
    for cid in range(n_clusters):
        members = cluster_mask == cid
        total = int(members.sum())
        if total and int((members & g).sum()) * 2 > total:
            pred[members] = 1
    return pred


def select_single_object(gt: np.ndarray) -> bool:
    """True iff gt has exactly one 4-connected foreground component."""
    g = (np.asarray(gt) > 0).astype(np.uint8)
    if g.ndim != 2:
        raise DimensionError("single-object test expects a 2D mask")
    _, n = ndimage.label(g)  # default structure is 4-connectivity in 2D
    return n == 1


def raw_pixel_points(image01: np.ndarray, include_coords: bool = True) -> np.ndarray:
    """Per-pixel feature rows for the raw-pixel baseline: intensity plus,
    optionally, normalized (y/H, x/W) coordinates."""
    img = np.asarray(image01, dtype=np.float32)
    H, W = img.shape
    if not include_coords:
        return img.reshape(-1, 1)
    ys, xs = np.meshgrid(np.arange(H, dtype=np.float32) / H,
                         np.arange(W, dtype=np.float32) / W, indexing="ij")
    return np.stack([img, ys, xs], axis=-1).reshape(-1, 3)


def _slice_points(entry, cfg: ZeroShotConfig):
    """Points + patch grid for one manifest entry under the configured source."""
    if cfg.source == "features":
        fmap = read_fmap(entry.feature_path)
        return features_to_points(fmap), (fmap.grid_h, fmap.grid_w)
    img = load_image_png(entry.image_path)
    return raw_pixel_points(img, include_coords=cfg.raw_coords), img.shape


def _score_slice(entry, gt: np.ndarray, ordinal: int, k: int,
                 cfg: ZeroShotConfig) -> float | None:
    points, grid = _slice_points(entry, cfg)
    if points.shape[0] < k:
        return None
    slice_cfg = ZeroShotConfig(
        k=k, seed=derive_seed(cfg.seed, ordinal), max_iters=cfg.max_iters,
        init=cfg.init, source=cfg.source, assign=cfg.assign,
        raw_coords=cfg.raw_coords,
    )
    clustering = kmeans(points, slice_cfg)
    mask = labels_to_mask(clustering.assignments, grid, gt.shape).labels
    if cfg.assign == "best_overlap":
        _, pred = best_overlap_cluster(mask, k, gt)
    else:
        pred = majority_vote_mask(mask, k, gt)
    return dsc(pred, (gt > 0).astype(np.uint8))


def zeroshot_eval(manifest: Manifest, ks: list[int], cfg: ZeroShotConfig,
                  jobs: int = 1) -> list[dict]:
    """Mean 2D DSC per k over single-object slices.

    Each slice gets its own deterministic child seed, so results do not
    depend on evaluation order or on how many workers score slices.
    """
    eligible = []
    for entry in manifest.entries:
        if entry.mask_path is None:
            continue
        gt = load_mask_png(entry.mask_path).labels
        if gt.any() and select_single_object(gt):
            eligible.append((entry, gt))
    if not eligible:
        raise EmptySelectionError("no single-object slices with non-empty masks")

    rows = []
    for k in ks:
        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                raw = list(pool.map(
                    lambda item: _score_slice(item[1][0], item[1][1], item[0], k, cfg),
                    enumerate(eligible)))
        else:
            raw = [_score_slice(entry, gt, ordinal, k, cfg)
                   for ordinal, (entry, gt) in enumerate(eligible)]
        scores = [s for s in raw if s is not None]
        if not scores:
            raise EmptySelectionError(f"no slice has enough points for k={k}")
        rows.append({"k": k, "mean_dsc2d": float(np.mean(scores)), "n_slices": len(scores)})
    return rows
