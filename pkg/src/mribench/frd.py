"""Radiomic feature extraction, Gaussian population fits, and the Frechet
distance between fits (reported squared, FID convention).

The 34-entry feature vector is a fixed, documented stand-in set; it is
frozen by golden vectors in the test suite and isolated behind
FEATURE_NAMES so it can be swapped wholesale.

  first-order (16)  computed on the raw intensities in [0,1]:
      mean, variance (population), skewness, kurtosis (Pearson, m4/m2^2),
      min, max, p10, p25, p50, p75, p90, interquartile range,
      mean absolute deviation, Shannon entropy (log2, n_bins histogram
      over [0,1]), uniformity (sum p^2), root-mean-square.
      Degenerate conventions: constant image -> skewness = kurtosis = 0,
      entropy = 0, uniformity = 1.
  glcm (6)          on the n_bins-quantized image, symmetric normalized
      co-occurrence averaged over offsets (0,1),(1,0),(1,1),(1,-1):
      contrast, dissimilarity, homogeneity 1/(1+(i-j)^2), angular second
      moment, correlation (0 when either marginal deviation vanishes),
      entropy (log2).
  spatial (12)      intensity-weighted centroid (y,x in [0,1]); second
      central moments m_yy, m_xx, m_yx normalized by (dim-1)^2; gradient-
      magnitude mean and population variance (np.gradient); fraction of
      pixels strictly above the Otsu threshold (256-bin); 4-bin radial
      mean-intensity profile around the image center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericDomainError, SizeError, ValidationError
from .interchange import Manifest, load_image_png

GLCM_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))

FIRST_ORDER_NAMES = [
    "fo_mean", "fo_variance", "fo_skewness", "fo_kurtosis", "fo_min", "fo_max",
    "fo_p10", "fo_p25", "fo_p50", "fo_p75", "fo_p90", "fo_iqr",
    "fo_mean_abs_dev", "fo_entropy", "fo_uniformity", "fo_rms",
]
GLCM_NAMES = [
    "glcm_contrast", "glcm_dissimilarity", "glcm_homogeneity",
    "glcm_asm", "glcm_correlation", "glcm_entropy",
]
SPATIAL_NAMES = [
    "sp_centroid_y", "sp_centroid_x", "sp_moment_yy", "sp_moment_xx", "sp_moment_yx",
    "sp_grad_mean", "sp_grad_var", "sp_otsu_fraction",
    "sp_radial_0", "sp_radial_1", "sp_radial_2", "sp_radial_3",
]
FEATURE_NAMES = FIRST_ORDER_NAMES + GLCM_NAMES + SPATIAL_NAMES


@dataclass
class FrdConfig:
    n_bins: int = 32
    eps: float = 1e-6
    standardize: bool = True
    glcm_offsets: tuple = GLCM_OFFSETS

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass
class GaussianSummary:
    mu: np.ndarray
    sigma: np.ndarray
    n: int
    eps: float


def _first_order(x: np.ndarray, n_bins: int) -> list[float]:
    mean = float(x.mean())
    var = float(x.var())
    centered = x - mean
    if var > 0:
        m3 = float((centered**3).mean())
        m4 = float((centered**4).mean())
        skew = m3 / var**1.5
        kurt = m4 / var**2
    else:
        skew, kurt = 0.0, 0.0
    p10, p25, p50, p75, p90 = (float(v) for v in np.percentile(x, [10, 25, 50, 75, 90]))
    hist, _ = np.histogram(x, bins=n_bins, range=(0.0, 1.0))
    p = hist / hist.sum()
    nz = p[p > 0]
    entropy = float(-(nz * np.log2(nz)).sum())
    uniformity = float((p * p).sum())
    return [
        mean, var, skew, kurt, float(x.min()), float(x.max()),
        p10, p25, p50, p75, p90, p75 - p25,
        float(np.abs(centered).mean()), entropy, uniformity,
        float(np.sqrt((x * x).mean())),
    ]


def quantize(image: np.ndarray, n_bins: int) -> np.ndarray:
    """Intensity [0,1] -> integer levels [0, n_bins)."""
    return np.minimum((image * n_bins).astype(np.int64), n_bins - 1)


def cooccurrence(levels: np.ndarray, offset: tuple[int, int], n_bins: int) -> np.ndarray:
    """Symmetric, normalized co-occurrence matrix for one offset."""
    dy, dx = offset
    H, W = levels.shape
    ys = slice(max(0, -dy), H - max(0, dy))
    xs = slice(max(0, -dx), W - max(0, dx))
    ys2 = slice(max(0, dy), H - max(0, -dy))
    xs2 = slice(max(0, dx), W - max(0, -dx))
    a = levels[ys, xs].ravel()
    b = levels[ys2, xs2].ravel()
    mat = np.zeros((n_bins, n_bins), dtype=np.float64)
    np.add.at(mat, (a, b), 1.0)
    mat = mat + mat.T
    return mat / mat.sum()


def _glcm_features(levels: np.ndarray, offsets, n_bins: int) -> list[float]:
    i = np.arange(n_bins, dtype=np.float64)[:, None]
    j = np.arange(n_bins, dtype=np.float64)[None, :]
    acc = np.zeros(6)
    for off in offsets:
        P = cooccurrence(levels, off, n_bins)
        contrast = float((P * (i - j) ** 2).sum())
        dissim = float((P * np.abs(i - j)).sum())
        homog = float((P / (1.0 + (i - j) ** 2)).sum())
        asm = float((P * P).sum())
        pi = P.sum(axis=1)
        mu_i = float((pi * i.ravel()).sum())
        var_i = float((pi * (i.ravel() - mu_i) ** 2).sum())
        if var_i > 0:
            corr = float((P * (i - mu_i) * (j - mu_i)).sum()) / var_i
        else:
            corr = 0.0
        nz = P[P > 0]
        ent = float(-(nz * np.log2(nz)).sum())
        acc += np.array([contrast, dissim, homog, asm, corr, ent])
    acc /= len(offsets)
    return [float(v) for v in acc]


def otsu_threshold(x: np.ndarray, n_bins: int = 256) -> float:
    """Histogram threshold maximizing between-class variance over [0,1]."""
    hist, edges = np.histogram(x, bins=n_bins, range=(0.0, 1.0))
    w = hist / hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(w)
    w1 = 1.0 - w0
    m_cum = np.cumsum(w * centers)
    m_total = m_cum[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = m_cum / w0
        mu1 = (m_total - m_cum) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between = np.nan_to_num(between)
    return float(centers[int(between.argmax())])


def _spatial(image: np.ndarray) -> list[float]:
    H, W = image.shape
    total = float(image.sum())
    ys = np.arange(H, dtype=np.float64)[:, None]
    xs = np.arange(W, dtype=np.float64)[None, :]
    if total > 0:
        cy = float((image * ys).sum()) / total
        cx = float((image * xs).sum()) / total
        myy = float((image * (ys - cy) ** 2).sum()) / total / (H - 1) ** 2
        mxx = float((image * (xs - cx) ** 2).sum()) / total / (W - 1) ** 2
        myx = float((image * (ys - cy) * (xs - cx)).sum()) / total / ((H - 1) * (W - 1))
        cy /= (H - 1)
        cx /= (W - 1)
    else:
        cy, cx, myy, mxx, myx = 0.5, 0.5, 0.0, 0.0, 0.0
    gy, gx = np.gradient(image)
    gm = np.sqrt(gy * gy + gx * gx)
    grad_mean = float(gm.mean())
    grad_var = float(gm.var())
    if float(image.var()) > 0:
        frac = float((image > otsu_threshold(image)).mean())
    else:
        frac = 0.0
    r = np.sqrt(((ys - (H - 1) / 2.0) ** 2) + ((xs - (W - 1) / 2.0) ** 2))
    rmax = float(r.max())
    rbin = np.minimum((r / rmax * 4).astype(np.int64), 3)
    radial = []
    for b in range(4):
        members = rbin == b
        radial.append(float(image[members].mean()) if members.any() else 0.0)
    return [cy, cx, myy, mxx, myx, grad_mean, grad_var, frac] + radial


def radiomic_features(image: np.ndarray, cfg: FrdConfig | None = None) -> np.ndarray:
    """34-entry feature vector of one 2D image normalized to [0,1]."""
    cfg = cfg or FrdConfig()
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] < 2 or image.shape[1] < 2:
        raise DimensionError("image must be 2D with H,W >= 2")
    if not np.isfinite(image).all():
        raise ValidationError("image contains non-finite values")
    if image.min() < -1e-9 or image.max() > 1.0 + 1e-9:
        raise ValidationError("image must be normalized to [0,1]")
    image = image.clip(0.0, 1.0)
    flat = image.ravel()
    vec = (
        _first_order(flat, cfg.n_bins)
        + _glcm_features(quantize(image, cfg.n_bins), cfg.glcm_offsets, cfg.n_bins)
        + _spatial(image)
    )
    out = np.asarray(vec, dtype=np.float64)
    assert out.shape == (len(FEATURE_NAMES),)
    return out.astype(np.float32)


def reference_stats(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std of the standardization reference population.

    Features with zero spread get std 1.0 so z-scoring is a no-op for them.
    """
    v = np.asarray(vectors, dtype=np.float64)
    mean = v.mean(axis=0)
    std = v.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def fit_gaussian(vectors, cfg: FrdConfig | None = None,
                 ref: tuple[np.ndarray, np.ndarray] | None = None) -> GaussianSummary:
    """Sample mean and eps-regularized unbiased covariance of feature vectors."""
    cfg = cfg or FrdConfig()
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 2:
        raise SizeError("need at least 2 feature vectors")
    if cfg.standardize:
        if ref is None:
            ref = reference_stats(v)
        mean, std = ref
        v = (v - mean) / std
    mu = v.mean(axis=0)
    sigma = np.cov(v, rowvar=False, ddof=1) + cfg.eps * np.eye(v.shape[1])
    return GaussianSummary(mu=mu, sigma=sigma, n=v.shape[0], eps=cfg.eps)


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-1e-8, 0) are clipped to zero; anything lower raises.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError("matrix must be square")
    if np.abs(m - m.T).max() > 1e-8:
        raise NumericDomainError("matrix not symmetric within 1e-8")
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    if w.min() < -1e-8:
        raise NumericDomainError(f"matrix indefinite: eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.T
    return (root + root.T) / 2.0


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """Squared Frechet distance between two Gaussian summaries.

    d^2 = ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
    """
    if a.mu.shape != b.mu.shape:
        raise DimensionError("feature dimensionality mismatch")
    root_a = matrix_sqrt_psd(a.sigma)
    inner = root_a @ b.sigma @ root_a
    cross = matrix_sqrt_psd((inner + inner.T) / 2.0)
    diff = a.mu - b.mu
    d2 = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * np.trace(cross))
    if d2 < -1e-6:
        raise NumericDomainError(f"squared distance {d2:.3e} below the clipping floor")
    return max(d2, 0.0)


def _load_for_features(path: str, resize: int | None) -> np.ndarray:
    image = load_image_png(path)
    if resize is not None and image.shape != (resize, resize):
        from PIL import Image

        img = Image.fromarray((image * 255).astype(np.uint8), mode="L")
        image = np.asarray(img.resize((resize, resize), Image.BILINEAR),
                           dtype=np.float32) / 255.0
    return image


def extract_set(manifest: Manifest, cfg: FrdConfig, resize: int | None = None,
                jobs: int = 1) -> np.ndarray:
    """Radiomic vectors for every manifest image, in manifest order.

    Extraction parallelizes across images; the stacking order stays fixed.
    """
    if len(manifest.entries) < 2:
        raise SizeError("need at least 2 images per set")
    paths = [e.image_path for e in manifest.entries]
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            vectors = list(pool.map(
                lambda p: radiomic_features(_load_for_features(p, resize), cfg), paths))
    else:
        vectors = [radiomic_features(_load_for_features(p, resize), cfg) for p in paths]
    return np.stack(vectors)


def frd_between_sets(set_a: Manifest, set_b: Manifest, cfg: FrdConfig | None = None,
                     resize: int | None = None, jobs: int = 1) -> float:
    """Frechet radiomic distance with set_a as the standardization reference."""
    cfg = cfg or FrdConfig()
    va = extract_set(set_a, cfg, resize=resize, jobs=jobs)
    vb = extract_set(set_b, cfg, resize=resize, jobs=jobs)
    ref = reference_stats(va) if cfg.standardize else None
    ga = fit_gaussian(va, cfg, ref=ref)
    gb = fit_gaussian(vb, cfg, ref=ref)
    return frechet_distance(ga, gb)
