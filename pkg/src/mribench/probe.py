"""Linear probing: pool patch features, train a multinomial logistic
regression with Adam + L2, report the best validation accuracy.

Training is deterministic: weights start at zero, the shuffling stream is
fixed by the seed, and all arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, DivergenceError, SizeError, ValidationError
from .interchange import FeatureMap, Manifest, read_fmap
from .metrics import confusion


@dataclass
class ProbeConfig:
    lr: float = 1e-4
    epochs: int = 100
    l2: float = 1e-4
    batch: int = 64
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass
class ProbeResult:
    best_val_accuracy: float
    best_epoch: int
    history: list[tuple[float, float]]   # (train_loss, val_accuracy) per epoch
    confusion_at_best: np.ndarray
    label_names: list[str] = field(default_factory=list)
    weights: np.ndarray | None = None    # final W, for norm diagnostics
    bias: np.ndarray | None = None


def pool_features(fmap: FeatureMap) -> np.ndarray:
    """Per-channel mean over the patch grid (2D average pooling)."""
    return fmap.values.mean(axis=(0, 1)).astype(np.float64)


def softmax_cross_entropy(W: np.ndarray, b: np.ndarray, X: np.ndarray,
                          y: np.ndarray, l2: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss (mean CE + l2*||W||_F^2) and gradients wrt W and b."""
    logits = X @ W.T + b
    logits -= logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    probs = expl / expl.sum(axis=1, keepdims=True)
    n = X.shape[0]
    ce = -np.log(probs[np.arange(n), y]).mean()
    loss = float(ce + l2 * (W * W).sum())
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    gW = delta.T @ X / n + 2.0 * l2 * W
    gb = delta.mean(axis=0)
    return loss, gW, gb


def predict(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    return (X @ W.T + b).argmax(axis=1)


def train_linear(X_train: np.ndarray, y_train: np.ndarray,
                 X_val: np.ndarray, y_val: np.ndarray,
                 cfg: ProbeConfig) -> ProbeResult:
    """Adam-trained multinomial logistic regression from zero init.

    Tracks validation accuracy each epoch; the reported best is the maximum,
    attributed to the first epoch attaining it.
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if not (np.isfinite(X_train).all() and np.isfinite(X_val).all()):
        raise ValidationError("non-finite features")
    n_classes = int(max(y_train.max(), y_val.max())) + 1
    missing = sorted(set(range(n_classes)) - set(np.unique(y_train).tolist()))
    if missing:
        raise CoverageError(f"classes {missing} missing from the training set")

    n, d = X_train.shape
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    mW = np.zeros_like(W); vW = np.zeros_like(W)
    mb = np.zeros_like(b); vb = np.zeros_like(b)
    t = 0
    rng = np.random.default_rng(cfg.seed)

    history: list[tuple[float, float]] = []
    best_acc, best_epoch = -1.0, -1
    best_conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch):
            idx = order[start:start + cfg.batch]
            loss, gW, gb = softmax_cross_entropy(W, b, X_train[idx], y_train[idx], cfg.l2)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            batch_losses.append(loss)
            t += 1
            for g, m, v, p in ((gW, mW, vW, W), (gb, mb, vb, b)):
                m *= cfg.beta1; m += (1 - cfg.beta1) * g
                v *= cfg.beta2; v += (1 - cfg.beta2) * g * g
                mhat = m / (1 - cfg.beta1**t)
                vhat = v / (1 - cfg.beta2**t)
                p -= cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps_adam)
        val_pred = predict(W, b, X_val)
        val_acc = float((val_pred == y_val).mean())
        history.append((float(np.mean(batch_losses)), val_acc))
        if val_acc > best_acc:
            best_acc, best_epoch = val_acc, epoch
            best_conf = confusion(val_pred, y_val, n_classes)
    return ProbeResult(
        best_val_accuracy=best_acc,
        best_epoch=best_epoch,
        history=history,
        confusion_at_best=best_conf,
        weights=W,
        bias=b,
    )


def adam_step_reference(g: np.ndarray, m: np.ndarray, v: np.ndarray, t: int,
                        lr: float, beta1: float, beta2: float, eps: float):
    """One Adam update in closed form; the trainer must match this exactly."""
    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g * g
    mhat = m / (1 - beta1**t)
    vhat = v / (1 - beta2**t)
    return lr * mhat / (np.sqrt(vhat) + eps), m, v


def pooled_dataset(manifest: Manifest) -> tuple[np.ndarray, np.ndarray, list, list[str]]:
    """Pooled feature matrix, integer labels, entry keys, and label names.

    Class names map to ids by sorted order, deterministically.
    """
    feats, labels, keys = [], [], []
    names = sorted({e.class_label for e in manifest.entries if e.class_label is not None})
    name_to_id = {c: i for i, c in enumerate(names)}
    for e in manifest.entries:
        if e.class_label is None or e.feature_path is None:
            continue
        feats.append(pool_features(read_fmap(e.feature_path)))
        labels.append(name_to_id[e.class_label])
        keys.append(e.key)
    if not feats:
        raise SizeError("manifest has no entries with both features and class labels")
    return np.stack(feats), np.asarray(labels, dtype=np.int64), keys, names


def probe_task(manifest: Manifest, split, cfg: ProbeConfig) -> ProbeResult:
    """Pool features, split by the patient-disjoint plan, train, report."""
    X, y, keys, names = pooled_dataset(manifest)
    train_keys = set(split.train)
    val_keys = set(split.val)
    tr = [i for i, k in enumerate(keys) if k in train_keys]
    va = [i for i, k in enumerate(keys) if k in val_keys]
    if not tr or not va:
        raise SizeError("split leaves train or val empty")
    tr_patients = {keys[i][0] for i in tr}
    va_patients = {keys[i][0] for i in va}
    if tr_patients & va_patients:
        raise ValidationError("split is not patient-disjoint")
    result = train_linear(X[tr], y[tr], X[va], y[va], cfg)
    result.label_names = names
    return result
