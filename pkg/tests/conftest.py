import numpy as np


def golden_images() -> dict[str, np.ndarray]:
    """Five fixed test images backing the frozen radiomic feature vectors."""
    H = W = 32
    ys = np.arange(H)[:, None] / (H - 1)
    xs = np.arange(W)[None, :] / (W - 1)
    checker = ((np.arange(H)[:, None] + np.arange(W)[None, :]) % 2).astype(np.float64)
    ellipse = ((((ys - 0.5) / 0.3) ** 2 + ((xs - 0.45) / 0.35) ** 2) <= 1.0) * 0.8 + 0.1
    rng = np.random.default_rng(20240601)
    noise = rng.random((H, W))
    return {
        "constant": np.full((H, W), 0.5),
        "ramp": (ys + xs) / 2.0,
        "checker": checker,
        "ellipse": ellipse,
        "noise": noise,
    }
