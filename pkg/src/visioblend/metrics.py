"""Distribution-level and patch-level image distances over pluggable feature
embedders.

The pretrained networks behind the usual FID/LPIPS numbers are out of scope;
the statistics (Fréchet distance, patch distance) are implemented exactly and
any embedder satisfying the small protocol below can be slotted in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .images import bilinear_resize, ensure_image, ensure_same_shape

PATCH = 8
THUMB = 16
EIG_CLAMP = 1e-10


class Embedder(Protocol):
    identifier: str
    dim: int

    def __call__(self, image: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class FeatureStats:
    mu: np.ndarray     # (d,)
    sigma: np.ndarray  # (d, d), symmetric
    n: int

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.ndim != 1:
            raise ValueError(f"mu must be 1-D, got shape {mu.shape}")
        d = mu.shape[0]
        if sigma.shape != (d, d):
            raise ValueError(f"sigma must be ({d}, {d}), got {sigma.shape}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("non-finite feature statistics")
        if np.max(np.abs(sigma - sigma.T)) > 1e-8:
            raise ValueError("sigma must be symmetric within 1e-8")
        if self.n < 2:
            raise ValueError(f"need n >= 2 samples, got {self.n}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


class RandomProjectionEmbedder:
    """Thumbnail-and-project feature map: 16x16 bilinear thumbnail, flattened
    to 768 values, multiplied by a seeded Gaussian (d, 768) matrix scaled by
    1/sqrt(768).  Linear in the image, deterministic per (seed, d).
    """

    def __init__(self, seed: int, d: int):
        if d < 1:
            raise ValueError(f"d must be >= 1, got {d}")
        self.seed = int(seed)
        self.dim = int(d)
        self.identifier = f"randproj-seed{self.seed}-d{self.dim}"
        n_in = THUMB * THUMB * 3
        rng = np.random.default_rng(self.seed)
        self._w = rng.standard_normal((self.dim, n_in)) / np.sqrt(n_in)

    def __call__(self, image: np.ndarray) -> np.ndarray:
        ensure_image(image, channels=3, name="image")
        thumb = bilinear_resize(image, THUMB, THUMB).astype(np.float64)
        return self._w @ thumb.ravel()


class FlattenEmbedder:
    """Identity features: the raw pixels of a fixed-shape buffer."""

    def __init__(self, h: int, w: int, c: int = 3):
        self.shape = (h, w, c)
        self.dim = h * w * c
        self.identifier = f"flatten-{h}x{w}x{c}"

    def __call__(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image)
        if img.shape != self.shape:
            raise ValueError(f"expected shape {self.shape}, got {img.shape}")
        return img.astype(np.float64).ravel()


def default_embedder(seed: int = 0, d: int = 64) -> RandomProjectionEmbedder:
    return RandomProjectionEmbedder(seed, d)


def feature_stats(images: Sequence[np.ndarray], emb: Embedder) -> FeatureStats:
    """Sample mean and unbiased covariance of the image embeddings."""
    if len(images) < 2:
        raise ValueError(f"need at least 2 images, got {len(images)}")
    feats = np.stack([np.asarray(emb(img), dtype=np.float64) for img in images])
    mu = feats.mean(axis=0)
    centered = feats - mu
    sigma = centered.T @ centered / (len(images) - 1)
    sigma = (sigma + sigma.T) / 2.0
    return FeatureStats(mu=mu, sigma=sigma, n=len(images))


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(sigma_a + sigma_b - 2 (sigma_a sigma_b)^{1/2}).

    sigma_a sigma_b is not symmetric, but it shares its (real, nonnegative)
    eigenvalues with root_a sigma_b root_a, which is.  Averaging the product
    with its transpose instead would shift the spectrum for non-commuting
    pairs, so the square-root trace comes from eigendecomposing the congruent
    form.  Eigenvalues below 1e-10 are clamped to zero so near-singular
    covariances from small samples stay stable; the result is clamped at 0.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mu - b.mu
    wa, ua = np.linalg.eigh(a.sigma)
    wa = np.where(wa < EIG_CLAMP, 0.0, wa)
    root_a = (ua * np.sqrt(wa)) @ ua.T
    m = root_a @ b.sigma @ root_a
    m = (m + m.T) / 2.0  # rounding can leave ~1e-17 asymmetry
    eigvals = np.linalg.eigvalsh(m)
    eigvals = np.where(eigvals < EIG_CLAMP, 0.0, eigvals)
    covmean_trace = float(np.sum(np.sqrt(eigvals)))
    dist = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * covmean_trace)
    return max(dist, 0.0)


def perceptual_distance(x: np.ndarray, y: np.ndarray, emb: Embedder) -> float:
    """Mean embedding distance over corresponding non-overlapping 8x8 patches,
    normalized by sqrt(d)."""
    ensure_image(x, name="x")
    ensure_image(y, name="y")
    ensure_same_shape(x, y, "x", "y")
    h, w = x.shape[:2]
    if h % PATCH != 0 or w % PATCH != 0:
        raise ValueError(f"image size {(h, w)} not divisible by patch size {PATCH}")
    dists = []
    for i in range(0, h, PATCH):
        for j in range(0, w, PATCH):
            ex = np.asarray(emb(x[i : i + PATCH, j : j + PATCH]), dtype=np.float64)
            ey = np.asarray(emb(y[i : i + PATCH, j : j + PATCH]), dtype=np.float64)
            dists.append(np.linalg.norm(ex - ey))
    return float(np.mean(dists) / np.sqrt(emb.dim))
