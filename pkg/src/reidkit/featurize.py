"""Hand-crafted per-stripe color histogram features.

Deterministic featurizer so the full retrieval pipeline runs without a
neural backbone: each image is split into horizontal stripes, each stripe
described by concatenated per-channel histograms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .gallery import EmbeddingSet
from .imaging import Image


@dataclass(frozen=True)
class FeaturizerConfig:
    stripes: int = 8
    bins: int = 8

    def __post_init__(self):
        if self.stripes < 1:
            raise DataError("stripe count must be positive")
        if self.bins < 2:
            raise DataError("need at least 2 bins per channel")


def stripe_histogram(img: Image, cfg: FeaturizerConfig = FeaturizerConfig()):
    """Per-stripe color histograms plus their mean as a global descriptor.

    Stripe s covers rows floor(s*H/S) .. floor((s+1)*H/S)-1. Per stripe and
    channel, a B-bin histogram (bin = floor(value*B/256)) is built; the three
    channel histograms are concatenated to 3B values and L1-normalized
    jointly. The global vector is the L1-normalized mean of stripe vectors.

    Returns (global: 3B floats, local: S x 3B floats), both float32.
    """
    if img.channels != 3:
        raise DataError("featurizer requires a 3-channel image")
    s_count, bins = cfg.stripes, cfg.bins
    if img.height < s_count:
        raise DataError(f"image height {img.height} < stripe count {s_count}")
    binned = (img.pixels.astype(np.int64) * bins) // 256
    local = np.zeros((s_count, 3 * bins), dtype=np.float64)
    for s in range(s_count):
        top = (s * img.height) // s_count
        bottom = ((s + 1) * img.height) // s_count
        stripe = binned[top:bottom]
        for ch in range(3):
            counts = np.bincount(stripe[:, :, ch].ravel(), minlength=bins)
            local[s, ch * bins : (ch + 1) * bins] = counts
        local[s] /= local[s].sum()
    glob = local.mean(axis=0)
    glob /= glob.sum()
    return glob.astype(np.float32), local.astype(np.float32)


def featurize_images(images: list[Image], cfg: FeaturizerConfig = FeaturizerConfig()) -> EmbeddingSet:
    """Featurize a list of images into a row-aligned EmbeddingSet."""
    if not images:
        return EmbeddingSet(np.zeros((0, 3 * cfg.bins), dtype=np.float32))
    globs, locs = [], []
    for img in images:
        g, l = stripe_histogram(img, cfg)
        globs.append(g)
        locs.append(l)
    return EmbeddingSet(np.stack(globs), np.stack(locs))
