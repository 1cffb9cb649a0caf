"""PK batch sampling, batch-hard triplet mining, and the triplet loss
with analytic gradients (stopping at the embedding layer)."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .gallery import GalleryIndex, Role


@dataclass(frozen=True)
class MiningConfig:
    p: int = 4
    k: int = 4
    margin: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.p < 2 or self.k < 2:
            raise DataError("need P >= 2 and K >= 2 for valid triplets")
        if not np.isfinite(self.margin) or self.margin < 0:
            raise DataError("margin must be finite and >= 0")


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int


@dataclass(frozen=True)
class TripletSet:
    triplets: tuple[Triplet, ...]

    def __len__(self):
        return len(self.triplets)

    def __iter__(self):
        return iter(self.triplets)


def pk_sample(index: GalleryIndex, cfg: MiningConfig) -> np.ndarray:
    """Sample P identities x K images from the training split.

    Identities are drawn without replacement; images per identity without
    replacement, falling back to with-replacement when an identity has
    fewer than K images. Deterministic given the seed.
    """
    by_pid = defaultdict(list)
    for i, r in enumerate(index.records):
        if r.role == Role.TRAIN:
            by_pid[r.person_id].append(i)
    pids = sorted(by_pid)
    if len(pids) < cfg.p:
        raise DataError(f"need {cfg.p} distinct person ids, found {len(pids)}")
    rng = np.random.default_rng(cfg.seed)
    chosen_pids = rng.choice(len(pids), size=cfg.p, replace=False)
    batch = []
    for pi in chosen_pids:
        rows = by_pid[pids[pi]]
        replace = len(rows) < cfg.k
        picks = rng.choice(len(rows), size=cfg.k, replace=replace)
        batch.extend(rows[j] for j in picks)
    return np.array(batch, dtype=np.int64)


def batch_hard(d_batch: np.ndarray, labels) -> TripletSet:
    """One triplet per anchor: farthest same-label positive, closest
    different-label negative; ties broken by lowest index."""
    d = np.asarray(d_batch, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    if d.shape != (n, n):
        raise DataError(f"distance matrix shape {d.shape} != ({n}, {n})")
    same = labels[:, None] == labels[None, :]
    triplets = []
    for a in range(n):
        pos_mask = same[a].copy()
        pos_mask[a] = False
        neg_mask = ~same[a]
        if not pos_mask.any():
            raise DataError(f"anchor {a} has no positive in batch")
        if not neg_mask.any():
            raise DataError(f"anchor {a} has no negative in batch")
        pos_d = np.where(pos_mask, d[a], -np.inf)
        neg_d = np.where(neg_mask, d[a], np.inf)
        triplets.append(Triplet(a, int(np.argmax(pos_d)), int(np.argmin(neg_d))))
    return TripletSet(tuple(triplets))


def triplet_loss_grad(emb: np.ndarray, triplets: TripletSet, margin: float):
    """Mean hinge triplet loss over the set and its gradient w.r.t. the
    batch embeddings.

    loss = (1/|T|) sum max(0, d(a,p) - d(a,n) + margin), d euclidean.
    Inactive triplets contribute exactly zero gradient; for zero-length
    difference vectors the norm subgradient is taken as zero.
    """
    if len(triplets) == 0:
        raise DataError("empty triplet set")
    e = np.asarray(emb, dtype=np.float64)
    grad = np.zeros_like(e)
    total = 0.0
    scale = 1.0 / len(triplets)
    for t in triplets:
        ap = e[t.anchor] - e[t.positive]
        an = e[t.anchor] - e[t.negative]
        d_ap = np.linalg.norm(ap)
        d_an = np.linalg.norm(an)
        hinge = d_ap - d_an + margin
        if hinge <= 0:
            continue
        total += hinge
        u_ap = ap / d_ap if d_ap > 0 else np.zeros_like(ap)
        u_an = an / d_an if d_an > 0 else np.zeros_like(an)
        grad[t.anchor] += scale * (u_ap - u_an)
        grad[t.positive] -= scale * u_ap
        grad[t.negative] += scale * u_an
    return total * scale, grad
