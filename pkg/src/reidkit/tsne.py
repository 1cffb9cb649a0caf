"""Exact O(N^2) t-SNE with perplexity binary search and momentum descent.

Perplexity uses base-2 entropy, so sigma values are reproducible:
the bandwidth of row i solves 2^H(P_.|i) = perplexity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

P_FLOOR = 1e-12
PERPLEXITY_TOL = 1e-5
MAX_BISECTIONS = 200


@dataclass(frozen=True)
class TsneParams:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch: int = 250
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise DataError("iterations must be >= 1")
        if self.perplexity <= 1:
            raise DataError("perplexity must exceed 1")


def _sq_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _row_entropy_bits(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def _conditional_row(d2_row: np.ndarray, beta: float) -> np.ndarray:
    # beta = 1/(2 sigma^2); row excludes the diagonal entry
    p = np.exp(-beta * (d2_row - d2_row.min()))
    return p / p.sum()


def perplexity_affinities(x: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinity matrix P with per-row bandwidths found by
    binary search so each conditional row has the target perplexity."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 4:
        raise DataError("need at least 4 points")
    n = x.shape[0]
    if perplexity >= n:
        raise DataError(f"perplexity {perplexity} must be < N = {n}")
    d2 = _sq_distances(x)
    if d2.max() == 0.0:
        raise DataError("degenerate input: all points identical")
    cond = np.zeros((n, n), dtype=np.float64)
    others = np.arange(n)
    for i in range(n):
        mask = others != i
        row = d2[i, mask]
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(MAX_BISECTIONS):
            p = _conditional_row(row, beta)
            perp = 2.0 ** _row_entropy_bits(p)
            if abs(perp - perplexity) < PERPLEXITY_TOL:
                break
            if perp > perplexity:  # too flat, sharpen
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (lo + beta) / 2.0
        cond[i, mask] = _conditional_row(row, beta)
    p_sym = (cond + cond.T) / (2.0 * n)
    p_sym = np.maximum(p_sym, P_FLOOR)  # off-diagonal floor for stable log ratios
    np.fill_diagonal(p_sym, 0.0)
    return p_sym / p_sym.sum()  # restore unit mass after flooring


def _student_kernel(y: np.ndarray):
    num = 1.0 / (1.0 + _sq_distances(y))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, P_FLOOR), num


def kl_and_gradient(p: np.ndarray, y: np.ndarray):
    """KL(P || Q) under the Student-t low-dimensional kernel, with its
    gradient w.r.t. the 2-D coordinates."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = p.shape[0]
    if p.shape != (n, n) or y.shape[0] != n:
        raise DataError("shape mismatch between P and Y")
    q, num = _student_kernel(y)
    mask = ~np.eye(n, dtype=bool)
    kl = float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    w = (p - q) * num
    np.fill_diagonal(w, 0.0)
    grad = 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)
    return kl, grad


def run_tsne(x: np.ndarray, params: TsneParams = TsneParams()):
    """Momentum gradient descent with early exaggeration.

    Returns (Y: N x 2, kl_trace) where the trace is the KL against the
    true (un-exaggerated) P at every iteration. Deterministic given seed.
    """
    p = perplexity_affinities(x, params.perplexity)
    n = p.shape[0]
    rng = np.random.default_rng(params.seed)
    y = rng.normal(scale=1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)  # per-coordinate adaptive rates, standard scheme
    trace = []
    for it in range(params.iterations):
        p_eff = p * params.exaggeration if it < params.exaggeration_iters else p
        q, num = _student_kernel(y)
        mask = ~np.eye(n, dtype=bool)
        trace.append(float(np.sum(p[mask] * np.log(p[mask] / q[mask]))))
        w = (p_eff - q) * num
        np.fill_diagonal(w, 0.0)
        grad = 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)
        momentum = params.momentum_early if it < params.momentum_switch else params.momentum_late
        same_sign = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        velocity = momentum * velocity - params.learning_rate * gains * grad
        y = y + velocity
    return y, trace
