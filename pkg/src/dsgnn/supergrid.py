"""Supergrid learning: assignment matrices, static semantics, pooling.

Assignments map the H*W grid cells onto N supergrids as row-stochastic
probability rows. A softmax over the supergrid axis reconciles the linear
low-rank mapper with the sum-to-one constraint; the sparse threshold zeroes
entries below rho (straight-through: zeroed entries get zero gradient) and
renormalizes, with a keep-max fallback for rows that lose every entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError


@dataclass
class AssignmentMatrix:
    s: Tensor  # (H*W, N), row-stochastic
    kind: str  # "dynamic" | "static"
    view: str  # "aod" | "meteorology"

    @property
    def n(self):
        return self.s.shape[1]

    def label_map(self, h: int, w: int) -> np.ndarray:
        """Hard labels: argmax supergrid per cell, reshaped to the grid."""
        return self.s.data.argmax(axis=1).reshape(h, w)


@dataclass
class StaticSemantics:
    e_sta: np.ndarray   # (H*W, d), frozen during model training
    w_f: np.ndarray     # (d, T_cols)
    loss: float         # final squared Frobenius reconstruction error


def factorize_static(m: np.ndarray, d: int, iters: int = 2000, lr: float = 0.01,
                     seed: int = 0) -> StaticSemantics:
    """Factor M ~ E @ W_f by gradient descent on the squared Frobenius error."""
    m = np.asarray(m, dtype=np.float64)
    rows, t_cols = m.shape
    if d > t_cols:
        raise ConfigError(f"embedding dim {d} exceeds sequence length {t_cols}")
    rng = np.random.default_rng(seed)
    e = 0.1 * rng.standard_normal((rows, d))
    w_f = 0.1 * rng.standard_normal((d, t_cols))
    for _ in range(iters):
        r = e @ w_f - m
        ge = 2.0 * r @ w_f.T
        gw = 2.0 * e.T @ r
        e -= lr * ge
        w_f -= lr * gw
    loss = float(((e @ w_f - m) ** 2).sum())
    return StaticSemantics(e, w_f, loss)


def kmeans_rows(x: np.ndarray, k: int, iters: int = 25, seed: int = 0) -> np.ndarray:
    """Lloyd's algorithm over matrix rows; returns the (k, d) centroids.

    Used to seed the static mapper so initial assignments follow the
    semantic-embedding geometry instead of a random linear projection.
    Empty clusters keep their previous centroid.
    """
    x = np.asarray(x, dtype=np.float64)
    if not 1 <= k <= x.shape[0]:
        raise ConfigError(f"k-means needs 1 <= k <= rows, got k={k}, rows={x.shape[0]}")
    rng = np.random.default_rng(seed)
    # k-means++ seeding: spread the initial centroids proportionally to the
    # squared distance from those already chosen (plain uniform seeding
    # regularly drops two centroids into one group and merges the rest)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(x.shape[0])]
    for j in range(1, k):
        d2 = ((x[:, None, :] - centers[None, :j, :]) ** 2).sum(axis=2).min(axis=1)
        total = d2.sum()
        if total < 1e-24:
            centers[j] = x[rng.integers(x.shape[0])]
        else:
            centers[j] = x[rng.choice(x.shape[0], p=d2 / total)]
    for _ in range(iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
    return centers


def sparsify_rows(p: Tensor, rho: float) -> Tensor:
    """Zero entries below rho, renormalize rows; keep-max fallback per row.

    Straight-through renormalization: the row sums are treated as constants
    in the backward pass, so kept entries always receive gradient. (The exact
    gradient of p_max / p_max vanishes, which would permanently freeze every
    row that keeps a single entry.)
    """
    mask = (p.data >= rho).astype(np.float64)
    dead = mask.sum(axis=1) == 0
    if dead.any():
        top = p.data[dead].argmax(axis=1)  # argmax ties -> lowest index
        mask[np.nonzero(dead)[0], top] = 1.0
    kept = ad.mul(p, mask)
    denom = (p.data * mask).sum(axis=1, keepdims=True)
    return ad.mul(kept, 1.0 / denom)


def build_assignment(e, w_map, rho: float, kind: str = "dynamic",
                     view: str = "aod", threshold: bool = True) -> AssignmentMatrix:
    """Low-rank mapper: softmax(E @ W_map) rows, optionally sparsified at rho."""
    if not 0.0 < rho < 1.0:
        raise ConfigError(f"threshold rho must be in (0, 1), got {rho}")
    logits = ad.matmul(ad.as_tensor(e), ad.as_tensor(w_map))
    return build_assignment_from_logits(logits, rho, kind, view, threshold)


def build_assignment_from_logits(logits, rho: float, kind: str = "dynamic",
                                 view: str = "aod", threshold: bool = True) -> AssignmentMatrix:
    """Assignment from raw (H*W, N) logits; used directly by the dense variant."""
    if not 0.0 < rho < 1.0:
        raise ConfigError(f"threshold rho must be in (0, 1), got {rho}")
    p = ad.softmax(ad.as_tensor(logits), axis=1)
    if threshold:
        p = sparsify_rows(p, rho)
    return AssignmentMatrix(p, kind, view)


def pool_supergrids(x, assignment: AssignmentMatrix) -> Tensor:
    """Pool cell representations into supergrids: Z_k = sum_ij S_ijk X_ij.

    `x` is (H*W, d) or (H, W, d); returns (N, d).
    """
    x = ad.as_tensor(x)
    if x.ndim == 3:
        h, w, d = x.shape
        x = ad.reshape(x, (h * w, d))
    if x.shape[0] != assignment.s.shape[0]:
        raise ShapeError(
            f"pool_supergrids: {x.shape[0]} cells vs assignment rows "
            f"{assignment.s.shape[0]}"
        )
    return ad.matmul(ad.swap_last_two(assignment.s), x)
