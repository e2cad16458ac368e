"""Per-cell temporal encoder: point-wise attention + flatten + MLP.

A single-head scaled dot-product attention over the time axis turns a
(tau, c) series into (tau, d) vectors, which are flattened and compacted by a
two-layer MLP into a d-vector. All grid cells share one parameter set; the
two encoder instances used per view (grid representation vs. dynamic
semantics) hold disjoint parameters.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import ParamBundle, Tensor
from .errors import ShapeError


def init_temporal_encoder(bundle: ParamBundle, prefix: str, rng, c: int, tau: int, d: int):
    """Register attention projections and MLP weights under `prefix`."""
    bundle.add(f"{prefix}.q", ad.glorot_uniform(rng, (c, d), c, d))
    bundle.add(f"{prefix}.k", ad.glorot_uniform(rng, (c, d), c, d))
    bundle.add(f"{prefix}.v", ad.glorot_uniform(rng, (c, d), c, d))
    bundle.add(f"{prefix}.w1", ad.glorot_uniform(rng, (tau * d, d), tau * d, d))
    bundle.add(f"{prefix}.b1", np.zeros(d))
    bundle.add(f"{prefix}.w2", ad.glorot_uniform(rng, (d, d), d, d))
    bundle.add(f"{prefix}.b2", np.zeros(d))


def encode_cells(seq, bundle: ParamBundle, prefix: str):
    """Encode a batch of per-cell series (M, tau, c) into (M, d)."""
    seq = ad.as_tensor(seq)
    if seq.ndim != 3:
        raise ShapeError(f"encode_cells expects (M, tau, c), got {seq.shape}")
    m, tau, _ = seq.shape
    q = bundle[f"{prefix}.q"]
    d = q.shape[1]
    if bundle[f"{prefix}.w1"].shape[0] != tau * d:
        raise ShapeError(
            f"window length {tau} does not match encoder parameters "
            f"(flatten size {bundle[f'{prefix}.w1'].shape[0]}, d={d})"
        )
    sq = ad.matmul(seq, q)
    sk = ad.matmul(seq, bundle[f"{prefix}.k"])
    sv = ad.matmul(seq, bundle[f"{prefix}.v"])
    scores = ad.mul(ad.matmul(sq, ad.swap_last_two(sk)), 1.0 / math.sqrt(d))
    attn = ad.softmax(scores, axis=-1)
    mixed = ad.matmul(attn, sv)                   # (M, tau, d)
    flat = ad.reshape(mixed, (m, tau * d))
    hidden = ad.relu(ad.add(ad.matmul(flat, bundle[f"{prefix}.w1"]), bundle[f"{prefix}.b1"]))
    return ad.add(ad.matmul(hidden, bundle[f"{prefix}.w2"]), bundle[f"{prefix}.b2"])


def encode(seq, bundle: ParamBundle, prefix: str):
    """Encode one (tau, c) series into a d-vector."""
    seq = ad.as_tensor(seq)
    tau, c = seq.shape
    out = encode_cells(ad.reshape(seq, (1, tau, c)), bundle, prefix)
    return ad.reshape(out, (out.shape[1],))


def encode_grid(window: np.ndarray, bundle: ParamBundle, prefix: str) -> Tensor:
    """Encode a (tau, H, W, c) window into a flat (H*W, d) representation.

    Cells are independent: each row is `encode` of that cell's series.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 4:
        raise ShapeError(f"encode_grid expects (tau, H, W, c), got {window.shape}")
    tau, h, w, c = window.shape
    cells = window.transpose(1, 2, 0, 3).reshape(h * w, tau, c)
    return encode_cells(Tensor(cells), bundle, prefix)
