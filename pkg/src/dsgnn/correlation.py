"""Implicit correlation encoding on fully connected supergrid graphs.

Each ordered supergrid pair (i, j), i != j, carries a learned correlation
vector c_ij = ReLU(MLP(concat(Z_i, Z_j))) and a scalar weight
q_ij = sigmoid(w . c_ij + b) in (0, 1). The diagonal is unused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamBundle, Tensor
from .errors import ConfigError, GraphError


@dataclass
class SupergridGraph:
    n: int
    edge_repr: Tensor   # (N, N, d_e)
    edge_weight: Tensor  # (N, N), values in (0, 1); diagonal unused
    kind: str = "dynamic"
    view: str = "aod"


def init_edge_mlp(bundle: ParamBundle, prefix: str, rng, d: int, d_e: int):
    """Two-layer MLP 2d -> d -> d_e for the pairwise correlation encoder."""
    bundle.add(f"{prefix}.w1", ad.glorot_uniform(rng, (2 * d, d), 2 * d, d))
    bundle.add(f"{prefix}.b1", np.zeros(d))
    bundle.add(f"{prefix}.w2", ad.glorot_uniform(rng, (d, d_e), d, d_e))
    bundle.add(f"{prefix}.b2", np.zeros(d_e))


def init_edge_conv(bundle: ParamBundle, prefix: str, rng, d_e: int):
    """Full-width 1-D convolution reducing a d_e edge vector to a scalar."""
    bundle.add(f"{prefix}.w", ad.glorot_uniform(rng, (d_e,), d_e, 1))
    bundle.add(f"{prefix}.b", np.zeros(()))


def edge_representations(z, bundle: ParamBundle, prefix: str) -> Tensor:
    """All-pairs correlation vectors: (N, N, d_e); direction-sensitive."""
    z = ad.as_tensor(z)
    n = z.shape[0]
    if n < 2:
        raise GraphError(f"need at least 2 supergrids, got {n}")
    idx_i = np.repeat(np.arange(n), n)
    idx_j = np.tile(np.arange(n), n)
    pairs = ad.concat([ad.getitem(z, idx_i), ad.getitem(z, idx_j)], axis=1)
    hidden = ad.relu(ad.add(ad.matmul(pairs, bundle[f"{prefix}.w1"]), bundle[f"{prefix}.b1"]))
    out = ad.relu(ad.add(ad.matmul(hidden, bundle[f"{prefix}.w2"]), bundle[f"{prefix}.b2"]))
    d_e = out.shape[1]
    return ad.reshape(out, (n, n, d_e))


def edge_weights(c, bundle: ParamBundle, prefix: str) -> Tensor:
    """Scalar weight per edge: sigmoid of a learned projection of c_ij."""
    return ad.sigmoid(
        ad.conv1d_full_width(ad.as_tensor(c), bundle[f"{prefix}.w"], bundle[f"{prefix}.b"])
    )


def sparsify_topk(q, k: int, weighted: bool):
    """Keep the k strongest outgoing off-diagonal weights per supergrid.

    Survivors keep their value when `weighted`, otherwise become exactly 1;
    everything else is zeroed. Ties break toward the lower target index.
    """
    q = ad.as_tensor(q)
    n = q.shape[0]
    if k < 1:
        raise ConfigError(f"top-k needs k >= 1, got {k}")
    if k >= n:
        raise ConfigError(f"top-k needs k < N, got k={k}, N={n}")
    vals = q.data.copy()
    np.fill_diagonal(vals, -np.inf)
    mask = np.zeros((n, n))
    # stable sort on negated values: equal weights keep index order
    order = np.argsort(-vals, axis=1, kind="stable")[:, :k]
    np.put_along_axis(mask, order, 1.0, axis=1)
    if weighted:
        return ad.mul(q, mask)
    return Tensor(mask)


def fully_connected_weights(n: int) -> Tensor:
    """All-ones weights (unweighted fully connected graph)."""
    return Tensor(np.ones((n, n)))
