"""Message passing: graph aggregation/update, S2G projection, G update."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNorm, ParamBundle, Tensor
from .correlation import SupergridGraph
from .errors import ShapeError
from .supergrid import AssignmentMatrix


def init_update_mlp(bundle: ParamBundle, prefix: str, rng, d: int, d_e: int):
    """Two-layer MLP (d + d_e) -> d -> d for the supergrid update."""
    bundle.add(f"{prefix}.w1", ad.glorot_uniform(rng, (d + d_e, d), d + d_e, d))
    bundle.add(f"{prefix}.b1", np.zeros(d))
    bundle.add(f"{prefix}.w2", ad.glorot_uniform(rng, (d, d), d, d))
    bundle.add(f"{prefix}.b2", np.zeros(d))


def init_g_update(bundle: ParamBundle, prefix: str, rng, c_in: int, d: int):
    """Two 3x3 convolutions (c_in -> d -> d) with batch norm parameters."""
    bundle.add(f"{prefix}.k1", ad.glorot_uniform(rng, (9, c_in, d), 9 * c_in, d))
    bundle.add(f"{prefix}.cb1", np.zeros(d))
    bundle.add(f"{prefix}.gamma", np.ones(d))
    bundle.add(f"{prefix}.beta", np.zeros(d))
    bundle.add(f"{prefix}.k2", ad.glorot_uniform(rng, (9, d, d), 9 * d, d))
    bundle.add(f"{prefix}.cb2", np.zeros(d))


def aggregate(graph: SupergridGraph) -> Tensor:
    """r_i = sum_{j != i} q_ij * c_ij, per supergrid."""
    n = graph.n
    offdiag = 1.0 - np.eye(n)
    q = ad.mul(graph.edge_weight, offdiag)
    weighted = ad.mul(graph.edge_repr, ad.reshape(q, (n, n, 1)))
    return ad.reduce_sum(weighted, axis=1)


def update_supergrids(z, r, bundle: ParamBundle, prefix: str) -> Tensor:
    """Z'_i = MLP(concat(Z_i, r_i))."""
    z, r = ad.as_tensor(z), ad.as_tensor(r)
    if z.shape[0] != r.shape[0]:
        raise ShapeError(f"update_supergrids: {z.shape} vs {r.shape}")
    joined = ad.concat([z, r], axis=1)
    hidden = ad.relu(ad.add(ad.matmul(joined, bundle[f"{prefix}.w1"]), bundle[f"{prefix}.b1"]))
    return ad.add(ad.matmul(hidden, bundle[f"{prefix}.w2"]), bundle[f"{prefix}.b2"])


def s2g_update(assignment: AssignmentMatrix, z_updated) -> Tensor:
    """Project supergrid representations back to cells: X'_ij = sum_k S_ijk Z'_k."""
    z_updated = ad.as_tensor(z_updated)
    if assignment.s.shape[1] != z_updated.shape[0]:
        raise ShapeError(
            f"s2g_update: assignment has {assignment.s.shape[1]} supergrids, "
            f"Z' has {z_updated.shape[0]} rows"
        )
    return ad.matmul(assignment.s, z_updated)


def g_update(parts, h: int, w: int, bundle: ParamBundle, prefix: str,
             bn: BatchNorm, training: bool, update_stats: bool = True) -> Tensor:
    """Conv3x3 -> BN -> ReLU -> Conv3x3 over channel-concatenated grid inputs.

    `parts` is a list of (H*W, d) tensors concatenated along channels.
    Returns (H*W, d).
    """
    joined = parts[0] if len(parts) == 1 else ad.concat(parts, axis=1)
    c_in = joined.shape[1]
    grid = ad.reshape(joined, (h, w, c_in))
    y = ad.conv2d_3x3(grid, bundle[f"{prefix}.k1"], bundle[f"{prefix}.cb1"])
    y = bn(y, bundle[f"{prefix}.gamma"], bundle[f"{prefix}.beta"], training, update_stats)
    y = ad.relu(y)
    y = ad.conv2d_3x3(y, bundle[f"{prefix}.k2"], bundle[f"{prefix}.cb2"])
    d = y.shape[2]
    return ad.reshape(y, (h * w, d))
