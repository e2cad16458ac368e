"""View fusion, estimation head, and the training losses / MAE metric."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParamBundle, Tensor
from .errors import ConfigError, ProtocolError


def _check_weight(name, value):
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must be in [0, 1], got {value}")


def fuse(x_aod, x_met, alpha: float) -> Tensor:
    """Convex combination of the two view representations."""
    _check_weight("alpha", alpha)
    return ad.add(ad.mul(ad.as_tensor(x_aod), alpha), ad.mul(ad.as_tensor(x_met), 1.0 - alpha))


def init_estimation_head(bundle: ParamBundle, prefix: str, rng, d: int):
    """Two 1x1 convolutions d -> d -> 1 with ReLU between."""
    bundle.add(f"{prefix}.w1", ad.glorot_uniform(rng, (d, d), d, d))
    bundle.add(f"{prefix}.b1", np.zeros(d))
    bundle.add(f"{prefix}.w2", ad.glorot_uniform(rng, (d, 1), d, 1))
    bundle.add(f"{prefix}.b2", np.zeros(1))


def estimate(x_fused, h: int, w: int, bundle: ParamBundle, prefix: str) -> Tensor:
    """Per-cell projection of the fused representation to one channel (H, W)."""
    x = ad.as_tensor(x_fused)
    if x.ndim == 3:
        x = ad.reshape(x, (h * w, x.shape[2]))
    hidden = ad.relu(ad.add(ad.matmul(x, bundle[f"{prefix}.w1"]), bundle[f"{prefix}.b1"]))
    out = ad.add(ad.matmul(hidden, bundle[f"{prefix}.w2"]), bundle[f"{prefix}.b2"])
    return ad.reshape(out, (h, w))


def recon_view_loss(s_dyn, s_sta, e_dyn, e_sta, beta: float) -> Tensor:
    """Reconstruction loss of one view's semantics through its assignments.

    Each cell's semantics are reconstructed as the occupancy-weighted mean of
    its supergrids' pooled semantics, S diag(1^T S)^-1 S^T E; the view loss is
    beta * ||recon_dyn - E_dyn|| + (1-beta) * ||recon_sta - E_sta|| in
    Frobenius norm. The occupancy normalization keeps the loss scale
    independent of supergrid size, so grouping similar cells lowers it (the
    unnormalized S S^T E grows with group size and would penalize exactly the
    groupings the loss is meant to encourage). A missing branch (ablation)
    contributes zero.
    """
    _check_weight("beta", beta)

    def branch(s, e):
        s, e = ad.as_tensor(s), ad.as_tensor(e)
        pooled = ad.matmul(ad.swap_last_two(s), e)          # (N, d) sums
        counts = ad.swap_last_two(ad.reduce_sum(s, axis=0, keepdims=True))
        mean = ad.div(pooled, ad.add(counts, 1e-30))        # (N, d) means
        recon = ad.matmul(s, mean)
        return ad.l2_distance(recon, e)

    total = Tensor(0.0)
    if s_dyn is not None:
        total = ad.add(total, ad.mul(branch(s_dyn, e_dyn), beta))
    if s_sta is not None:
        total = ad.add(total, ad.mul(branch(s_sta, e_sta), 1.0 - beta))
    return total


def combine_recon(l_aod, l_met, gamma: float) -> Tensor:
    _check_weight("gamma", gamma)
    return ad.add(ad.mul(ad.as_tensor(l_aod), gamma), ad.mul(ad.as_tensor(l_met), 1.0 - gamma))


def est_loss(estimated, truth: np.ndarray, target_cells) -> Tensor:
    """Mean absolute error over the target cells only."""
    cells = list(target_cells)
    if not cells:
        raise ProtocolError("est_loss: empty target cell set")
    rows = np.array([c[0] for c in cells])
    cols = np.array([c[1] for c in cells])
    picked = ad.getitem(ad.as_tensor(estimated), (rows, cols))
    truth_vals = np.asarray(truth, dtype=np.float64)[rows, cols]
    return ad.reduce_mean(ad.absolute(ad.sub(picked, truth_vals)))


def joint_loss(l_est, l_recon, lam: float) -> Tensor:
    _check_weight("lambda", lam)
    return ad.add(ad.mul(ad.as_tensor(l_est), lam), ad.mul(ad.as_tensor(l_recon), 1.0 - lam))


def mae_metric(estimates: np.ndarray, truths: np.ndarray, target_cells) -> float:
    """MAE over test samples and target cells: estimates/truths are (B, H, W)."""
    cells = list(target_cells)
    estimates = np.asarray(estimates)
    truths = np.asarray(truths)
    if estimates.shape[0] == 0 or not cells:
        raise ProtocolError("mae_metric: empty sample or target cell set")
    rows = np.array([c[0] for c in cells])
    cols = np.array([c[1] for c in cells])
    return float(np.abs(estimates[:, rows, cols] - truths[:, rows, cols]).mean())
