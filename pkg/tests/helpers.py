"""Shared test oracles: central finite differences over parameter bundles."""

import numpy as np


def fd_gradient(forward, tensor, step=1e-6):
    """Central finite-difference gradient of scalar `forward()` wrt `tensor`.

    `forward` must recompute the loss from current tensor values on each call.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        plus = float(forward())
        flat[i] = orig - step
        minus = float(forward())
        flat[i] = orig
        gflat[i] = (plus - minus) / (2 * step)
    return grad


def max_rel_error(analytic, numeric, floor=1e-8):
    """Max elementwise relative error with an absolute floor for tiny entries."""
    denom = np.maximum(np.abs(numeric), np.maximum(np.abs(analytic), floor))
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_bundle_gradients(loss_fn, bundle, tol=1e-4, step=1e-6, names=None):
    """Compare bundle gradients of `loss_fn` against finite differences.

    `loss_fn` returns the scalar loss Tensor; it is re-run for every probe.
    Returns the worst relative error seen.
    """
    bundle.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {k: bundle[k].grad.copy() for k in (names or bundle.names())}
    worst = 0.0
    for name in analytic:
        numeric = fd_gradient(lambda: loss_fn().data, bundle[name], step=step)
        worst = max(worst, max_rel_error(analytic[name], numeric))
    return worst
