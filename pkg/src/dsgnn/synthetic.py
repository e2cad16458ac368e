"""Synthetic grid dataset with planted supergrid structure.

The grid is partitioned into K contiguous Voronoi cells. Each cluster carries
its own time-varying wind regime and emission modulation; a pollutant field
evolves under first-order upwind advection + explicit-Euler diffusion, and
the observed channels (AOD, meteorology, air quality) are derived from the
field and the regimes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import GridDataset
from .errors import ConfigError


@dataclass
class SynthConfig:
    h: int = 24
    w: int = 24
    t: int = 400
    clusters: int = 4
    noise: float = 0.1
    seed: int = 0
    station_frac: float = 0.15
    diffusion: float = 0.1
    decay: float = 0.05


def _voronoi_labels(h, w, seeds: np.ndarray) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    pts = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(float)
    d = ((pts[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
    return d.argmin(axis=1).reshape(h, w)


def _shift(arr: np.ndarray, di: int, dj: int) -> np.ndarray:
    """Shift with zero fill outside the domain."""
    out = np.zeros_like(arr)
    h, w = arr.shape
    si = slice(max(di, 0), h + min(di, 0))
    sj = slice(max(dj, 0), w + min(dj, 0))
    ti = slice(max(-di, 0), h + min(-di, 0))
    tj = slice(max(-dj, 0), w + min(-dj, 0))
    out[si, sj] = arr[ti, tj]
    return out


def gen_synthetic(cfg: SynthConfig) -> GridDataset:
    """Generate a dataset; deterministic for a fixed config."""
    h, w, t, k = cfg.h, cfg.w, cfg.t, cfg.clusters
    if k < 1 or h * w < k:
        raise ConfigError(f"need 1 <= clusters <= H*W, got {k} on {h}x{w}")
    if not 0.0 < cfg.diffusion <= 0.25:
        raise ConfigError(f"diffusion must be in (0, 0.25], got {cfg.diffusion}")
    if t < 2:
        raise ConfigError(f"need T >= 2, got {t}")
    rng = np.random.default_rng(cfg.seed)

    seed_cells = rng.choice(h * w, size=k, replace=False)
    seeds = np.stack([seed_cells // w, seed_cells % w], axis=1).astype(float)
    labels = _voronoi_labels(h, w, seeds)

    # Per-cluster regimes: wind direction/force, emission level, and a
    # temporal modulation distinct enough to separate cluster time series.
    base_dir = rng.uniform(0.0, 2 * np.pi, size=k)
    base_force = rng.uniform(0.1, 0.3, size=k)
    emission_level = rng.uniform(1.0, 3.0, size=k)
    period = rng.integers(20, 60, size=k).astype(float)
    phase = rng.uniform(0.0, 2 * np.pi, size=k)

    steps = np.arange(t)
    theta = base_dir[:, None] + 0.6 * np.sin(2 * np.pi * steps[None, :] / period[:, None] + phase[:, None])
    force = base_force[:, None] * (1.0 + 0.4 * np.sin(2 * np.pi * steps[None, :] / (period[:, None] * 1.7)))
    modulation = 1.0 + 0.8 * np.sin(2 * np.pi * steps[None, :] / period[:, None] + phase[:, None])

    # Wind speed budget that keeps the explicit step non-negative.
    budget = max(0.0, 1.0 - 4.0 * cfg.diffusion)
    vmax = np.abs(np.stack([force * np.cos(theta), force * np.sin(theta)])).sum(axis=0).max()
    scale = 1.0
    if vmax > budget:
        scale = budget / vmax
        warnings.warn(
            f"wind regime violates the one-cell-per-step limit "
            f"(|vx|+|vy| max {vmax:.3f} > {budget:.3f}); clamping",
            stacklevel=2,
        )

    pollutant = np.zeros((t, h, w))
    u = np.zeros((h, w))
    lab = labels  # (h, w) int
    for step in range(t):
        vx = scale * (force[lab, step] * np.cos(theta[lab, step]))  # columns
        vy = scale * (force[lab, step] * np.sin(theta[lab, step]))  # rows
        emission = 0.1 * emission_level[lab] * modulation[lab, step]

        fx_pos = np.maximum(vx, 0.0) * u
        fx_neg = np.maximum(-vx, 0.0) * u
        fy_pos = np.maximum(vy, 0.0) * u
        fy_neg = np.maximum(-vy, 0.0) * u
        outflow = fx_pos + fx_neg + fy_pos + fy_neg
        inflow = (
            _shift(fx_pos, 0, 1)
            + _shift(fx_neg, 0, -1)
            + _shift(fy_pos, 1, 0)
            + _shift(fy_neg, -1, 0)
        )
        neighbors = (
            _shift(u, 0, 1) + _shift(u, 0, -1) + _shift(u, 1, 0) + _shift(u, -1, 0)
        )
        transported = u - outflow + inflow + cfg.diffusion * (neighbors - 4.0 * u)
        u = (1.0 - cfg.decay) * transported + emission
        pollutant[step] = u

    sigma = cfg.noise
    noise = lambda *shape: sigma * rng.standard_normal(shape)  # noqa: E731

    aod = (1.0 * pollutant + 0.1 + noise(t, h, w))[..., None]

    met = np.empty((t, h, w, 5))
    met[..., 0] = 15.0 + 10.0 * modulation[lab].transpose(2, 0, 1) + noise(t, h, w)
    met[..., 1] = 50.0 + 20.0 * np.sin(theta[lab]).transpose(2, 0, 1) + noise(t, h, w)
    met[..., 2] = np.maximum(0.0, 2.0 * (modulation[lab].transpose(2, 0, 1) - 1.0) + noise(t, h, w))
    met[..., 3] = scale * force[lab].transpose(2, 0, 1) + noise(t, h, w)
    met[..., 4] = np.mod(theta[lab].transpose(2, 0, 1), 2 * np.pi) + noise(t, h, w)

    aq_coeff = np.array([0.5, 0.8, 1.2, 0.3, 0.6, 1.0])
    aq_offset = np.array([5.0, 10.0, 20.0, 1.0, 30.0, 15.0])
    aq = pollutant[..., None] * aq_coeff + aq_offset

    n_stations = max(10, int(round(cfg.station_frac * h * w)))
    picked = rng.choice(h * w, size=n_stations, replace=False)
    mask = np.zeros(h * w, dtype=bool)
    mask[picked] = True
    mask = mask.reshape(h, w)

    return GridDataset(aod, met, aq, mask, labels.astype(np.int64))
