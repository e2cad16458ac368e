"""Five-fold masked-station training protocol and ablation sweeps."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Adam
from .data import (
    AIR_QUALITY_CHANNELS,
    GridDataset,
    StationFold,
    fill_missing_air_quality,
    make_folds,
)
from .errors import ConfigError, DsgnnError, ProtocolError
from .fusion import est_loss, joint_loss, mae_metric
from .model import DSGNN, ModelConfig, VARIANTS, parse_variant
from .supergrid import factorize_static, kmeans_rows


@dataclass
class TrainConfig:
    tau: int = 6
    rho: float = 0.4
    n_dyn: int = 5
    n_sta: int = 8
    alpha: float = 0.3
    beta: float = 0.6
    gamma: float = 0.4
    lam: float = 0.6
    d: int = 32
    lr: float = 0.001
    batch: int = 48
    epochs: int = 30
    seed: int = 0
    variant: str = "full"
    target_channel: str = "PM25"
    patience: int = 10
    topk: int = 3
    factorize_iters: int = 300

    def __post_init__(self):
        for name in ("rho", "alpha", "beta", "gamma", "lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.tau < 1:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.target_channel not in AIR_QUALITY_CHANNELS:
            raise ConfigError(
                f"unknown target channel {self.target_channel!r}; "
                f"valid: {', '.join(AIR_QUALITY_CHANNELS)}"
            )
        parse_variant(self.variant)

    @property
    def channel_index(self) -> int:
        return AIR_QUALITY_CHANNELS.index(self.target_channel)

    def model_config(self, h: int, w: int) -> ModelConfig:
        return ModelConfig(
            h=h, w=w, tau=self.tau, d=self.d, n_dyn=self.n_dyn, n_sta=self.n_sta,
            rho=self.rho, alpha=self.alpha, beta=self.beta, gamma=self.gamma,
            lam=self.lam, variant=self.variant, topk=self.topk,
        )


@dataclass
class WindowSplits:
    """Chronological 70/10/20 split of valid window end indices."""

    train: list
    val: list
    test: list
    train_steps: int  # number of time steps in the training portion


def make_windows(dataset_t: int, tau: int) -> WindowSplits:
    """Valid windows end at t in [tau-1, T); each belongs to its end's split."""
    if dataset_t < tau:
        raise ConfigError(f"T={dataset_t} shorter than window length tau={tau}")
    train_end = int(dataset_t * 0.7)
    val_end = int(dataset_t * 0.8)
    ends = list(range(tau - 1, dataset_t))
    return WindowSplits(
        train=[t for t in ends if t < train_end],
        val=[t for t in ends if train_end <= t < val_end],
        test=[t for t in ends if t >= val_end],
        train_steps=train_end,
    )


@dataclass
class FoldData:
    """Standardized model inputs and static semantics for one fold."""

    aod: np.ndarray  # (T, H, W, 1), standardized
    met: np.ndarray  # (T, H, W, 5), standardized
    aq: np.ndarray   # (T, H, W, 6), masked-filled then standardized
    stats: dict      # per-variable (mean, std) used for standardization
    e_sta: dict      # view -> (H*W, d) static semantics
    splits: WindowSplits


def _standardize(arr: np.ndarray, t_end: int):
    mean = arr[:t_end].mean(axis=(0, 1, 2))
    std = arr[:t_end].std(axis=(0, 1, 2))
    std = np.where(std < 1e-8, 1.0, std)
    return (arr - mean) / std, (mean, std)


def _static_semantics(matrix: np.ndarray, d: int, iters: int, seed: int) -> np.ndarray:
    """Factorize a (H*W, T_cols) matrix into per-cell static semantics.

    Each row (cell series) is standardized first so similarity lives in the
    temporal shape, not the amplitude. The factorization has gauge freedom
    (E -> E A, W_f -> A^-1 W_f leaves E W_f unchanged), so E is rotated
    through the SVD of W_f; with orthonormal right factors, Euclidean
    distances between E rows then match distances between (reconstructed)
    series. A single global std scale keeps the mapper logits sane.
    """
    row_std = matrix.std(axis=1, keepdims=True)
    z = (matrix - matrix.mean(axis=1, keepdims=True)) / np.where(row_std < 1e-8, 1.0, row_std)
    scale = np.linalg.norm(z, 2)
    if scale < 1e-12:
        scale = 1.0
    sem = factorize_static(z / scale, d, iters=iters, lr=0.05, seed=seed)
    uw, sw, _ = np.linalg.svd(sem.w_f, full_matrices=False)
    e = sem.e_sta @ uw * sw
    std = e.std()
    return e / (std if std > 1e-12 else 1.0)


def prepare_fold_inputs(dataset: GridDataset, fold: StationFold, cfg: TrainConfig) -> FoldData:
    """Fill non-input air-quality cells, standardize, and factor static semantics.

    Everything is computed from input cells and the training time range only.
    """
    filled = fill_missing_air_quality(dataset, fold.input_cells)
    splits = make_windows(dataset.T, cfg.tau)
    t_end = splits.train_steps
    aod, aod_stats = _standardize(filled.aod, t_end)
    met, met_stats = _standardize(filled.meteorology, t_end)
    aq, aq_stats = _standardize(filled.air_quality, t_end)
    h, w = dataset.H, dataset.W
    e_sta = {
        "aod": _static_semantics(
            aod[:t_end, :, :, 0].reshape(t_end, h * w).T,
            cfg.d, cfg.factorize_iters, cfg.seed,
        ),
        "met": _static_semantics(
            met[:t_end].transpose(1, 2, 0, 3).reshape(h * w, t_end * 5),
            cfg.d, cfg.factorize_iters, cfg.seed,
        ),
    }
    return FoldData(aod, met, aq,
                    {"aod": aod_stats, "met": met_stats, "aq": aq_stats},
                    e_sta, splits)


def _sample_windows(fold_data: FoldData, t: int, tau: int) -> dict:
    sl = slice(t - tau + 1, t + 1)
    return {"aod": fold_data.aod[sl], "met": fold_data.met[sl], "aq": fold_data.aq[sl]}


def _evaluate(model: DSGNN, fold_data: FoldData, dataset: GridDataset,
              ends, target_cells, channel: int) -> float:
    estimates, truths = [], []
    for t in ends:
        res = model.forward(
            _sample_windows(fold_data, t, model.cfg.tau),
            e_sta=fold_data.e_sta, training=False,
        )
        estimates.append(res.estimate.data)
        truths.append(dataset.air_quality[t, :, :, channel])
    return mae_metric(np.array(estimates), np.array(truths), target_cells)


@dataclass
class FoldResult:
    fold_id: int
    mae: float
    train_losses: list
    val_maes: list
    best_epoch: int
    state: dict
    stats: dict
    e_sta: dict


def _init_static_mappers(model: DSGNN, e_sta: dict, cfg: TrainConfig):
    """Seed the static mapper weights from k-means centroids of the semantics.

    A random linear projection of well-separated embeddings regularly starts
    (and stays) collapsed onto one supergrid; similarity-to-centroid logits
    start the assignment at the embedding geometry instead. The mapper stays
    fully learnable afterwards.
    """
    for view in ("aod", "met"):
        name = f"{view}.w_sta"
        if name in model.params.entries and view in e_sta:
            centers = kmeans_rows(e_sta[view], cfg.n_sta, seed=cfg.seed)
            model.params[name].data[...] = 0.1 * centers.T


def train_fold(dataset: GridDataset, fold: StationFold, cfg: TrainConfig) -> FoldResult:
    """Train on one fold's input cells; returns the held-out test MAE."""
    if not fold.target_cells or not fold.input_cells:
        raise ProtocolError("train_fold: fold has empty target or input set")
    fold_data = prepare_fold_inputs(dataset, fold, cfg)
    channel = cfg.channel_index
    model = DSGNN(cfg.model_config(dataset.H, dataset.W),
                  seed=cfg.seed * 1000 + fold.fold_id)
    _init_static_mappers(model, fold_data.e_sta, cfg)
    optimizer = Adam(model.params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed * 1000 + fold.fold_id + 7)

    train_losses, val_maes = [], []
    best = (np.inf, -1, None)  # (val mae, epoch, state)
    since_best = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(fold_data.splits.train))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg.batch):
            batch = [fold_data.splits.train[i] for i in order[start:start + cfg.batch]]
            model.params.zero_grad()
            total = None
            for t in batch:
                res = model.forward(
                    _sample_windows(fold_data, t, cfg.tau),
                    e_sta=fold_data.e_sta, training=True,
                )
                truth = dataset.air_quality[t, :, :, channel]
                l_est = est_loss(res.estimate, truth, fold.target_cells)
                loss = joint_loss(l_est, res.recon, cfg.lam)
                total = loss if total is None else total + loss
            total = total * (1.0 / len(batch))
            if not np.isfinite(total.data):
                raise DsgnnError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches} "
                    f"(ends {batch}): {total.data}"
                )
            total.backward()
            optimizer.step()
            epoch_loss += float(total.data)
            n_batches += 1
        train_losses.append(epoch_loss / max(n_batches, 1))
        val_mae = _evaluate(model, fold_data, dataset,
                            fold_data.splits.val, fold.target_cells, channel)
        val_maes.append(val_mae)
        if val_mae < best[0]:
            best = (val_mae, epoch, model.state_arrays())
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    if best[2] is not None:
        model.load_state_arrays(best[2])
    test_mae = _evaluate(model, fold_data, dataset,
                         fold_data.splits.test, fold.target_cells, channel)
    return FoldResult(
        fold_id=fold.fold_id, mae=test_mae, train_losses=train_losses,
        val_maes=val_maes, best_epoch=best[1], state=model.state_arrays(),
        stats=fold_data.stats, e_sta=fold_data.e_sta,
    )


@dataclass
class RunReport:
    fold_maes: list
    mean_mae: float
    loss_curves: list       # per fold, per epoch mean joint loss
    config: dict
    seed: int
    wall_time: float
    fold_results: list = field(default_factory=list)


def _train_fold_job(args):
    dataset, fold, cfg = args
    return train_fold(dataset, fold, cfg)


def run_protocol(dataset: GridDataset, cfg: TrainConfig, jobs: int = 1,
                 keep_states: bool = True) -> RunReport:
    """Train all five folds and average the test MAEs."""
    start = time.time()
    folds = make_folds(dataset, cfg.seed)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_fold_job, [(dataset, f, cfg) for f in folds]))
    else:
        results = [train_fold(dataset, f, cfg) for f in folds]
    maes = [r.mae for r in results]
    if not keep_states:
        for r in results:
            r.state = {}
            r.e_sta = {}
    return RunReport(
        fold_maes=maes,
        mean_mae=float(np.mean(maes)),
        loss_curves=[r.train_losses for r in results],
        config=asdict(cfg),
        seed=cfg.seed,
        wall_time=time.time() - start,
        fold_results=results,
    )


def ablation_sweep(dataset: GridDataset, cfg: TrainConfig, variants,
                   jobs: int = 1) -> dict:
    """Run the protocol once per variant; returns name -> RunReport."""
    for name in variants:
        if name not in VARIANTS and name != "DSGNN":
            raise ConfigError(
                f"unknown variant {name!r}; valid: {', '.join(VARIANTS)}"
            )
    out = {}
    for name in variants:
        variant_cfg = TrainConfig(**{**asdict(cfg), "variant": name})
        out[name] = run_protocol(dataset, variant_cfg, jobs=jobs, keep_states=False)
    return out
