"""Grid-region dataset model, on-disk format, station folds, and masked fill.

On-disk layout: a ``manifest.json`` plus raw little-endian float32 files in
row-major (t, i, j, c) order, a uint8 station mask, and an optional int32
planted-label map for synthetic sets.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import LoadError, ProtocolError

MANIFEST_VERSION = 1
METEOROLOGY_CHANNELS = ["temperature", "humidity", "rainfall", "wind_force", "wind_direction"]
AIR_QUALITY_CHANNELS = ["SO2", "NO2", "PM10", "CO", "O3", "PM25"]
PM25_INDEX = AIR_QUALITY_CHANNELS.index("PM25")


@dataclass
class GridDataset:
    """Aligned AOD / meteorology / air-quality image sequences over a grid."""

    aod: np.ndarray          # (T, H, W, 1)
    meteorology: np.ndarray  # (T, H, W, 5)
    air_quality: np.ndarray  # (T, H, W, 6); NaN allowed off-station only
    station_mask: np.ndarray  # (H, W) bool
    planted_labels: np.ndarray | None = None  # (H, W) int, synthetic only

    def __post_init__(self):
        self.validate()

    @property
    def T(self):
        return self.aod.shape[0]

    @property
    def H(self):
        return self.aod.shape[1]

    @property
    def W(self):
        return self.aod.shape[2]

    def validate(self):
        t, h, w = self.aod.shape[:3]
        for name, arr, c in (
            ("aod", self.aod, 1),
            ("meteorology", self.meteorology, 5),
            ("air_quality", self.air_quality, 6),
        ):
            if arr.ndim != 4 or arr.shape != (t, h, w, c):
                raise LoadError(
                    f"{name}: expected shape ({t}, {h}, {w}, {c}), got {arr.shape}"
                )
        if self.station_mask.shape != (h, w):
            raise LoadError(
                f"station_mask: expected shape ({h}, {w}), got {self.station_mask.shape}"
            )
        if self.station_mask.dtype != bool:
            raise LoadError("station_mask: expected boolean array")
        if int(self.station_mask.sum()) < 10:
            raise LoadError(
                f"station_mask: need >=10 station cells for the five-fold protocol, "
                f"got {int(self.station_mask.sum())}"
            )
        if self.planted_labels is not None and self.planted_labels.shape != (h, w):
            raise LoadError(
                f"planted_labels: expected shape ({h}, {w}), got {self.planted_labels.shape}"
            )
        for name, arr in (("aod", self.aod), ("meteorology", self.meteorology)):
            if not np.isfinite(arr).all():
                raise LoadError(f"{name}: contains non-finite values")
        bad = ~np.isfinite(self.air_quality)
        if bad.any():
            station_bad = bad & self.station_mask[None, :, :, None]
            if station_bad.any():
                raise LoadError("air_quality: NaN at a station cell")

    def station_cells(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(self.station_mask)
        return list(zip(ii.tolist(), jj.tolist()))


@dataclass
class StationFold:
    """One fold of the five-fold masked-station protocol."""

    fold_id: int
    target_cells: list = field(default_factory=list)
    input_cells: list = field(default_factory=list)


def save_dataset(dataset: GridDataset, out_dir: str):
    """Write manifest + raw files for `dataset` under `out_dir`."""
    os.makedirs(out_dir, exist_ok=True)
    files = {
        "aod": "aod.f32",
        "meteorology": "meteorology.f32",
        "air_quality": "air_quality.f32",
        "station_mask": "station_mask.u8",
    }
    manifest = {
        "version": MANIFEST_VERSION,
        "H": dataset.H,
        "W": dataset.W,
        "T": dataset.T,
        "endianness": "little",
        "channels": {
            "aod": ["aod"],
            "meteorology": METEOROLOGY_CHANNELS,
            "air_quality": AIR_QUALITY_CHANNELS,
        },
        "files": files,
    }
    if dataset.planted_labels is not None:
        files["planted_labels"] = "planted_labels.i32"
    for name in ("aod", "meteorology", "air_quality"):
        arr = getattr(dataset, name).astype("<f4")
        arr.tofile(os.path.join(out_dir, files[name]))
    dataset.station_mask.astype(np.uint8).tofile(
        os.path.join(out_dir, files["station_mask"])
    )
    if dataset.planted_labels is not None:
        dataset.planted_labels.astype("<i4").tofile(
            os.path.join(out_dir, files["planted_labels"])
        )
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def _read_raw(path: str, dtype, count: int, fieldname: str) -> np.ndarray:
    if not os.path.exists(path):
        raise LoadError(f"{fieldname}: raw file missing: {path}")
    arr = np.fromfile(path, dtype=dtype)
    if arr.size != count:
        raise LoadError(
            f"{fieldname}: expected {count} values in {path}, found {arr.size}"
        )
    return arr


def load_dataset(manifest_path: str) -> GridDataset:
    """Load and validate a dataset from a manifest path (file or directory)."""
    if os.path.isdir(manifest_path):
        manifest_path = os.path.join(manifest_path, "manifest.json")
    if not os.path.exists(manifest_path):
        raise LoadError(f"manifest not found: {manifest_path}")
    with open(manifest_path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LoadError(f"manifest: invalid JSON: {exc}") from exc
    if manifest.get("version") != MANIFEST_VERSION:
        raise LoadError(f"manifest: unknown version {manifest.get('version')!r}")
    for key in ("H", "W", "T", "files"):
        if key not in manifest:
            raise LoadError(f"manifest: missing field {key!r}")
    h, w, t = manifest["H"], manifest["W"], manifest["T"]
    base = os.path.dirname(manifest_path)
    files = manifest["files"]

    def raw(field_name, channels, dtype="<f4"):
        path = os.path.join(base, files[field_name])
        arr = _read_raw(path, dtype, t * h * w * channels, field_name)
        return arr.astype(np.float64).reshape(t, h, w, channels)

    aod = raw("aod", 1)
    met = raw("meteorology", 5)
    aq = raw("air_quality", 6)
    mask = _read_raw(
        os.path.join(base, files["station_mask"]), np.uint8, h * w, "station_mask"
    ).reshape(h, w).astype(bool)
    labels = None
    if "planted_labels" in files:
        labels = _read_raw(
            os.path.join(base, files["planted_labels"]), "<i4", h * w, "planted_labels"
        ).reshape(h, w).astype(np.int64)
    return GridDataset(aod, met, aq, mask, labels)


def idw_fill_weights(
    targets: np.ndarray, sources: np.ndarray, k: int = 8, power: float = 2.0
):
    """Inverse-distance weights of the k nearest sources for each target.

    Returns (indices, weights), each of shape (n_targets, k_eff); weights sum
    to one per target row. Distances are Euclidean on grid indices.
    """
    k_eff = min(k, len(sources))
    diff = targets[:, None, :].astype(float) - sources[None, :, :].astype(float)
    dist = np.sqrt((diff**2).sum(axis=2))
    idx = np.argsort(dist, axis=1, kind="stable")[:, :k_eff]
    d = np.take_along_axis(dist, idx, axis=1)
    w = 1.0 / d**power
    w /= w.sum(axis=1, keepdims=True)
    return idx, w


def fill_missing_air_quality(dataset: GridDataset, input_cells) -> GridDataset:
    """Replace every non-input cell's air-quality channels by IDW interpolation.

    Interpolation uses the k=8 nearest input cells (power 2); input cells keep
    their observed values. Returns a new dataset; the argument is untouched.
    """
    input_cells = list(input_cells)
    if not input_cells:
        raise ProtocolError("fill_missing_air_quality: no input cells")
    h, w = dataset.H, dataset.W
    in_set = set(map(tuple, input_cells))
    targets = [(i, j) for i in range(h) for j in range(w) if (i, j) not in in_set]
    sources = np.array(input_cells)
    aq = dataset.air_quality.copy()
    if targets:
        tarr = np.array(targets)
        idx, wts = idw_fill_weights(tarr, sources)
        src_vals = aq[:, sources[:, 0], sources[:, 1], :]      # (T, n_in, 6)
        neigh = src_vals[:, idx, :]                            # (T, n_t, k, 6)
        filled = (neigh * wts[None, :, :, None]).sum(axis=2)   # (T, n_t, 6)
        aq[:, tarr[:, 0], tarr[:, 1], :] = filled
    return GridDataset(
        dataset.aod.copy(),
        dataset.meteorology.copy(),
        aq,
        dataset.station_mask.copy(),
        None if dataset.planted_labels is None else dataset.planted_labels.copy(),
    )


def make_folds(dataset: GridDataset, seed: int) -> list[StationFold]:
    """Partition station cells into 5 near-equal folds, deterministically."""
    cells = dataset.station_cells()
    if len(cells) < 10:
        raise ProtocolError(
            f"make_folds: need >=10 station cells, got {len(cells)}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(cells))
    shuffled = [cells[i] for i in order]
    parts = np.array_split(np.arange(len(cells)), 5)
    folds = []
    for fid, part in enumerate(parts):
        target = [shuffled[i] for i in part]
        tset = set(target)
        folds.append(
            StationFold(
                fold_id=fid,
                target_cells=target,
                input_cells=[c for c in shuffled if c not in tset],
            )
        )
    return folds
