"""Full dual-view model assembly and its ablation variants."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNorm, ParamBundle, Tensor
from .correlation import (
    edge_representations,
    edge_weights,
    fully_connected_weights,
    init_edge_conv,
    init_edge_mlp,
    sparsify_topk,
    SupergridGraph,
)
from .errors import ConfigError
from .fusion import (
    combine_recon,
    estimate,
    fuse,
    init_estimation_head,
    recon_view_loss,
)
from .message_passing import (
    aggregate,
    g_update,
    init_g_update,
    init_update_mlp,
    s2g_update,
    update_supergrids,
)
from .supergrid import (
    build_assignment,
    build_assignment_from_logits,
    pool_supergrids,
)
from .temporal import encode_grid, init_temporal_encoder

VIEWS = ("aod", "met")
VARIANTS = (
    "full",
    "DSGNN-C",
    "DSGNN-DS",
    "DSGNN-SS",
    "DSGNN-LR",
    "DSGNN-S",
    "DSGNN-A",
    "DSGNN-M",
    "DSGNN-SG",
    "DSGNN-SWG",
    "DSGNN-FCG",
)


@dataclass
class AblationFlags:
    cnn_only: bool = False
    use_dynamic: bool = True
    use_static: bool = True
    aod_supergrids: bool = True
    met_supergrids: bool = True
    threshold: bool = True
    dense_assignment: bool = False
    graph_mode: str = "weighted"  # weighted | topk_binary | topk_weighted | ones

    def validate(self):
        if not self.cnn_only and not (self.use_dynamic or self.use_static):
            raise ConfigError(
                "contradictory ablation flags: both dynamic and static paths removed"
            )
        if self.graph_mode not in ("weighted", "topk_binary", "topk_weighted", "ones"):
            raise ConfigError(f"unknown graph mode: {self.graph_mode}")


def parse_variant(name: str) -> AblationFlags:
    name = "full" if name in ("full", "DSGNN") else name
    if name not in VARIANTS:
        raise ConfigError(
            f"unknown variant {name!r}; valid: {', '.join(VARIANTS)}"
        )
    flags = AblationFlags()
    if name == "DSGNN-C":
        flags.cnn_only = True
    elif name == "DSGNN-DS":
        flags.use_static = False
    elif name == "DSGNN-SS":
        flags.use_dynamic = False
    elif name == "DSGNN-LR":
        flags.threshold = False
    elif name == "DSGNN-S":
        flags.dense_assignment = True
    elif name == "DSGNN-A":
        flags.met_supergrids = False
    elif name == "DSGNN-M":
        flags.aod_supergrids = False
    elif name == "DSGNN-SG":
        flags.graph_mode = "topk_binary"
    elif name == "DSGNN-SWG":
        flags.graph_mode = "topk_weighted"
    elif name == "DSGNN-FCG":
        flags.graph_mode = "ones"
    flags.validate()
    return flags


@dataclass
class ModelConfig:
    h: int
    w: int
    tau: int = 6
    d: int = 32
    n_dyn: int = 5
    n_sta: int = 8
    rho: float = 0.4
    alpha: float = 0.3
    beta: float = 0.6
    gamma: float = 0.4
    lam: float = 0.6
    variant: str = "full"
    topk: int = 3

    @property
    def d_e(self):
        return self.d


@dataclass
class ForwardResult:
    estimate: Tensor                       # (H, W)
    recon: Tensor                          # scalar
    assignments: dict = field(default_factory=dict)  # (view, kind) -> AssignmentMatrix
    graphs: dict = field(default_factory=dict)       # (view, kind) -> SupergridGraph
    view_repr: dict = field(default_factory=dict)    # view -> (H*W, d) Tensor


class DSGNN:
    """Parameter container + forward pass for one model instance."""

    # input channel counts per view: (grid-representation window, dynamic window)
    _CHANNELS = {"aod": (7, 1), "met": (11, 5)}

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.flags = parse_variant(cfg.variant)
        self.params = ParamBundle()
        self.bn = {}
        rng = np.random.default_rng(seed)
        hw = cfg.h * cfg.w
        d, d_e = cfg.d, cfg.d_e
        for view in VIEWS:
            c_repr, c_dyn = self._CHANNELS[view]
            init_temporal_encoder(self.params, f"{view}.te_repr", rng, c_repr, cfg.tau, d)
            branches = 1
            if self._view_has_supergrids(view):
                if self.flags.use_dynamic:
                    init_temporal_encoder(self.params, f"{view}.te_dyn", rng, c_dyn, cfg.tau, d)
                    if self.flags.dense_assignment:
                        self.params.add(f"{view}.s_dyn_logits", 0.01 * rng.standard_normal((hw, cfg.n_dyn)))
                    else:
                        self.params.add(f"{view}.w_dyn", ad.glorot_uniform(rng, (d, cfg.n_dyn), d, cfg.n_dyn))
                    init_edge_mlp(self.params, f"{view}.edge_dyn", rng, d, d_e)
                    init_edge_conv(self.params, f"{view}.q_dyn", rng, d_e)
                    init_update_mlp(self.params, f"{view}.upd_dyn", rng, d, d_e)
                    self.params.add(f"{view}.gate_dyn", np.zeros(1))
                    branches += 1
                if self.flags.use_static:
                    if self.flags.dense_assignment:
                        self.params.add(f"{view}.s_sta_logits", 0.01 * rng.standard_normal((hw, cfg.n_sta)))
                    else:
                        self.params.add(f"{view}.w_sta", ad.glorot_uniform(rng, (d, cfg.n_sta), d, cfg.n_sta))
                    init_edge_mlp(self.params, f"{view}.edge_sta", rng, d, d_e)
                    init_edge_conv(self.params, f"{view}.q_sta", rng, d_e)
                    init_update_mlp(self.params, f"{view}.upd_sta", rng, d, d_e)
                    self.params.add(f"{view}.gate_sta", np.zeros(1))
                    branches += 1
            init_g_update(self.params, f"{view}.g", rng, branches * d, d)
            self.bn[view] = BatchNorm(d)
        init_estimation_head(self.params, "head", rng, d)

    def _view_has_supergrids(self, view: str) -> bool:
        if self.flags.cnn_only:
            return False
        return self.flags.aod_supergrids if view == "aod" else self.flags.met_supergrids

    # -- assignment + graph machinery per (view, kind) ---------------------

    def _assignment(self, view, kind, semantics):
        if self.flags.dense_assignment:
            return build_assignment_from_logits(
                self.params[f"{view}.s_{kind[:3]}_logits"], self.cfg.rho,
                kind=kind, view=view, threshold=self.flags.threshold,
            )
        return build_assignment(
            semantics, self.params[f"{view}.w_{kind[:3]}"], self.cfg.rho,
            kind=kind, view=view, threshold=self.flags.threshold,
        )

    def _graph_branch(self, view, kind, x, semantics, q_override=None):
        """One supergrid branch: assignment -> pool -> graph conv -> S2G.

        Pooled representations are divided by the supergrid occupancy so
        branch features live at the same scale as the cell features (raw
        pooled sums run ~H*W/N times larger and drown the convolutional path
        through the shared update). The branch output is multiplied by a
        learnable scalar gate initialized at zero, so the full model starts
        functionally identical to its convolution-only reduction and grows
        the supergrid contribution only where it lowers the loss.
        """
        short = kind[:3]
        assignment = self._assignment(view, kind, semantics)
        z = pool_supergrids(x, assignment)
        counts = ad.swap_last_two(ad.reduce_sum(assignment.s, axis=0, keepdims=True))
        z = ad.div(z, ad.add(counts, 1e-30))
        c = edge_representations(z, self.params, f"{view}.edge_{short}")
        mode = "ones" if q_override == "ones" else self.flags.graph_mode
        if mode == "ones":
            q = fully_connected_weights(assignment.n)
        else:
            q = edge_weights(c, self.params, f"{view}.q_{short}")
            if mode == "topk_binary":
                q = sparsify_topk(q, self.cfg.topk, weighted=False)
            elif mode == "topk_weighted":
                q = sparsify_topk(q, self.cfg.topk, weighted=True)
        graph = SupergridGraph(assignment.n, c, q, kind=kind, view=view)
        r = aggregate(graph)
        z_updated = update_supergrids(z, r, self.params, f"{view}.upd_{short}")
        x_prime = s2g_update(assignment, z_updated)
        x_prime = ad.mul(x_prime, self.params[f"{view}.gate_{short}"])
        return assignment, graph, x_prime

    def forward(self, windows: dict, e_sta: dict | None = None, training: bool = True,
                update_stats: bool = True, q_override=None) -> ForwardResult:
        """Run the model on one sample.

        `windows` holds numpy arrays 'aod' (tau,H,W,1), 'met' (tau,H,W,5),
        'aq' (tau,H,W,6); `e_sta` maps view -> (H*W, d) static semantics
        (required when the static path is active).
        """
        cfg = self.cfg
        result = ForwardResult(estimate=None, recon=Tensor(0.0))
        recon_views = {}
        updated = {}
        for view in VIEWS:
            own = windows["aod"] if view == "aod" else windows["met"]
            repr_window = np.concatenate([own, windows["aq"]], axis=-1)
            x = encode_grid(repr_window, self.params, f"{view}.te_repr")
            parts = []
            s_dyn = s_sta = e_dyn = e_sta_view = None
            if self._view_has_supergrids(view):
                if self.flags.use_dynamic:
                    e_dyn = encode_grid(own, self.params, f"{view}.te_dyn")
                    s_dyn, graph, x_dyn = self._graph_branch(
                        view, "dynamic", x, e_dyn, q_override
                    )
                    parts.append(x_dyn)
                    result.assignments[(view, "dynamic")] = s_dyn
                    result.graphs[(view, "dynamic")] = graph
                if self.flags.use_static:
                    if e_sta is None or view not in e_sta:
                        raise ConfigError(
                            f"static path active but no static semantics for view {view!r}"
                        )
                    e_sta_view = Tensor(e_sta[view])
                    s_sta, graph, x_sta = self._graph_branch(
                        view, "static", x, e_sta_view, q_override
                    )
                    parts.append(x_sta)
                    result.assignments[(view, "static")] = s_sta
                    result.graphs[(view, "static")] = graph
            parts.append(x)
            # Batch norm always normalizes with the current sample's spatial
            # statistics (deterministic at one window per forward). Running
            # stats lag badly while the gated supergrid branches shift the
            # feature distribution, which wrecked held-out evaluation.
            x_out = g_update(
                parts, cfg.h, cfg.w, self.params, f"{view}.g",
                self.bn[view], True, training and update_stats,
            )
            updated[view] = x_out
            result.view_repr[view] = x_out
            recon_views[view] = recon_view_loss(
                None if s_dyn is None else s_dyn.s,
                None if s_sta is None else s_sta.s,
                e_dyn, e_sta_view, cfg.beta,
            )
        result.recon = combine_recon(recon_views["aod"], recon_views["met"], cfg.gamma)
        fused = fuse(updated["aod"], updated["met"], cfg.alpha)
        result.estimate = estimate(fused, cfg.h, cfg.w, self.params, "head")
        return result

    # -- persistence -------------------------------------------------------

    def state_arrays(self) -> dict:
        """All learnable values + batch-norm running stats, as plain arrays."""
        out = {f"param:{k}": t.data.copy() for k, t in self.params.entries.items()}
        for view, bn in self.bn.items():
            out[f"bn:{view}:mean"] = bn.running_mean.copy()
            out[f"bn:{view}:var"] = bn.running_var.copy()
        return out

    def load_state_arrays(self, arrays: dict):
        for k, v in arrays.items():
            if k.startswith("param:"):
                self.params.entries[k[len("param:"):]].data[...] = v
            elif k.startswith("bn:"):
                _, view, which = k.split(":")
                if which == "mean":
                    self.bn[view].running_mean = np.asarray(v, dtype=np.float64).copy()
                else:
                    self.bn[view].running_var = np.asarray(v, dtype=np.float64).copy()
