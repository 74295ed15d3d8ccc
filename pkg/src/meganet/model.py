"""Two-stage multigraph message-passing layers and the full model.

Each layer first reduces parallel edges at artificial aggregation sites
(one per distinct (src, dst) pair), then aggregates one message per
distinct in-neighbor at the destination node. The bi-directional variant
runs the same machinery over the reversed edge multiset so nodes also hear
from their outgoing neighbors. A single-stage layer (all edges aggregated
at the node in one go) is kept as the baseline.

The forward pass records caches; model_backward replays them in reverse
for exact gradients, including through max/min (lowest-index tie-break),
mean, std and the log-degree-scaled aggregator.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .agg import (
    AggSpec,
    GroupedFeatures,
    reduce_or_default_with_vjp,
    segment_reduce_with_vjp,
)
from .graph import Multigraph, ReverseIndex, SupportIndex, build_groups
from .nn import Mlp, ParamGrads, init_mlp, mlp_backward, mlp_forward


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture switches and latent widths."""

    num_layers: int = 2
    bidirectional: bool = True
    ego_ids: bool = False
    edge_agg: AggSpec = AggSpec("sum")
    node_agg: AggSpec = AggSpec("sum")
    readout: str = "node"          # "node" or "edge"
    two_stage: bool = True         # False selects the single-stage baseline
    post_agg_mlp: bool = True      # MLP after the multi-edge reduction
    hidden_node: int = 16
    hidden_edge: int = 16
    mlp_hidden: int = 16
    dropout: float = 0.0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ModelError("num_layers must be at least 1")
        if self.readout not in ("node", "edge"):
            raise ModelError(f"unknown readout {self.readout!r}")

    def to_dict(self) -> dict:
        d = {
            "num_layers": self.num_layers,
            "bidirectional": self.bidirectional,
            "ego_ids": self.ego_ids,
            "edge_agg": _agg_to_dict(self.edge_agg),
            "node_agg": _agg_to_dict(self.node_agg),
            "readout": self.readout,
            "two_stage": self.two_stage,
            "post_agg_mlp": self.post_agg_mlp,
            "hidden_node": self.hidden_node,
            "hidden_edge": self.hidden_edge,
            "mlp_hidden": self.mlp_hidden,
            "dropout": self.dropout,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["edge_agg"] = _agg_from_dict(d["edge_agg"])
        d["node_agg"] = _agg_from_dict(d["node_agg"])
        return cls(**d)


def _agg_to_dict(a: AggSpec) -> dict:
    return {
        "kind": a.kind,
        "pna_stats": list(a.pna_stats),
        "pna_scalers": list(a.pna_scalers),
        "mean_log_degree": a.mean_log_degree,
    }


def _agg_from_dict(d: dict) -> AggSpec:
    return AggSpec(
        kind=d["kind"],
        pna_stats=tuple(d.get("pna_stats", ("mean", "min", "max", "std"))),
        pna_scalers=tuple(d.get("pna_scalers",
                                ("identity", "amplification", "attenuation"))),
        mean_log_degree=float(d.get("mean_log_degree", 1.0)),
    )


@dataclass
class LayerParams:
    """Weights of one message-passing layer."""

    msg_net: Mlp                       # builds messages from [x_i || h_ij]
    node_update_net: Mlp               # updates x from [x_j || a_j (|| a_rev_j)]
    edge_update_net: Mlp               # updates e from [x_i || e_ijp || h_ij]
    agg_edge: AggSpec
    agg_node: AggSpec
    edge_agg_mlp: Mlp | None = None
    rev_msg_net: Mlp | None = None
    rev_edge_update_net: Mlp | None = None
    rev_edge_agg_mlp: Mlp | None = None


@dataclass
class LayerState:
    """Latents flowing between layers."""

    x: np.ndarray                      # [n, D_h_n]
    e: np.ndarray                      # [m, D_h_e]
    e_rev: np.ndarray | None = None    # [m, D_h_e]
    h: np.ndarray | None = None        # [S, d_h], forward aggregation sites
    h_rev: np.ndarray | None = None


def add_ego_ids(node_features: np.ndarray, roots) -> np.ndarray:
    """Append a binary root-marker column."""
    roots = np.asarray(roots, dtype=np.int64)
    col = np.zeros((node_features.shape[0], 1))
    if roots.size:
        if roots.min() < 0 or roots.max() >= node_features.shape[0]:
            raise ModelError("root index out of range")
        col[roots] = 1.0
    return np.concatenate([node_features, col], axis=1)


# ---------------------------------------------------------------------------
# stage primitives (forward + cached backward)
# ---------------------------------------------------------------------------

def _scatter_rows(target: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> None:
    np.add.at(target, idx, rows)


def _edge_stage_fwd(e, supp: SupportIndex, agg: AggSpec, agg_mlp: Mlp | None,
                    train, seed):
    gathered = e[supp.group_order]
    gf = GroupedFeatures(gathered, supp.group_offsets)
    h_raw, vjp = segment_reduce_with_vjp(agg, gf, degrees=supp.multiplicity)
    if agg_mlp is not None:
        h, mlp_cache = mlp_forward(agg_mlp, h_raw, train, seed)
    else:
        h, mlp_cache = h_raw, None
    cache = {"supp": supp, "vjp": vjp, "mlp": agg_mlp, "mlp_cache": mlp_cache,
             "e_shape": e.shape}
    return h, cache


def _edge_stage_bwd(cache, gh, store):
    agg_mlp = cache["mlp"]
    if agg_mlp is not None:
        gh, grads = mlp_backward(agg_mlp, cache["mlp_cache"], gh)
        store.add(agg_mlp, grads)
    gvals = cache["vjp"](gh)
    ge = np.zeros(cache["e_shape"])
    ge[cache["supp"].group_order] = gvals
    return ge


def _node_stage_fwd(x, h, supp: SupportIndex, msg_net: Mlp, agg: AggSpec,
                    train, seed):
    src = supp.supp_src
    msg_in = np.concatenate([x[src], h], axis=1)
    msg, msg_cache = mlp_forward(msg_net, msg_in, train, seed)
    gathered = msg[supp.in_order]
    gf = GroupedFeatures(gathered, supp.in_offsets)
    a, vjp = reduce_or_default_with_vjp(agg, gf, supp.num_nodes)
    cache = {"supp": supp, "msg_net": msg_net, "msg_cache": msg_cache,
             "vjp": vjp, "x_width": x.shape[1], "n": x.shape[0],
             "h_shape": h.shape}
    return a, cache


def _node_stage_bwd(cache, ga, store):
    supp = cache["supp"]
    gvals = cache["vjp"](ga)
    gmsg = np.zeros((supp.num_pairs, gvals.shape[1]))
    gmsg[supp.in_order] = gvals
    gmsg_in, grads = mlp_backward(cache["msg_net"], cache["msg_cache"], gmsg)
    store.add(cache["msg_net"], grads)
    xw = cache["x_width"]
    gx = np.zeros((cache["n"], xw))
    _scatter_rows(gx, supp.supp_src, gmsg_in[:, :xw])
    gh = gmsg_in[:, xw:]
    return gx, gh


def _edge_update_fwd(x, e, h, srcs, edge_to_supp, net: Mlp, train, seed):
    inp = np.concatenate([x[srcs], e, h[edge_to_supp]], axis=1)
    out, net_cache = mlp_forward(net, inp, train, seed)
    cache = {"net": net, "net_cache": net_cache, "srcs": srcs,
             "edge_to_supp": edge_to_supp,
             "widths": (x.shape[1], e.shape[1], h.shape[1]),
             "n": x.shape[0], "s": h.shape[0]}
    return out, cache


def _edge_update_bwd(cache, gout, store):
    ginp, grads = mlp_backward(cache["net"], cache["net_cache"], gout)
    store.add(cache["net"], grads)
    xw, ew, hw = cache["widths"]
    gx = np.zeros((cache["n"], xw))
    _scatter_rows(gx, cache["srcs"], ginp[:, :xw])
    ge = ginp[:, xw:xw + ew]
    gh = np.zeros((cache["s"], hw))
    _scatter_rows(gh, cache["edge_to_supp"], ginp[:, xw + ew:])
    return gx, ge, gh


class GradStore:
    """Accumulates ParamGrads per Mlp instance."""

    def __init__(self):
        self._by_id: dict[int, ParamGrads] = {}

    def add(self, mlp: Mlp, grads: ParamGrads) -> None:
        existing = self._by_id.get(id(mlp))
        if existing is None:
            self._by_id[id(mlp)] = grads
        else:
            existing.add_(grads)

    def get(self, mlp: Mlp) -> ParamGrads | None:
        return self._by_id.get(id(mlp))


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class Model:
    """Full message-passing model with encoders, L layers and a readout head."""

    def __init__(self, config: ModelConfig, d_node_in: int, d_edge_in: int,
                 seed: int = 0):
        self.config = config
        self.d_node_in = d_node_in
        self.d_edge_in = d_edge_in
        self.seed = seed
        rng = np.random.default_rng(seed)
        dn, de = config.hidden_node, config.hidden_edge
        hid = config.mlp_hidden
        do = config.dropout

        enc_in = d_node_in + (1 if config.ego_ids else 0)
        self.node_encoder = init_mlp([enc_in, dn], rng, activation="identity")
        self.edge_encoder = init_mlp([d_edge_in, de], rng, activation="identity")

        self.layers: list[LayerParams] = []
        for _ in range(config.num_layers):
            if config.two_stage:
                d_h_raw = config.edge_agg.out_width(de)
                agg_mlp = (init_mlp([d_h_raw, hid, de], rng, dropout=do)
                           if config.post_agg_mlp else None)
                d_h = de if agg_mlp is not None else d_h_raw
                w_a = config.node_agg.out_width(dn)
                gv_in = dn + w_a + (w_a if config.bidirectional else 0)
                lp = LayerParams(
                    msg_net=init_mlp([dn + d_h, hid, dn], rng, dropout=do),
                    node_update_net=init_mlp([gv_in, hid, dn], rng, dropout=do),
                    edge_update_net=init_mlp([dn + de + d_h, hid, de], rng,
                                             dropout=do),
                    agg_edge=config.edge_agg,
                    agg_node=config.node_agg,
                    edge_agg_mlp=agg_mlp,
                )
                if config.bidirectional:
                    lp.rev_msg_net = init_mlp([dn + d_h, hid, dn], rng, dropout=do)
                    lp.rev_edge_update_net = init_mlp([dn + de + d_h, hid, de],
                                                      rng, dropout=do)
                    lp.rev_edge_agg_mlp = (init_mlp([d_h_raw, hid, de], rng,
                                                    dropout=do)
                                           if config.post_agg_mlp else None)
            else:
                w_a = config.node_agg.out_width(dn)
                lp = LayerParams(
                    msg_net=init_mlp([dn + de, hid, dn], rng, dropout=do),
                    node_update_net=init_mlp([dn + w_a, hid, dn], rng, dropout=do),
                    edge_update_net=init_mlp([dn + de + dn, hid, de], rng,
                                             dropout=do),
                    agg_edge=config.edge_agg,
                    agg_node=config.node_agg,
                )
            self.layers.append(lp)

        if config.readout == "node":
            self.readout_net = init_mlp([dn, hid, 1], rng, dropout=do)
        else:
            self.readout_net = init_mlp([2 * dn + de, hid, 1], rng, dropout=do)

        self._mlps: list[tuple[str, Mlp]] = []
        self._register()

    def _register(self) -> None:
        self._mlps = [("node_encoder", self.node_encoder),
                      ("edge_encoder", self.edge_encoder)]
        for li, lp in enumerate(self.layers):
            for name in ("msg_net", "node_update_net", "edge_update_net",
                         "edge_agg_mlp", "rev_msg_net", "rev_edge_update_net",
                         "rev_edge_agg_mlp"):
                net = getattr(lp, name)
                if net is not None:
                    self._mlps.append((f"layer{li}.{name}", net))
        self._mlps.append(("readout", self.readout_net))

    # -- parameter plumbing -------------------------------------------------

    def named_mlps(self) -> list[tuple[str, Mlp]]:
        return list(self._mlps)

    def flat_params(self) -> np.ndarray:
        chunks = []
        for _, m in self._mlps:
            for w in m.weights:
                chunks.append(w.ravel())
            for b in m.biases:
                chunks.append(b.ravel())
        return np.concatenate(chunks) if chunks else np.zeros(0)

    def set_flat_params(self, v: np.ndarray) -> None:
        total = sum(w.size for _, m in self._mlps for w in m.weights)
        total += sum(b.size for _, m in self._mlps for b in m.biases)
        if v.size != total:
            raise ModelError("flat parameter vector has the wrong length")
        pos = 0
        for _, m in self._mlps:
            for w in m.weights:
                w[...] = v[pos:pos + w.size].reshape(w.shape)
                pos += w.size
            for b in m.biases:
                b[...] = v[pos:pos + b.size]
                pos += b.size

    def flat_grads(self, store: GradStore) -> np.ndarray:
        chunks = []
        for _, m in self._mlps:
            g = store.get(m)
            if g is None:
                g = ParamGrads.zeros_like(m)
            for w in g.weights:
                chunks.append(w.ravel())
            for b in g.biases:
                chunks.append(b.ravel())
        return np.concatenate(chunks) if chunks else np.zeros(0)

    # -- forward ------------------------------------------------------------

    def forward(self, g: Multigraph, supp: SupportIndex,
                rev: ReverseIndex | None = None, roots=None,
                train_mode: bool = False, seed: int = 0):
        """Returns (logits, cache). Logits are per node or per edge."""
        cfg = self.config
        if cfg.two_stage and cfg.bidirectional and rev is None:
            raise ModelError("bidirectional model needs a ReverseIndex")
        if cfg.ego_ids and roots is None:
            roots = np.zeros(0, dtype=np.int64)

        seq = _SeedSequence(seed)
        cache: dict = {"g": g, "supp": supp, "rev": rev, "stages": []}

        feats = g.node_features
        if cfg.ego_ids:
            feats = add_ego_ids(feats, roots)
        x, c_nenc = mlp_forward(self.node_encoder, feats, train_mode, seq())
        e, c_eenc = mlp_forward(self.edge_encoder, g.edge_features,
                                train_mode, seq())
        cache["enc"] = (c_nenc, c_eenc)
        e_rev = e.copy() if (cfg.two_stage and cfg.bidirectional) else None

        if not cfg.two_stage:
            cache["edge_in_groups"] = build_groups(g.dst, g.num_nodes)

        for lp in self.layers:
            if cfg.two_stage:
                x, e, e_rev, c = self._two_stage_layer_fwd(
                    lp, x, e, e_rev, supp, rev, train_mode, seq)
            else:
                x, e, c = self._single_stage_layer_fwd(
                    lp, x, e, g, cache["edge_in_groups"], train_mode, seq)
            cache["stages"].append(c)

        state = LayerState(x=x, e=e, e_rev=e_rev)
        cache["final_state"] = state

        if cfg.readout == "node":
            logits2d, c_ro = mlp_forward(self.readout_net, x, train_mode, seq())
        else:
            ro_in = np.concatenate([x[g.src], e, x[g.dst]], axis=1)
            logits2d, c_ro = mlp_forward(self.readout_net, ro_in,
                                         train_mode, seq())
        cache["readout"] = c_ro
        return logits2d[:, 0], cache

    def _two_stage_layer_fwd(self, lp, x, e, e_rev, supp, rev, train, seq):
        c: dict = {"lp": lp, "bidir": self.config.bidirectional}
        h, c["h"] = _edge_stage_fwd(e, supp, lp.agg_edge, lp.edge_agg_mlp,
                                    train, seq())
        a, c["a"] = _node_stage_fwd(x, h, supp, lp.msg_net, lp.agg_node,
                                    train, seq())
        parts = [x, a]
        if self.config.bidirectional:
            rsupp = rev.support
            h_rev, c["h_rev"] = _edge_stage_fwd(e_rev, rsupp, lp.agg_edge,
                                                lp.rev_edge_agg_mlp, train, seq())
            a_rev, c["a_rev"] = _node_stage_fwd(x, h_rev, rsupp, lp.rev_msg_net,
                                                lp.agg_node, train, seq())
            parts.append(a_rev)
        gv_in = np.concatenate(parts, axis=1)
        x1, c["gv"] = mlp_forward(lp.node_update_net, gv_in, train, seq())

        e1, c["ge"] = _edge_update_fwd(x, e, h, supp.supp_src[supp.edge_to_supp],
                                       supp.edge_to_supp, lp.edge_update_net,
                                       train, seq())
        er1 = None
        if self.config.bidirectional:
            rsupp = rev.support
            er1, c["gre"] = _edge_update_fwd(
                x, e_rev, h_rev, rsupp.supp_src[rsupp.edge_to_supp],
                rsupp.edge_to_supp, lp.rev_edge_update_net, train, seq())
        c["widths"] = (x.shape[1], a.shape[1])
        return x1, e1, er1, c

    def _single_stage_layer_fwd(self, lp, x, e, g, in_groups, train, seq):
        c: dict = {"lp": lp}
        order, offsets = in_groups
        msg_in = np.concatenate([x[g.src], e], axis=1)
        msg, c["msg"] = mlp_forward(lp.msg_net, msg_in, train, seq())
        gf = GroupedFeatures(msg[order], offsets)
        a, c["vjp"] = reduce_or_default_with_vjp(lp.agg_node, gf, g.num_nodes)
        gv_in = np.concatenate([x, a], axis=1)
        x1, c["gv"] = mlp_forward(lp.node_update_net, gv_in, train, seq())
        ge_in = np.concatenate([x[g.src], e, x[g.dst]], axis=1)
        e1, c["ge"] = mlp_forward(lp.edge_update_net, ge_in, train, seq())
        c["shapes"] = (x.shape, e.shape, a.shape[1])
        c["groups"] = (order, offsets)
        c["g"] = g
        return x1, e1, c

    # -- backward -----------------------------------------------------------

    def backward(self, cache, logit_grads) -> GradStore:
        """Exact reverse-mode gradients; returns the per-MLP gradient store."""
        cfg = self.config
        g: Multigraph = cache["g"]
        store = GradStore()
        gl = np.asarray(logit_grads, dtype=np.float64).reshape(-1, 1)

        gro_in, grads = mlp_backward(self.readout_net, cache["readout"], gl)
        store.add(self.readout_net, grads)
        state: LayerState = cache["final_state"]
        if cfg.readout == "node":
            gx = gro_in
            ge = np.zeros_like(state.e)
        else:
            dn = state.x.shape[1]
            gx = np.zeros_like(state.x)
            _scatter_rows(gx, g.src, gro_in[:, :dn])
            ge = gro_in[:, dn:dn + state.e.shape[1]]
            _scatter_rows(gx, g.dst, gro_in[:, dn + state.e.shape[1]:])
        ger = np.zeros_like(state.e_rev) if state.e_rev is not None else None

        for c in reversed(cache["stages"]):
            if cfg.two_stage:
                gx, ge, ger = self._two_stage_layer_bwd(c, gx, ge, ger, store)
            else:
                gx, ge = self._single_stage_layer_bwd(c, gx, ge, store)

        c_nenc, c_eenc = cache["enc"]
        _, grads = mlp_backward(self.node_encoder, c_nenc, gx)
        store.add(self.node_encoder, grads)
        ge_total = ge if ger is None else ge + ger
        _, grads = mlp_backward(self.edge_encoder, c_eenc, ge_total)
        store.add(self.edge_encoder, grads)
        return store

    def _two_stage_layer_bwd(self, c, gx1, ge1, ger1, store):
        lp: LayerParams = c["lp"]
        xw, aw = c["widths"]
        gh_rev = None

        gx0 = np.zeros((gx1.shape[0], xw))
        if c["bidir"]:
            gxp, ger0, gh_rev = _edge_update_bwd(c["gre"], ger1, store)
            gx0 += gxp
        else:
            ger0 = None
        gxp, ge0, gh = _edge_update_bwd(c["ge"], ge1, store)
        gx0 += gxp

        ggv_in, grads = mlp_backward(lp.node_update_net, c["gv"], gx1)
        store.add(lp.node_update_net, grads)
        gx0 += ggv_in[:, :xw]
        ga = ggv_in[:, xw:xw + aw]
        if c["bidir"]:
            ga_rev = ggv_in[:, xw + aw:]
            gxp, ghp = _node_stage_bwd(c["a_rev"], ga_rev, store)
            gx0 += gxp
            gh_rev += ghp

        gxp, ghp = _node_stage_bwd(c["a"], ga, store)
        gx0 += gxp
        gh += ghp

        ge0 += _edge_stage_bwd(c["h"], gh, store)
        if c["bidir"]:
            ger0 += _edge_stage_bwd(c["h_rev"], gh_rev, store)
        return gx0, ge0, ger0

    def _single_stage_layer_bwd(self, c, gx1, ge1, store):
        lp: LayerParams = c["lp"]
        g: Multigraph = c["g"]
        x_shape, e_shape, aw = c["shapes"]
        order, _ = c["groups"]
        xw = x_shape[1]

        gge_in, grads = mlp_backward(lp.edge_update_net, c["ge"], ge1)
        store.add(lp.edge_update_net, grads)
        gx0 = np.zeros(x_shape)
        _scatter_rows(gx0, g.src, gge_in[:, :xw])
        ge0 = gge_in[:, xw:xw + e_shape[1]]
        _scatter_rows(gx0, g.dst, gge_in[:, xw + e_shape[1]:])

        ggv_in, grads = mlp_backward(lp.node_update_net, c["gv"], gx1)
        store.add(lp.node_update_net, grads)
        gx0 += ggv_in[:, :xw]
        ga = ggv_in[:, xw:]

        gvals = c["vjp"](ga)
        gmsg = np.zeros((e_shape[0], gvals.shape[1]))
        gmsg[order] = gvals
        gmsg_in, grads = mlp_backward(lp.msg_net, c["msg"], gmsg)
        store.add(lp.msg_net, grads)
        _scatter_rows(gx0, g.src, gmsg_in[:, :xw])
        ge0 += gmsg_in[:, xw:]
        return gx0, ge0


class _SeedSequence:
    """Deterministic per-call dropout seeds derived from a base seed."""

    def __init__(self, base: int):
        self.base = int(base)
        self.counter = 0

    def __call__(self) -> int:
        self.counter += 1
        return (self.base * 1000003 + self.counter) % (2 ** 63)


# ---------------------------------------------------------------------------
# standalone operation wrappers (evaluation mode, no dropout)
# ---------------------------------------------------------------------------

def edge_stage(state: LayerState, supp: SupportIndex, params: LayerParams):
    """Multi-edge aggregation of the current edge latents."""
    h, _ = _edge_stage_fwd(state.e, supp, params.agg_edge, params.edge_agg_mlp,
                           False, 0)
    return h


def node_stage(state: LayerState, supp: SupportIndex, params: LayerParams):
    """Node-level aggregation and unidirectional node update."""
    h = state.h if state.h is not None else edge_stage(state, supp, params)
    a, _ = _node_stage_fwd(state.x, h, supp, params.msg_net, params.agg_node,
                           False, 0)
    gv_in = np.concatenate([state.x, a], axis=1)
    x_next, _ = mlp_forward(params.node_update_net, gv_in)
    return a, x_next


def edge_update(state: LayerState, supp: SupportIndex, params: LayerParams):
    """Per-edge latent update from pre-update node features."""
    h = state.h if state.h is not None else edge_stage(state, supp, params)
    srcs = supp.supp_src[supp.edge_to_supp]
    e_next, _ = _edge_update_fwd(state.x, state.e, h, srcs, supp.edge_to_supp,
                                 params.edge_update_net, False, 0)
    return e_next


def bidirectional_layer(state: LayerState, supp: SupportIndex,
                        rev: ReverseIndex, params: LayerParams) -> LayerState:
    """One full bi-directional layer on explicit state."""
    if params.rev_msg_net is None or params.rev_edge_update_net is None:
        raise ModelError("layer params carry no reverse networks")
    h, _ = _edge_stage_fwd(state.e, supp, params.agg_edge, params.edge_agg_mlp,
                           False, 0)
    a, _ = _node_stage_fwd(state.x, h, supp, params.msg_net, params.agg_node,
                           False, 0)
    rsupp = rev.support
    h_rev, _ = _edge_stage_fwd(state.e_rev, rsupp, params.agg_edge,
                               params.rev_edge_agg_mlp, False, 0)
    a_rev, _ = _node_stage_fwd(state.x, h_rev, rsupp, params.rev_msg_net,
                               params.agg_node, False, 0)
    gv_in = np.concatenate([state.x, a, a_rev], axis=1)
    x_next, _ = mlp_forward(params.node_update_net, gv_in)
    e_next, _ = _edge_update_fwd(state.x, state.e, h,
                                 supp.supp_src[supp.edge_to_supp],
                                 supp.edge_to_supp, params.edge_update_net,
                                 False, 0)
    er_next, _ = _edge_update_fwd(state.x, state.e_rev, h_rev,
                                  rsupp.supp_src[rsupp.edge_to_supp],
                                  rsupp.edge_to_supp,
                                  params.rev_edge_update_net, False, 0)
    return LayerState(x=x_next, e=e_next, e_rev=er_next, h=h, h_rev=h_rev)


def single_stage_layer(state: LayerState, g: Multigraph,
                       params: LayerParams) -> LayerState:
    """Baseline layer: all incoming edges aggregated at the node in one stage."""
    order, offsets = build_groups(g.dst, g.num_nodes)
    msg_in = np.concatenate([state.x[g.src], state.e], axis=1)
    msg, _ = mlp_forward(params.msg_net, msg_in)
    gf = GroupedFeatures(msg[order], offsets)
    a, _ = reduce_or_default_with_vjp(params.agg_node, gf, g.num_nodes)
    gv_in = np.concatenate([state.x, a], axis=1)
    x_next, _ = mlp_forward(params.node_update_net, gv_in)
    ge_in = np.concatenate([state.x[g.src], state.e, state.x[g.dst]], axis=1)
    e_next, _ = mlp_forward(params.edge_update_net, ge_in)
    return LayerState(x=x_next, e=e_next)


CHECKPOINT_VERSION = 1


def save_checkpoint(model: Model, path) -> None:
    """JSON checkpoint: config echo plus per-MLP dims and row-major arrays."""
    import json

    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "d_node_in": model.d_node_in,
        "d_edge_in": model.d_edge_in,
        "seed": model.seed,
        "mlps": [
            {
                "name": name,
                "layer_dims": m.layer_dims,
                "activation": m.activation,
                "weights": [w.ravel().tolist() for w in m.weights],
                "biases": [b.tolist() for b in m.biases],
            }
            for name, m in model.named_mlps()
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> Model:
    import json

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version "
                         f"{payload.get('format_version')!r}")
    config = ModelConfig.from_dict(payload["config"])
    model = Model(config, payload["d_node_in"], payload["d_edge_in"],
                  seed=payload.get("seed", 0))
    by_name = {entry["name"]: entry for entry in payload["mlps"]}
    for name, m in model.named_mlps():
        entry = by_name.get(name)
        if entry is None or entry["layer_dims"] != m.layer_dims:
            raise ModelError(f"checkpoint does not match model structure "
                             f"at {name!r}")
        for w, flat in zip(m.weights, entry["weights"]):
            w[...] = np.asarray(flat).reshape(w.shape)
        for b, vals in zip(m.biases, entry["biases"]):
            b[...] = np.asarray(vals)
    return model


def model_forward(model: Model, g: Multigraph, supp: SupportIndex,
                  rev: ReverseIndex | None = None, roots=None,
                  train_mode: bool = False, seed: int = 0):
    return model.forward(g, supp, rev, roots=roots, train_mode=train_mode,
                         seed=seed)


def model_backward(model: Model, cache, logit_grads) -> GradStore:
    return model.backward(cache, logit_grads)
