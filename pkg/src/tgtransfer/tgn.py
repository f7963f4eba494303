"""Memory-based temporal graph network.

Every node carries a memory vector. An interaction (u, i, t) produces one raw
message per endpoint, MSG(m_self, m_other, timegap, edge_features), fed to a
GRU that overwrites that endpoint's memory; within a processing batch all
messages read batch-start memories and the latest message per node wins.

Node embeddings at time t start from projected static features plus current
memory and pass through layers of multi-head dot-product attention over the
k most recent strictly-earlier interactions, keyed on neighbor embedding,
encoded time gap, and edge features. A two-tower MLP decoder turns a pair of
embeddings into a link probability.

Training defers each batch's memory write until just before the next batch is
scored (values are unchanged by the delay: no optimizer step intervenes), so
the write happens on the autodiff tape and the message/GRU weights receive
gradients from the following batch's loss. The observable memory trajectory
is exactly the plain score-step-update schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np

from .numerics import tensor as T
from .numerics.checkpoint import read_blob, write_blob
from .numerics.nn import GruCell, Linear, Mlp, TimeEncoder
from .numerics.optim import Adam, make_optimizer
from .numerics.params import ParameterSet, xavier_uniform
from .temporal_graph import EventBatch, NeighborIndex, TemporalGraph, batch_iter, sample_negatives

UNKNOWN_ROW = 0


@dataclass
class TgnConfig:
    d_mem: int = 32
    d_time: int = 16
    d_feat: int = 32
    n_layers: int = 1
    n_heads: int = 2
    k_neighbors: int = 10
    batch_size: int = 200
    lr: float = 0.001
    context_dropout: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class MemoryState:
    """Per-node memory, last-update times, and the pending raw messages."""

    def __init__(self, memory: np.ndarray, last_update: np.ndarray, pending: EventBatch | None = None):
        self.memory = np.asarray(memory, dtype=np.float64)
        self.last_update = np.asarray(last_update, dtype=np.float64)
        self.pending = pending
        if self.memory.ndim != 2 or len(self.memory) != len(self.last_update):
            raise ValueError("memory and last_update sizes disagree")

    @classmethod
    def zeros(cls, num_nodes: int, d_mem: int) -> "MemoryState":
        return cls(np.zeros((num_nodes, d_mem)), np.zeros(num_nodes))

    @property
    def num_nodes(self) -> int:
        return len(self.memory)

    def copy(self) -> "MemoryState":
        return MemoryState(self.memory.copy(), self.last_update.copy(), self.pending)


class GraphContext(NamedTuple):
    """A graph bound to a model's vocabulary: neighbor index plus per-node
    embedding-table rows for the node's feature tokens."""

    graph: TemporalGraph
    index: NeighborIndex
    node_rows: list[np.ndarray]

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes


class TgnModel:
    """Parameters and forward passes; graph-independent given a vocabulary."""

    def __init__(self, config: TgnConfig, feature_vocab: list[str], edge_dim: int, rng: np.random.Generator):
        if config.d_mem % config.n_heads:
            raise ValueError("d_mem must be divisible by n_heads")
        self.config = config
        self.edge_dim = int(edge_dim)
        self.feature_vocab = list(feature_vocab)
        self._token_row = {tok: k + 1 for k, tok in enumerate(self.feature_vocab)}
        d, dt, df, de = config.d_mem, config.d_time, config.d_feat, self.edge_dim

        self.pset = ParameterSet()
        self.pset.add("feat.table", xavier_uniform(rng, df, df, (len(self.feature_vocab) + 1, df)))
        self.feat_proj = Linear("feat_proj", df, d)
        self.feat_proj.init_params(self.pset, rng)
        self.time_enc = TimeEncoder("time", dt)
        self.time_enc.init_params(self.pset, rng)
        self.msg_mlp = Mlp("msg", [2 * d + dt + de, d, d], activation="leaky_relu")
        self.msg_mlp.init_params(self.pset, rng)
        self.gru = GruCell("gru", d, d)
        self.gru.init_params(self.pset, rng)
        self.att_q: list[Linear] = []
        self.att_k: list[Linear] = []
        self.att_v: list[Linear] = []
        self.att_o: list[Linear] = []
        self.combine: list[Mlp] = []
        for layer in range(1, config.n_layers + 1):
            q = Linear(f"att{layer}.q", d + dt, d)
            k = Linear(f"att{layer}.k", d + dt + de, d)
            v = Linear(f"att{layer}.v", d + dt + de, d)
            o = Linear(f"att{layer}.o", d, d)
            c = Mlp(f"combine{layer}", [2 * d, d, d], activation="leaky_relu")
            for mod in (q, k, v, o, c):
                mod.init_params(self.pset, rng)
            self.att_q.append(q)
            self.att_k.append(k)
            self.att_v.append(v)
            self.att_o.append(o)
            self.combine.append(c)
        self.decoder = Mlp("dec", [2 * d, d, 1], activation="leaky_relu")
        self.decoder.init_params(self.pset, rng)

    # -- vocabulary and graph binding ----------------------------------------

    def token_rows(self, tokens: list[str]) -> np.ndarray:
        return np.array([self._token_row.get(t, UNKNOWN_ROW) for t in tokens], dtype=np.int64)

    def bind_graph(self, graph: TemporalGraph, index: NeighborIndex | None = None) -> GraphContext:
        """Map the graph's feature tokens into this model's embedding rows."""
        if graph.edge_feature_dim != self.edge_dim:
            raise ValueError(
                f"edge feature dim {graph.edge_feature_dim} does not match model {self.edge_dim}"
            )
        vocab_rows = self.token_rows(graph.feature_vocab)
        node_rows = [
            vocab_rows[feats] if feats.size else np.zeros(0, dtype=np.int64)
            for feats in (*graph.user_features, *graph.item_features)
        ]
        return GraphContext(graph, index or NeighborIndex(graph), node_rows)

    # -- forward pieces ---------------------------------------------------------

    def node_static_features(self, ctx: GraphContext, nodes: np.ndarray) -> T.Tensor:
        """Mean feature embedding per node, projected to memory width."""
        rows = [ctx.node_rows[int(n)] for n in nodes]
        counts = np.array([max(len(r), 1) for r in rows], dtype=np.float64)
        flat = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        if flat.size == 0:
            mean = T.constant(np.zeros((len(nodes), self.config.d_feat)))
        else:
            seg = np.repeat(np.arange(len(nodes)), [len(r) for r in rows])
            emb = T.gather(self.pset["feat.table"], flat)
            mean = T.segment_sum(emb, seg, len(nodes)) * T.constant(1.0 / counts[:, None])
        return self.feat_proj(self.pset, mean)

    def embed(self, ctx: GraphContext, mem: T.Tensor, nodes: np.ndarray, ts: np.ndarray, layer: int | None = None, trace=None, hide: np.ndarray | None = None) -> T.Tensor:
        """h^layer(t) for each (node, t) query; layer defaults to config.

        `hide` marks query rows whose neighbor context is masked out at the
        top layer (training-time context dropout); they fall back to the
        empty-neighborhood path.
        """
        cfg = self.config
        layer = cfg.n_layers if layer is None else layer
        nodes = np.asarray(nodes, dtype=np.int64)
        ts = np.asarray(ts, dtype=np.float64)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= ctx.num_nodes):
            raise KeyError("embedding query for unknown node")
        if layer == 0:
            return self.node_static_features(ctx, nodes) + T.gather(mem, nodes)

        b, k = len(nodes), cfg.k_neighbors
        d, heads = cfg.d_mem, cfg.n_heads
        dh = d // heads
        h_self = self.embed(ctx, mem, nodes, ts, layer - 1, trace)
        nbr_ids, nbr_times, nbr_ords, mask = ctx.index.batch_neighbors(nodes, ts, k)
        if hide is not None:
            mask = mask * (1.0 - np.asarray(hide, dtype=np.float64))[:, None]
        flat_ids = nbr_ids.reshape(-1)
        flat_ts = np.repeat(ts, k)
        h_nbr = self.embed(ctx, mem, flat_ids, flat_ts, layer - 1, trace)
        dt = flat_ts - nbr_times.reshape(-1)
        if dt.size and dt.min() < -1e-12:
            raise ValueError("neighbor newer than query time")
        phi = self.time_enc(self.pset, dt)
        x_uv = T.constant(ctx.index.edge_features_for(nbr_ords.reshape(-1)))
        kv_in = T.concat([h_nbr, phi, x_uv], axis=1)
        q_in = T.concat([h_self, self.time_enc(self.pset, np.zeros(b))], axis=1)

        li = layer - 1
        q = self.att_q[li](self.pset, q_in).reshape((b, 1, heads, dh))
        kk = self.att_k[li](self.pset, kv_in).reshape((b, k, heads, dh))
        vv = self.att_v[li](self.pset, kv_in).reshape((b, k, heads, dh))
        scores = T.tensor_sum(q * kk, axis=3) * (1.0 / np.sqrt(dh))  # (b, k, heads)
        scores = scores + T.constant((mask - 1.0)[:, :, None] * 1e30)
        alpha = T.softmax(scores, axis=1)
        if trace is not None:
            trace.append({"layer": layer, "alpha": alpha.data.copy(), "mask": mask.copy()})
        context = T.tensor_sum(alpha.reshape((b, k, heads, 1)) * vv, axis=1)  # (b, heads, dh)
        context = self.att_o[li](self.pset, context.reshape((b, d)))
        has_nbr = (mask.max(axis=1) > 0).astype(np.float64)
        context = context * T.constant(has_nbr[:, None])
        return self.combine[li](self.pset, T.concat([h_self, context], axis=1))

    def score_pairs(self, ctx: GraphContext, mem: T.Tensor, users: np.ndarray, items: np.ndarray, ts: np.ndarray, trace=None, hide_users: np.ndarray | None = None, hide_items: np.ndarray | None = None) -> T.Tensor:
        """Link probabilities for (user, item, t) triples; items are global ids."""
        h_u = self.embed(ctx, mem, users, ts, trace=trace, hide=hide_users)
        h_i = self.embed(ctx, mem, items, ts, trace=trace, hide=hide_items)
        logits = self.decoder(self.pset, T.concat([h_u, h_i], axis=1))
        return T.sigmoid(logits.reshape((len(users),)))

    def predict_link(self, ctx: GraphContext, state: MemoryState, user: int, item_global: int, t: float) -> float:
        with T.no_grad():
            mem = T.constant(state.memory)
            p = self.score_pairs(ctx, mem, np.array([user]), np.array([item_global]), np.array([t]))
        return float(p.data[0])

    # -- memory updates ------------------------------------------------------------

    def batch_updates(self, mem: T.Tensor, last_update: np.ndarray, batch: EventBatch, num_users: int):
        """New memory rows for a batch of events.

        Both endpoints of every event receive a message computed from
        batch-start memories; per node only its latest message in the batch
        survives. Returns (nodes ascending, new row tensor, new last_update).
        """
        items_g = batch.items + num_users
        ev_nodes = np.concatenate([batch.users, items_g])
        ev_partner = np.concatenate([items_g, batch.users])
        ev_times = np.concatenate([batch.times, batch.times])
        ev_feats = np.concatenate([batch.edge_features, batch.edge_features], axis=0)

        dt_all = ev_times - last_update[ev_nodes]
        if dt_all.size and dt_all.min() < 0:
            raise ValueError("event time precedes a node's last memory update")

        # last message per node: scan positions in reverse, unique keeps first
        rev = ev_nodes[::-1]
        uniq, rev_first = np.unique(rev, return_index=True)
        last_pos = len(ev_nodes) - 1 - rev_first

        m_self = T.gather(mem, ev_nodes[last_pos])
        m_other = T.gather(mem, ev_partner[last_pos])
        phi = self.time_enc(self.pset, dt_all[last_pos])
        msg_in = T.concat([m_self, m_other, phi, T.constant(ev_feats[last_pos])], axis=1)
        msg = self.msg_mlp(self.pset, msg_in)
        new_rows = self.gru(self.pset, msg, m_self)
        return uniq, new_rows, ev_times[last_pos]


def compute_message(model: TgnModel, m_self: np.ndarray, m_other: np.ndarray, dt: float, x_uv: np.ndarray) -> np.ndarray:
    """Raw message for one endpoint: MSG(m_self, m_other, timegap, edge feats)."""
    if dt < 0:
        raise ValueError("negative time gap: events processed out of order")
    with T.no_grad():
        phi = model.time_enc(model.pset, np.array([dt]))
        msg_in = T.concat(
            [
                T.constant(np.asarray(m_self)[None, :]),
                T.constant(np.asarray(m_other)[None, :]),
                phi,
                T.constant(np.asarray(x_uv, dtype=np.float64).reshape(1, -1)),
            ],
            axis=1,
        )
        return model.msg_mlp(model.pset, msg_in).data[0]


def update_memory(model: TgnModel, state: MemoryState, batch: EventBatch, num_users: int) -> MemoryState:
    """Apply one batch of events to a state immediately; returns a new state."""
    out = state.copy()
    with T.no_grad():
        mem = T.constant(state.memory)
        nodes, rows, new_last = model.batch_updates(mem, state.last_update, batch, num_users)
    out.memory[nodes] = rows.data
    out.last_update[nodes] = new_last
    return out


def flush_pending(model: TgnModel, ctx: GraphContext, state: MemoryState) -> MemoryState:
    """Apply any deferred batch with current parameters; returns a new state."""
    if state.pending is None:
        return state.copy()
    batch, cleared = state.pending, state.copy()
    cleared.pending = None
    out = update_memory(model, cleared, batch, ctx.graph.num_users)
    return out


def event_batch_of(g: TemporalGraph, start: int, end: int) -> EventBatch:
    return EventBatch(
        g.users[start:end], g.items[start:end], g.times[start:end],
        g.edge_features[start:end], np.arange(start, end, dtype=np.int64),
    )


def train_epoch(
    model: TgnModel,
    ctx: GraphContext,
    train_graph: TemporalGraph,
    init_state: MemoryState,
    opt,
    rng: np.random.Generator,
    batch_size: int | None = None,
) -> tuple[MemoryState, float]:
    """One pass over the training events; returns (end state, mean loss).

    The epoch starts from a copy of `init_state` (zeros for fresh training,
    or a transferred memory) and leaves `init_state` untouched.
    """
    if train_graph.num_events == 0:
        raise ValueError("empty training graph")
    bs = batch_size or model.config.batch_size
    num_users = ctx.graph.num_users
    state = init_state.copy()
    losses = []
    for batch in batch_iter(train_graph, bs):
        model.pset.zero_grads()
        mem = T.constant(state.memory)
        applied = None
        if state.pending is not None:
            nodes, rows, new_last = model.batch_updates(mem, state.last_update, state.pending, num_users)
            mem = T.scatter_rows(mem, nodes, rows)
            applied = (nodes, rows, new_last)

        items_g = batch.items + num_users
        neg_items = sample_negatives(batch.items, ctx.graph.num_items, rng) + num_users
        users2 = np.concatenate([batch.users, batch.users])
        cands = np.concatenate([items_g, neg_items])
        times2 = np.concatenate([batch.times, batch.times])
        hide_u = hide_i = None
        if model.config.context_dropout > 0.0:
            hide_u = rng.random(len(users2)) < model.config.context_dropout
            hide_i = rng.random(len(cands)) < model.config.context_dropout
        probs = model.score_pairs(ctx, mem, users2, cands, times2,
                                  hide_users=hide_u, hide_items=hide_i)
        labels = np.concatenate([np.ones(len(batch.users)), np.zeros(len(batch.users))])
        loss = T.bce_loss(probs, labels)
        T.backward(loss, params=model.pset.tensors())
        opt.step(model.pset)

        if applied is not None:
            nodes, rows, new_last = applied
            state.memory[nodes] = rows.data
            state.last_update[nodes] = new_last
        state.pending = batch
        losses.append(float(loss.data))
    state = flush_pending(model, ctx, state)
    return state, float(np.mean(losses))


def train(
    model: TgnModel,
    ctx: GraphContext,
    train_graph: TemporalGraph,
    epochs: int,
    rng: np.random.Generator,
    init_state: MemoryState | None = None,
    batch_size: int | None = None,
    optimizer=None,
) -> tuple[MemoryState, list[float]]:
    """Multi-epoch training; memory restarts from `init_state` every epoch."""
    base = init_state or MemoryState.zeros(ctx.num_nodes, model.config.d_mem)
    opt = optimizer or Adam(lr=model.config.lr)
    losses = []
    state = base.copy()
    for _ in range(epochs):
        state, loss = train_epoch(model, ctx, train_graph, base, opt, rng, batch_size)
        losses.append(loss)
    return state, losses


# -- checkpointing -------------------------------------------------------------------


def _pack_ragged(rows):
    lengths = np.array([len(r) for r in rows], dtype=np.int64)
    values = np.concatenate(rows) if len(rows) and lengths.sum() else np.zeros(0, dtype=np.int64)
    return values.astype(np.int64), lengths


def _unpack_ragged(values, lengths):
    out, pos = [], 0
    for n in lengths:
        out.append(values[pos : pos + int(n)].copy())
        pos += int(n)
    return out


class TgnCheckpoint(NamedTuple):
    model: TgnModel
    state: MemoryState
    optimizer: object
    graph_meta: dict
    graph_arrays: dict


def snapshot(
    model: TgnModel,
    state: MemoryState,
    optimizer,
    path,
    source_graph: TemporalGraph | None = None,
    train_pairs: tuple | None = None,
    extra_meta: dict | None = None,
) -> None:
    """Write params, memory, optimizer state, and optionally the source-graph
    summary (feature tables plus train-split pair counts) a later transfer
    run needs to rebuild the source side without the raw event log."""
    if state.pending is not None:
        raise ValueError("flush pending memory updates before snapshotting")
    arrays = dict(model.pset.state_arrays())
    arrays["memory.values"] = state.memory
    arrays["memory.last_update"] = state.last_update
    for key, val in optimizer.state_arrays().items():
        arrays[f"optim.{key}"] = val
    meta = {
        "kind": "tgn-checkpoint",
        "config": model.config.to_dict(),
        "edge_dim": model.edge_dim,
        "feature_vocab": model.feature_vocab,
        "optimizer": {"kind": optimizer.kind, "lr": optimizer.lr},
        "graph": None,
    }
    if extra_meta:
        meta.update(extra_meta)
    if source_graph is not None:
        if train_pairs is None:
            raise ValueError("source_graph requires train_pairs")
        pu, pi, pc = train_pairs
        uf_vals, uf_lens = _pack_ragged(source_graph.user_features)
        if_vals, if_lens = _pack_ragged(source_graph.item_features)
        meta["graph"] = {
            "num_users": source_graph.num_users,
            "num_items": source_graph.num_items,
            "feature_vocab": source_graph.feature_vocab,
        }
        arrays["graph.pair_users"] = np.asarray(pu, dtype=np.int64)
        arrays["graph.pair_items"] = np.asarray(pi, dtype=np.int64)
        arrays["graph.pair_counts"] = np.asarray(pc, dtype=np.int64)
        arrays["graph.user_feat_values"] = uf_vals
        arrays["graph.user_feat_lengths"] = uf_lens
        arrays["graph.item_feat_values"] = if_vals
        arrays["graph.item_feat_lengths"] = if_lens
    write_blob(path, meta, arrays)


def restore(path) -> TgnCheckpoint:
    meta, arrays = read_blob(path)
    if meta.get("kind") != "tgn-checkpoint":
        raise ValueError(f"{path} is not a tgn checkpoint")
    config = TgnConfig(**meta["config"])
    model = TgnModel(config, meta["feature_vocab"], meta["edge_dim"], np.random.default_rng(0))
    param_names = set(model.pset.names())
    model.pset.load_arrays({k: v for k, v in arrays.items() if k in param_names})
    state = MemoryState(arrays["memory.values"], arrays["memory.last_update"])
    optimizer = make_optimizer(meta["optimizer"]["kind"], meta["optimizer"]["lr"])
    opt_state = {k[len("optim."):]: v for k, v in arrays.items() if k.startswith("optim.")}
    if opt_state:
        optimizer.load_state(opt_state)
    graph_arrays = {k[len("graph."):]: v for k, v in arrays.items() if k.startswith("graph.")}
    if graph_arrays:
        graph_arrays["user_features"] = _unpack_ragged(
            graph_arrays.pop("user_feat_values"), graph_arrays.pop("user_feat_lengths")
        )
        graph_arrays["item_features"] = _unpack_ragged(
            graph_arrays.pop("item_feat_values"), graph_arrays.pop("item_feat_lengths")
        )
    return TgnCheckpoint(model, state, optimizer, meta.get("graph") or {}, graph_arrays)
