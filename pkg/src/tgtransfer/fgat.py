"""Staged attention encoder over transformed graphs.

Graph nodes start at zero and feature nodes at a learned embedding, then each
layer runs four update phases in a fixed order: feature nodes into all graph
nodes, items into users, users into items, and graph nodes back into feature
nodes. Phase 1 therefore reads feature embeddings as they stood at the end of
the previous layer, while phases 2-4 read values already updated within the
current layer.

Each phase applies the same attention block with its own weights: per edge
(u aggregating v with weight a_uv),

    msg  = leaky_relu([w1 h_u, w2 h_v, w3 * a_uv])
    alpha = softmax_over_u's_neighbors(w4^T msg)
    h_u' = MLP([w5 h_u, sum_v alpha w6 h_v])

Nodes without neighbors in a phase still update through MLP([w5 h_u, 0]).

Training is masked link prediction over a pool of transformed graphs: each
epoch samples one graph, hides half of its interaction pairs, re-encodes the
remainder, and scores hidden pairs against equally many non-edges with a
dot-product sigmoid decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np

from .numerics import tensor as T
from .numerics.checkpoint import read_blob, write_blob
from .numerics.nn import Mlp
from .numerics.optim import Adam
from .numerics.params import ParameterSet, xavier_uniform
from .transform import StaticGraph, TransformedGraph

UNKNOWN_ROW = 0  # embedding row for feature tokens outside the training vocab


@dataclass
class FgatConfig:
    dim: int = 32
    n_layers: int = 2
    lr: float = 0.005
    mask_fraction: float = 0.5
    slope: float = 0.2

    def to_dict(self) -> dict:
        return asdict(self)


class PhaseTable(NamedTuple):
    start: int  # target nodes are the contiguous id range [start, start+count)
    count: int
    edge_tgt: np.ndarray
    edge_src: np.ndarray
    edge_a: np.ndarray
    seg: np.ndarray  # edge -> target position, edges sorted by (tgt, src)


def _sorted_table(start, count, tgt, src, a) -> PhaseTable:
    tgt = np.asarray(tgt, dtype=np.int64)
    src = np.asarray(src, dtype=np.int64)
    a = np.asarray(a, dtype=np.float64)
    order = np.lexsort((src, tgt))
    tgt, src, a = tgt[order], src[order], a[order]
    return PhaseTable(start, count, tgt, src, a, tgt - start)


def phase_plan(tg: TransformedGraph) -> list[PhaseTable]:
    """Edge tables for the four phases of one layer, in schedule order."""
    u_count, g_count = tg.num_users, tg.num_graph_nodes
    feat_global = tg.feature_global(tg.feat_edge_feat)

    # phase 1: every graph node aggregates its feature nodes, weight 1/|F_u|
    f_per_node = np.zeros(g_count, dtype=np.int64)
    np.add.at(f_per_node, tg.feat_edge_node, 1)
    a1 = 1.0 / f_per_node[tg.feat_edge_node] if len(tg.feat_edge_node) else np.zeros(0)
    p1 = _sorted_table(0, g_count, tg.feat_edge_node, feat_global, a1)

    # phases 2 and 3: interaction-fraction edges, split by aggregating side
    es, ed, ew = tg.static.edge_src, tg.static.edge_dst, tg.static.edge_weight
    user_side = es < u_count
    p2 = _sorted_table(0, u_count, es[user_side], ed[user_side], ew[user_side])
    item_side = ~user_side
    p3 = _sorted_table(u_count, g_count - u_count, es[item_side], ed[item_side], ew[item_side])

    # phase 4: feature nodes aggregate attached graph nodes, weight 1/deg
    deg = np.zeros(tg.num_features, dtype=np.int64)
    np.add.at(deg, tg.feat_edge_feat, 1)
    a4 = 1.0 / deg[tg.feat_edge_feat] if len(tg.feat_edge_feat) else np.zeros(0)
    p4 = _sorted_table(g_count, tg.num_features, feat_global, tg.feat_edge_node, a4)
    return [p1, p2, p3, p4]


class FgatModel:
    """Config, vocabulary, and parameters; reusable across graphs."""

    def __init__(self, config: FgatConfig, feature_vocab: list[str], rng: np.random.Generator):
        self.config = config
        self.feature_vocab = list(feature_vocab)
        self._token_row = {tok: k + 1 for k, tok in enumerate(self.feature_vocab)}
        self.pset = ParameterSet()
        d = config.dim
        self.pset.add(
            "feat.table",
            xavier_uniform(rng, d, d, (len(self.feature_vocab) + 1, d)),
        )
        self._mlps: dict[tuple[int, int], Mlp] = {}
        for layer in range(1, config.n_layers + 1):
            for phase in range(1, 5):
                p = f"layer{layer}.phase{phase}"
                for w in ("w1", "w2", "w5", "w6"):
                    self.pset.add(f"{p}.{w}", xavier_uniform(rng, d, d, (d, d)))
                self.pset.add(f"{p}.w3", xavier_uniform(rng, 1, d, (d,)))
                self.pset.add(f"{p}.w4", xavier_uniform(rng, 3 * d, 1, (3 * d, 1)))
                mlp = Mlp(f"{p}.mlp", [2 * d, d, d], activation="leaky_relu")
                mlp.init_params(self.pset, rng)
                self._mlps[(layer, phase)] = mlp

    def token_rows(self, tokens: list[str]) -> np.ndarray:
        """Embedding rows for tokens; unseen tokens share the unknown row."""
        return np.array([self._token_row.get(t, UNKNOWN_ROW) for t in tokens], dtype=np.int64)

    def _phase_update(self, H: T.Tensor, table: PhaseTable, layer: int, phase: int, trace=None) -> T.Tensor:
        pset = self.pset
        p = f"layer{layer}.phase{phase}"
        d = self.config.dim
        tgt_nodes = np.arange(table.start, table.start + table.count)
        self_proj = T.matmul(T.gather(H, tgt_nodes), pset[f"{p}.w5"])
        if len(table.edge_tgt):
            h_u = T.gather(H, table.edge_tgt)
            h_v = T.gather(H, table.edge_src)
            msg = T.leaky_relu(
                T.concat(
                    [
                        T.matmul(h_u, pset[f"{p}.w1"]),
                        T.matmul(h_v, pset[f"{p}.w2"]),
                        T.constant(table.edge_a[:, None]) * pset[f"{p}.w3"],
                    ],
                    axis=1,
                ),
                slope=self.config.slope,
            )
            logits = T.matmul(msg, pset[f"{p}.w4"])
            # max per segment subtracted as a constant: keeps exp in range
            # without routing gradient through the max itself
            seg_max = np.full(table.count, -np.inf)
            np.maximum.at(seg_max, table.seg, logits.data[:, 0])
            shifted = logits - T.constant(seg_max[table.seg][:, None])
            e = T.exp(shifted)
            denom = T.segment_sum(e, table.seg, table.count)
            alpha = e / T.gather(denom, table.seg)
            weighted = T.matmul(h_v, pset[f"{p}.w6"]) * alpha
            context = T.segment_sum(weighted, table.seg, table.count)
        else:
            alpha = None
            context = T.constant(np.zeros((table.count, d)))
        out = self._mlps[(layer, phase)](pset, T.concat([self_proj, context], axis=1))
        if trace is not None:
            trace.append(
                {
                    "layer": layer,
                    "phase": phase,
                    "before": H.data.copy(),
                    "alpha": None if alpha is None else alpha.data[:, 0].copy(),
                    "seg": table.seg,
                    "targets": tgt_nodes,
                }
            )
        return T.scatter_rows(H, tgt_nodes, out)

    def encode(self, tg: TransformedGraph, trace=None) -> T.Tensor:
        """Embeddings for all transformed-graph nodes after n_layers rounds."""
        rows = self.token_rows(tg.feature_vocab)
        feat_h = T.gather(self.pset["feat.table"], rows)
        zeros = T.constant(np.zeros((tg.num_graph_nodes, self.config.dim)))
        H = T.concat([zeros, feat_h], axis=0)
        plan = phase_plan(tg)
        for layer in range(1, self.config.n_layers + 1):
            for phase in range(1, 5):
                H = self._phase_update(H, plan[phase - 1], layer, phase, trace)
        return H

    def encode_arrays(self, tg: TransformedGraph) -> np.ndarray:
        with T.no_grad():
            return self.encode(tg).data


def g_theta(pset: ParameterSet, prefix: str, h_u: np.ndarray, neighbors, slope: float = 0.2) -> np.ndarray:
    """Single-target attention block; `neighbors` is [(node_id, h_v, a_uv)].

    Neighbors are aggregated in ascending node-id order, matching the sorted
    edge tables of the vectorized path, so permuting the input list cannot
    change the result.
    """
    d = len(h_u)
    with T.no_grad():
        hu = T.constant(np.asarray(h_u)[None, :])
        self_proj = T.matmul(hu, pset[f"{prefix}.w5"])
        if neighbors:
            ordered = sorted(neighbors, key=lambda nb: nb[0])
            hv = T.constant(np.stack([np.asarray(nb[1]) for nb in ordered]))
            a = np.array([nb[2] for nb in ordered], dtype=np.float64)
            hu_rep = T.constant(np.repeat(np.asarray(h_u)[None, :], len(ordered), axis=0))
            msg = T.leaky_relu(
                T.concat(
                    [
                        T.matmul(hu_rep, pset[f"{prefix}.w1"]),
                        T.matmul(hv, pset[f"{prefix}.w2"]),
                        T.constant(a[:, None]) * pset[f"{prefix}.w3"],
                    ],
                    axis=1,
                ),
                slope=slope,
            )
            logits = T.matmul(msg, pset[f"{prefix}.w4"])
            seg = np.zeros(len(ordered), dtype=np.int64)
            shifted = logits - T.constant(np.full((len(ordered), 1), logits.data.max()))
            e = T.exp(shifted)
            denom = T.segment_sum(e, seg, 1)
            alpha = e / T.gather(denom, seg)
            context = T.segment_sum(T.matmul(hv, pset[f"{prefix}.w6"]) * alpha, seg, 1)
        else:
            context = T.constant(np.zeros((1, d)))
        mlp = Mlp(f"{prefix}.mlp", [2 * d, d, d], activation="leaky_relu")
        return mlp(pset, T.concat([self_proj, context], axis=1)).data[0]


def score_link(h_u: np.ndarray, h_v: np.ndarray) -> float:
    """sigmoid(h_u . h_v)"""
    h_u = np.asarray(h_u, dtype=np.float64)
    h_v = np.asarray(h_v, dtype=np.float64)
    if h_u.shape != h_v.shape:
        raise ValueError(f"embedding shapes disagree: {h_u.shape} vs {h_v.shape}")
    return float(0.5 * (np.tanh(0.5 * float(h_u @ h_v)) + 1.0))


def graph_fingerprint(tg: TransformedGraph) -> tuple:
    s = tg.static
    return (
        s.num_users,
        s.num_items,
        s.pair_users.tobytes(),
        s.pair_items.tobytes(),
        s.pair_counts.tobytes(),
        tuple(tg.feature_vocab),
    )


def _masked_static(tg: TransformedGraph, keep_idx: np.ndarray) -> TransformedGraph:
    s = tg.static
    masked = StaticGraph(
        s.pair_users[keep_idx], s.pair_items[keep_idx], s.pair_counts[keep_idx],
        s.num_users, s.num_items,
    )
    return TransformedGraph(masked, tg.user_features, tg.item_features, tg.feature_vocab)


def _sample_non_edges(tg: TransformedGraph, n: int, rng: np.random.Generator):
    s = tg.static
    existing = set((s.pair_users * s.num_items + s.pair_items).tolist())
    if s.num_users * s.num_items <= s.num_pairs:
        raise ValueError("graph has no non-edges to sample")
    users = np.empty(n, dtype=np.int64)
    items = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        u = int(rng.integers(0, s.num_users))
        i = int(rng.integers(0, s.num_items))
        if u * s.num_items + i in existing:
            continue
        users[filled] = u
        items[filled] = i
        filled += 1
    return users, items


def train_fgat(
    model: FgatModel,
    pool: list[TransformedGraph],
    epochs: int,
    rng: np.random.Generator,
    forbidden: list[TransformedGraph] = (),
) -> list[float]:
    """Masked-link training; returns the per-epoch loss curve."""
    if not pool:
        raise ValueError("training pool is empty")
    banned = {graph_fingerprint(t) for t in forbidden}
    for tg in pool:
        if graph_fingerprint(tg) in banned:
            raise ValueError("pool contains a forbidden (target) graph")
        if tg.static.num_pairs < 2:
            raise ValueError("pool graph has fewer than 2 interaction pairs")

    opt = Adam(lr=model.config.lr)
    losses: list[float] = []
    for _ in range(epochs):
        tg = pool[int(rng.integers(0, len(pool)))]
        n_pairs = tg.static.num_pairs
        n_mask = max(1, int(round(n_pairs * model.config.mask_fraction)))
        n_mask = min(n_mask, n_pairs - 1)  # always keep at least one pair
        perm = rng.permutation(n_pairs)
        mask_idx, keep_idx = perm[:n_mask], np.sort(perm[n_mask:])
        visible = _masked_static(tg, keep_idx)

        H = model.encode(visible)
        pos_u = tg.static.pair_users[mask_idx]
        pos_i = tg.static.pair_items[mask_idx] + tg.num_users
        neg_u, neg_i = _sample_non_edges(tg, n_mask, rng)
        neg_i = neg_i + tg.num_users

        hu = T.gather(H, np.concatenate([pos_u, neg_u]))
        hv = T.gather(H, np.concatenate([pos_i, neg_i]))
        probs = T.sigmoid(T.tensor_sum(hu * hv, axis=1))
        labels = np.concatenate([np.ones(n_mask), np.zeros(n_mask)])
        loss = T.bce_loss(probs, labels)

        model.pset.zero_grads()
        T.backward(loss, params=model.pset.tensors())
        opt.step(model.pset)
        losses.append(float(loss.data))
    return losses


# -- checkpointing ------------------------------------------------------------------


def save_fgat(model: FgatModel, path) -> None:
    write_blob(
        path,
        {
            "kind": "fgat-checkpoint",
            "config": model.config.to_dict(),
            "feature_vocab": model.feature_vocab,
        },
        model.pset.state_arrays(),
    )


def load_fgat(path) -> FgatModel:
    meta, arrays = read_blob(path)
    if meta.get("kind") != "fgat-checkpoint":
        raise ValueError(f"{path} is not an fgat checkpoint")
    config = FgatConfig(**meta["config"])
    model = FgatModel(config, meta["feature_vocab"], np.random.default_rng(0))
    model.pset.load_arrays(arrays)
    return model
