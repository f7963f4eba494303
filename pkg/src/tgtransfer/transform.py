"""Attribute-decoupled static transformation of a temporal interaction graph.

The transformation forgets timestamps and edge features. What remains is a
directed interaction-frequency graph over the original bipartite nodes, plus
one virtual node per categorical feature token, attached to every graph node
carrying that token. Feature-node identity is the vocab token string, so two
graphs sharing a vocabulary share feature nodes.

Node id layout inside a transformed graph with U users, I items, F features:
users [0, U), items [U, U+I), feature nodes [U+I, U+I+F).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .numerics.checkpoint import read_blob, write_blob
from .temporal_graph import TemporalGraph


class StaticGraph:
    """Directed frequency-weighted interaction graph over global node ids.

    Built from the multiset of (user, item) interaction pairs; each pair with
    count c yields u->item and item->u edges, and every node's outgoing
    weights are its interaction fractions (they sum to 1 for any node with at
    least one interaction).
    """

    def __init__(self, pair_users, pair_items, pair_counts, num_users, num_items):
        self.pair_users = np.asarray(pair_users, dtype=np.int64)
        self.pair_items = np.asarray(pair_items, dtype=np.int64)
        self.pair_counts = np.asarray(pair_counts, dtype=np.int64)
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        if not (len(self.pair_users) == len(self.pair_items) == len(self.pair_counts)):
            raise ValueError("pair arrays disagree in length")
        if len(self.pair_counts) and self.pair_counts.min() < 1:
            raise ValueError("pair counts must be positive")
        # canonical pair order pins adjacency layout across rebuilds
        order = np.lexsort((self.pair_items, self.pair_users))
        self.pair_users = self.pair_users[order]
        self.pair_items = self.pair_items[order]
        self.pair_counts = self.pair_counts[order]
        self._build_adjacency()

    def _build_adjacency(self) -> None:
        n = self.num_nodes
        item_g = self.pair_items + self.num_users
        totals = np.zeros(n, dtype=np.float64)
        np.add.at(totals, self.pair_users, self.pair_counts)
        np.add.at(totals, item_g, self.pair_counts)

        # directed edge list: one u->v entry per ordered pair with >=1 event
        src = np.concatenate([self.pair_users, item_g])
        dst = np.concatenate([item_g, self.pair_users])
        cnt = np.concatenate([self.pair_counts, self.pair_counts]).astype(np.float64)
        weight = cnt / totals[src] if len(src) else cnt

        order = np.lexsort((dst, src))
        self.edge_src = src[order]
        self.edge_dst = dst[order]
        self.edge_weight = weight[order]
        self._offsets = np.searchsorted(self.edge_src, np.arange(n + 1))
        self._totals = totals

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def num_pairs(self) -> int:
        return len(self.pair_users)

    def out_neighbors(self, node: int):
        """(neighbor global ids, interaction fractions) for `node`."""
        if not 0 <= node < self.num_nodes:
            raise KeyError(f"unknown node {node}")
        lo, hi = self._offsets[node], self._offsets[node + 1]
        return self.edge_dst[lo:hi], self.edge_weight[lo:hi]

    def interaction_total(self, node: int) -> float:
        return float(self._totals[node])


def build_static(g: TemporalGraph) -> StaticGraph:
    if g.num_events == 0:
        raise ValueError("cannot transform an empty graph")
    key = g.users * g.num_items + g.items
    uniq, counts = np.unique(key, return_counts=True)
    return StaticGraph(uniq // g.num_items, uniq % g.num_items, counts, g.num_users, g.num_items)


class Neighborhood(NamedTuple):
    graph_ids: np.ndarray
    graph_weights: np.ndarray
    feature_ids: np.ndarray
    feature_weights: np.ndarray


class TransformedGraph:
    """Static graph plus virtual feature nodes and their attachment edges."""

    def __init__(self, static: StaticGraph, user_features, item_features, feature_vocab):
        self.static = static
        self.feature_vocab = list(feature_vocab)
        self.user_features = [np.asarray(f, dtype=np.int64) for f in user_features]
        self.item_features = [np.asarray(f, dtype=np.int64) for f in item_features]
        if len(self.user_features) != static.num_users:
            raise ValueError("user feature table size mismatch")
        if len(self.item_features) != static.num_items:
            raise ValueError("item feature table size mismatch")
        vocab_size = len(self.feature_vocab)
        nodes, feats = [], []
        for u, fs in enumerate(self.user_features):
            for f in fs:
                nodes.append(u)
                feats.append(int(f))
        for i, fs in enumerate(self.item_features):
            for f in fs:
                nodes.append(static.num_users + i)
                feats.append(int(f))
        self.feat_edge_node = np.asarray(nodes, dtype=np.int64)
        self.feat_edge_feat = np.asarray(feats, dtype=np.int64)
        if len(self.feat_edge_feat) and (
            self.feat_edge_feat.min() < 0 or self.feat_edge_feat.max() >= vocab_size
        ):
            raise ValueError("feature id outside vocabulary")
        # per-node and per-feature views of the attachment edges
        order = np.lexsort((self.feat_edge_feat, self.feat_edge_node))
        self._by_node_feat = self.feat_edge_feat[order]
        self._node_offsets = np.searchsorted(
            self.feat_edge_node[order], np.arange(self.num_graph_nodes + 1)
        )
        order_f = np.lexsort((self.feat_edge_node, self.feat_edge_feat))
        self._by_feat_node = self.feat_edge_node[order_f]
        self._feat_offsets = np.searchsorted(
            self.feat_edge_feat[order_f], np.arange(vocab_size + 1)
        )

    @property
    def num_users(self) -> int:
        return self.static.num_users

    @property
    def num_items(self) -> int:
        return self.static.num_items

    @property
    def num_features(self) -> int:
        return len(self.feature_vocab)

    @property
    def num_graph_nodes(self) -> int:
        return self.static.num_nodes

    @property
    def num_nodes(self) -> int:
        return self.num_graph_nodes + self.num_features

    def feature_global(self, feat_id):
        """Feature id -> transformed-graph node id."""
        return self.num_graph_nodes + feat_id

    def partition(self, node: int) -> str:
        if node < self.num_users:
            return "user"
        if node < self.num_graph_nodes:
            return "item"
        if node < self.num_nodes:
            return "feature"
        raise KeyError(f"unknown node {node}")

    def node_feature_ids(self, node: int) -> np.ndarray:
        lo, hi = self._node_offsets[node], self._node_offsets[node + 1]
        return self._by_node_feat[lo:hi]

    def attached_nodes(self, feat_id: int) -> np.ndarray:
        lo, hi = self._feat_offsets[feat_id], self._feat_offsets[feat_id + 1]
        return self._by_feat_node[lo:hi]


def build_transformed(static: StaticGraph, user_features, item_features, feature_vocab) -> TransformedGraph:
    return TransformedGraph(static, user_features, item_features, feature_vocab)


def neighborhoods(tg: TransformedGraph, node: int) -> Neighborhood:
    """Graph and feature neighbor lists of a transformed-graph node.

    Graph nodes see their static out-neighbors weighted by interaction
    fraction and their feature nodes weighted uniformly 1/|F_u|; a feature
    node sees its attached graph nodes weighted uniformly. Weights always sum
    to 1 over each non-empty list.
    """
    if not 0 <= node < tg.num_nodes:
        raise KeyError(f"unknown node {node}")
    if node < tg.num_graph_nodes:
        g_ids, g_w = tg.static.out_neighbors(node)
        feats = tg.node_feature_ids(node)
        f_ids = tg.feature_global(feats)
        f_w = np.full(len(feats), 1.0 / len(feats)) if len(feats) else np.zeros(0)
        return Neighborhood(g_ids, g_w, f_ids, f_w)
    feat_id = node - tg.num_graph_nodes
    attached = tg.attached_nodes(feat_id)
    w = np.full(len(attached), 1.0 / len(attached)) if len(attached) else np.zeros(0)
    return Neighborhood(attached, w, np.zeros(0, dtype=np.int64), np.zeros(0))


def transform_graph(g: TemporalGraph) -> TransformedGraph:
    """Full pipeline: temporal graph -> static -> transformed."""
    return build_transformed(build_static(g), g.user_features, g.item_features, g.feature_vocab)


# -- cache -----------------------------------------------------------------------


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


def save_transformed(tg: TransformedGraph, path) -> None:
    uf_vals, uf_lens = _pack_ragged(tg.user_features)
    if_vals, if_lens = _pack_ragged(tg.item_features)
    write_blob(
        path,
        {
            "kind": "transformed-graph-cache",
            "num_users": tg.num_users,
            "num_items": tg.num_items,
            "feature_vocab": tg.feature_vocab,
        },
        {
            "pair_users": tg.static.pair_users,
            "pair_items": tg.static.pair_items,
            "pair_counts": tg.static.pair_counts,
            "user_feat_values": uf_vals,
            "user_feat_lengths": uf_lens,
            "item_feat_values": if_vals,
            "item_feat_lengths": if_lens,
        },
    )


def load_transformed(path) -> TransformedGraph:
    meta, arrays = read_blob(path)
    if meta.get("kind") != "transformed-graph-cache":
        raise ValueError(f"{path} is not a transformed graph cache")
    static = StaticGraph(
        arrays["pair_users"],
        arrays["pair_items"],
        arrays["pair_counts"],
        meta["num_users"],
        meta["num_items"],
    )
    return TransformedGraph(
        static,
        _unpack_ragged(arrays["user_feat_values"], arrays["user_feat_lengths"]),
        _unpack_ragged(arrays["item_feat_values"], arrays["item_feat_lengths"]),
        meta["feature_vocab"],
    )
