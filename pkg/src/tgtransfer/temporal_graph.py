"""Temporal interaction graphs: ingestion, splits, neighbor queries, batching.

A graph is a time-ordered sequence of user-item interactions over a bipartite
node set, plus static categorical feature-id sets per node. Everything here is
immutable after construction; splits and slices share the parent's vocabulary
and node tables so indices mean the same thing across pieces.

Node indexing convention used package-wide: users occupy global ids
[0, num_users) and items [num_users, num_users + num_items).
"""

from __future__ import annotations

import csv
from typing import Iterator, NamedTuple

import numpy as np

from .numerics.checkpoint import read_blob, write_blob


class Event(NamedTuple):
    user: int
    item: int
    time: float
    edge_features: np.ndarray


class EventBatch(NamedTuple):
    users: np.ndarray
    items: np.ndarray
    times: np.ndarray
    edge_features: np.ndarray
    ordinals: np.ndarray


class TemporalGraph:
    """Sorted event arrays plus node/feature vocabularies.

    `users`/`items` hold dense per-partition indices; `times` is sorted
    non-decreasing with ties kept in ingestion order.
    """

    def __init__(
        self,
        users: np.ndarray,
        items: np.ndarray,
        times: np.ndarray,
        edge_features: np.ndarray,
        user_ids: list[str],
        item_ids: list[str],
        feature_vocab: list[str],
        user_features: list[np.ndarray],
        item_features: list[np.ndarray],
    ):
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        self.times = np.asarray(times, dtype=np.float64)
        self.edge_features = np.asarray(edge_features, dtype=np.float64)
        if self.edge_features.ndim == 1:
            self.edge_features = self.edge_features.reshape(len(self.times), -1)
        self.user_ids = list(user_ids)
        self.item_ids = list(item_ids)
        self.feature_vocab = list(feature_vocab)
        self.user_features = [np.asarray(f, dtype=np.int64) for f in user_features]
        self.item_features = [np.asarray(f, dtype=np.int64) for f in item_features]
        self._validate()

    def _validate(self) -> None:
        n = len(self.times)
        if not (len(self.users) == len(self.items) == n == len(self.edge_features)):
            raise ValueError("event arrays disagree in length")
        if n and np.any(np.diff(self.times) < 0):
            raise ValueError("events must be sorted non-decreasing by time")
        if n and self.times.min() < 0:
            raise ValueError("timestamps must be non-negative")
        if len(self.user_features) != len(self.user_ids):
            raise ValueError("user feature table size mismatch")
        if len(self.item_features) != len(self.item_ids):
            raise ValueError("item feature table size mismatch")
        vocab_size = len(self.feature_vocab)
        for feats in (*self.user_features, *self.item_features):
            if feats.size and (feats.min() < 0 or feats.max() >= vocab_size):
                raise ValueError("node feature id outside vocabulary")

    # -- sizes and indexing ----------------------------------------------------

    @property
    def num_events(self) -> int:
        return len(self.times)

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def edge_feature_dim(self) -> int:
        return self.edge_features.shape[1]

    def item_global(self, item_idx):
        """Dense item index -> global node id."""
        return self.num_users + item_idx

    def node_feature_ids(self, node: int) -> np.ndarray:
        if node < self.num_users:
            return self.user_features[node]
        return self.item_features[node - self.num_users]

    def event(self, k: int) -> Event:
        return Event(
            int(self.users[k]), int(self.items[k]), float(self.times[k]), self.edge_features[k]
        )

    def iter_events(self) -> Iterator[Event]:
        for k in range(self.num_events):
            yield self.event(k)

    def slice(self, start: int, end: int) -> "TemporalGraph":
        """Event window [start, end); shares vocab and node tables."""
        return TemporalGraph(
            self.users[start:end],
            self.items[start:end],
            self.times[start:end],
            self.edge_features[start:end],
            self.user_ids,
            self.item_ids,
            self.feature_vocab,
            self.user_features,
            self.item_features,
        )


# -- ingestion -----------------------------------------------------------------

_REQUIRED_COLUMNS = ("user_id", "item_id", "timestamp", "user_feature_ids", "item_feature_ids")


class IngestError(ValueError):
    pass


def _split_tokens(cell: str) -> list[str]:
    cell = cell.strip()
    return [tok for tok in cell.split("|") if tok] if cell else []


def load_events(path) -> TemporalGraph:
    """Parse the interaction CSV; see module docstring for index conventions.

    Dense node ids follow first appearance in file order and feature ids
    follow first appearance, so reloading the same file reproduces identical
    indexing. A node's feature set is the union over all its rows.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty file")
        missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise IngestError(f"{path}: missing columns {missing}")
        has_edge_feats = "edge_features" in reader.fieldnames

        user_index: dict[str, int] = {}
        item_index: dict[str, int] = {}
        feat_index: dict[str, int] = {}
        user_feats: list[set] = []
        item_feats: list[set] = []
        users, items, times, efeats = [], [], [], []
        edge_dim = None

        for lineno, row in enumerate(reader, start=2):
            try:
                raw_u = row["user_id"].strip()
                raw_i = row["item_id"].strip()
                if not raw_u or not raw_i:
                    raise ValueError("empty user_id or item_id")
                t = float(row["timestamp"])
                if not np.isfinite(t) or t < 0:
                    raise ValueError(f"bad timestamp {row['timestamp']!r}")
                u_tokens = _split_tokens(row["user_feature_ids"])
                i_tokens = _split_tokens(row["item_feature_ids"])
                ef = []
                if has_edge_feats:
                    ef = [float(v) for v in _split_tokens(row["edge_features"] or "")]
            except (TypeError, ValueError, KeyError) as err:
                raise IngestError(f"{path}:{lineno}: malformed row: {err}") from err

            if raw_u not in user_index:
                user_index[raw_u] = len(user_index)
                user_feats.append(set())
            if raw_i not in item_index:
                item_index[raw_i] = len(item_index)
                item_feats.append(set())
            u = user_index[raw_u]
            i = item_index[raw_i]
            for tok in u_tokens:
                if tok not in feat_index:
                    feat_index[tok] = len(feat_index)
                user_feats[u].add(feat_index[tok])
            for tok in i_tokens:
                if tok not in feat_index:
                    feat_index[tok] = len(feat_index)
                item_feats[i].add(feat_index[tok])

            if edge_dim is None:
                edge_dim = len(ef)
            elif len(ef) != edge_dim:
                raise IngestError(f"{path}:{lineno}: edge feature arity changed")
            users.append(u)
            items.append(i)
            times.append(t)
            efeats.append(ef)

    if not times:
        raise IngestError(f"{path}: no event rows")

    order = np.argsort(np.asarray(times), kind="stable")
    users_a = np.asarray(users, dtype=np.int64)[order]
    items_a = np.asarray(items, dtype=np.int64)[order]
    times_a = np.asarray(times, dtype=np.float64)[order]
    efeats_a = np.asarray(efeats, dtype=np.float64).reshape(len(times), edge_dim or 0)[order]

    vocab = [tok for tok, _ in sorted(feat_index.items(), key=lambda kv: kv[1])]
    user_ids = [rid for rid, _ in sorted(user_index.items(), key=lambda kv: kv[1])]
    item_ids = [rid for rid, _ in sorted(item_index.items(), key=lambda kv: kv[1])]
    return TemporalGraph(
        users_a,
        items_a,
        times_a,
        efeats_a,
        user_ids,
        item_ids,
        vocab,
        [np.array(sorted(s), dtype=np.int64) for s in user_feats],
        [np.array(sorted(s), dtype=np.int64) for s in item_feats],
    )


# -- splits and batching ---------------------------------------------------------


def chronological_split(g: TemporalGraph, fractions) -> tuple[TemporalGraph, TemporalGraph, TemporalGraph]:
    """Cut the sorted stream at floor(N*f1) and floor(N*(f1+f2))."""
    f1, f2, f3 = (float(f) for f in fractions)
    if min(f1, f2, f3) <= 0 or abs(f1 + f2 + f3 - 1.0) > 1e-9:
        raise ValueError(f"fractions must be positive and sum to 1, got {fractions}")
    n = g.num_events
    if n < 3:
        raise ValueError("need at least 3 events to split")
    a = int(np.floor(n * f1))
    b = int(np.floor(n * (f1 + f2)))
    return g.slice(0, a), g.slice(a, b), g.slice(b, n)


def batch_iter(g: TemporalGraph, batch_size: int, base_ordinal: int = 0) -> Iterator[EventBatch]:
    """Contiguous chronological slices; the final batch may be short.

    `base_ordinal` offsets the reported event ordinals, for graphs that are
    slices of a larger stream.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    for start in range(0, g.num_events, batch_size):
        end = min(start + batch_size, g.num_events)
        yield EventBatch(
            g.users[start:end],
            g.items[start:end],
            g.times[start:end],
            g.edge_features[start:end],
            np.arange(start, end, dtype=np.int64) + base_ordinal,
        )


def sample_negatives(pos_items: np.ndarray, num_items: int, rng: np.random.Generator) -> np.ndarray:
    """One uniform item per positive, resampled while colliding with it."""
    pos_items = np.asarray(pos_items, dtype=np.int64)
    if num_items < 2:
        raise ValueError("negative sampling needs at least 2 items")
    neg = rng.integers(0, num_items, size=len(pos_items))
    while True:
        clash = neg == pos_items
        if not clash.any():
            break
        neg[clash] = rng.integers(0, num_items, size=int(clash.sum()))
    return neg


# -- temporal neighborhoods -------------------------------------------------------


class NeighborIndex:
    """Per-node time-ordered adjacency over a full event stream.

    Queries return interactions strictly before the query time, newest first,
    as global node ids. Built once, never mutated; querying at a training-time
    t can therefore never see an event at t or later.
    """

    def __init__(self, g: TemporalGraph):
        self._g = g
        n = g.num_nodes
        nbr: list[list] = [[] for _ in range(n)]
        times: list[list] = [[] for _ in range(n)]
        ords: list[list] = [[] for _ in range(n)]
        items_g = g.items + g.num_users
        for k in range(g.num_events):
            u = int(g.users[k])
            v = int(items_g[k])
            t = float(g.times[k])
            nbr[u].append(v)
            times[u].append(t)
            ords[u].append(k)
            nbr[v].append(u)
            times[v].append(t)
            ords[v].append(k)
        self._nbr = [np.asarray(x, dtype=np.int64) for x in nbr]
        self._times = [np.asarray(x, dtype=np.float64) for x in times]
        self._ords = [np.asarray(x, dtype=np.int64) for x in ords]

    @property
    def num_nodes(self) -> int:
        return len(self._nbr)

    def neighbors(self, node: int, t: float, k: int):
        """The k most recent interactions of `node` before t, newest first.

        Returns (neighbor_ids, times, event_ordinals); shorter than k when
        the history is short.
        """
        if not 0 <= node < len(self._nbr):
            raise KeyError(f"unknown node {node}")
        cut = int(np.searchsorted(self._times[node], t, side="left"))
        lo = max(0, cut - k)
        sel = slice(lo, cut)
        return (
            self._nbr[node][sel][::-1],
            self._times[node][sel][::-1],
            self._ords[node][sel][::-1],
        )

    def batch_neighbors(self, nodes: np.ndarray, ts: np.ndarray, k: int):
        """Padded per-row neighbor tables for a batch of (node, time) queries.

        Returns (ids, times, ordinals, mask), each (B, k); mask is 1.0 on
        real entries. Padding uses id 0, the query time, and ordinal 0, all
        neutralized by the mask downstream.
        """
        b = len(nodes)
        ids = np.zeros((b, k), dtype=np.int64)
        times = np.tile(np.asarray(ts, dtype=np.float64)[:, None], (1, k))
        ords = np.zeros((b, k), dtype=np.int64)
        mask = np.zeros((b, k), dtype=np.float64)
        for row, (node, t) in enumerate(zip(nodes, ts)):
            nid, nt, no = self.neighbors(int(node), float(t), k)
            c = len(nid)
            if c:
                ids[row, :c] = nid
                times[row, :c] = nt
                ords[row, :c] = no
                mask[row, :c] = 1.0
        return ids, times, ords, mask

    def edge_features_for(self, ordinals: np.ndarray) -> np.ndarray:
        # padding ordinals are 0, which only exists in nonempty graphs; all
        # padded rows are masked downstream so zeros are safe here
        if self._g.num_events == 0:
            return np.zeros((len(ordinals), self._g.edge_feature_dim))
        return self._g.edge_features[ordinals]


# -- binary cache ------------------------------------------------------------------


def _pack_ragged(rows: list[np.ndarray]):
    lengths = np.array([len(r) for r in rows], dtype=np.int64)
    values = np.concatenate(rows) if rows and lengths.sum() else np.zeros(0, dtype=np.int64)
    return values.astype(np.int64), lengths


def _unpack_ragged(values: np.ndarray, lengths: np.ndarray) -> list[np.ndarray]:
    out = []
    pos = 0
    for n in lengths:
        out.append(values[pos : pos + n].copy())
        pos += int(n)
    return out


def save_cache(g: TemporalGraph, path) -> None:
    uf_vals, uf_lens = _pack_ragged(g.user_features)
    if_vals, if_lens = _pack_ragged(g.item_features)
    meta = {
        "kind": "temporal-graph-cache",
        "user_ids": g.user_ids,
        "item_ids": g.item_ids,
        "feature_vocab": g.feature_vocab,
    }
    write_blob(
        path,
        meta,
        {
            "users": g.users,
            "items": g.items,
            "times": g.times,
            "edge_features": g.edge_features,
            "user_feat_values": uf_vals,
            "user_feat_lengths": uf_lens,
            "item_feat_values": if_vals,
            "item_feat_lengths": if_lens,
        },
    )


def load_cache(path) -> TemporalGraph:
    meta, arrays = read_blob(path)
    if meta.get("kind") != "temporal-graph-cache":
        raise ValueError(f"{path} is not a temporal graph cache")
    return TemporalGraph(
        arrays["users"],
        arrays["items"],
        arrays["times"],
        arrays["edge_features"],
        meta["user_ids"],
        meta["item_ids"],
        meta["feature_vocab"],
        _unpack_ragged(arrays["user_feat_values"], arrays["user_feat_lengths"]),
        _unpack_ragged(arrays["item_feat_values"], arrays["item_feat_lengths"]),
    )
