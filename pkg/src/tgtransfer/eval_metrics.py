"""Link-prediction evaluation: AP, AUC, MRR, Recall@k, and the protocol.

Positive scores come from the split's true events; an equal number of
negatives pair each event's user with a random other item at the same time.
Ranking metrics score each event's user against the full item catalog.
In streaming mode the true events update the memory after being scored, so
later events are predicted with everything observed so far; frozen mode
leaves memory untouched.

Ties are handled deterministically everywhere: AP breaks score ties by input
order, AUC gives half credit, and catalog ranks order tied items by item id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .numerics import tensor as T
from .temporal_graph import TemporalGraph, batch_iter, sample_negatives
from .tgn import GraphContext, MemoryState, TgnModel, update_memory


# -- scalar metrics ------------------------------------------------------------


def average_precision(scores, labels) -> float:
    """Precision accumulated at each positive, walking scores descending."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order].astype(np.float64)
    cum_pos = np.cumsum(hits)
    precision = cum_pos / np.arange(1, len(scores) + 1)
    return float((precision * hits).sum() / n_pos)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC via midranks; ties get half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both classes")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # midrank of the tie group [i, j], 1-based
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def truth_rank(scores: np.ndarray, item_ids: np.ndarray, truth_id: int) -> int:
    """1-based rank of the true item; tied scores are ordered by item id."""
    scores = np.asarray(scores, dtype=np.float64)
    item_ids = np.asarray(item_ids)
    where = np.nonzero(item_ids == truth_id)[0]
    if len(where) != 1:
        raise ValueError("truth item must appear exactly once among candidates")
    s = scores[where[0]]
    greater = int(np.sum(scores > s))
    tied_earlier = int(np.sum((scores == s) & (item_ids < truth_id)))
    return 1 + greater + tied_earlier


def mrr(ranks) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        raise ValueError("mrr of an empty test set")
    return float(np.mean(1.0 / ranks))


def recall_at_k(ranks, k: int = 20) -> float:
    ranks = np.asarray(ranks)
    if len(ranks) == 0:
        raise ValueError("recall of an empty test set")
    return float(np.mean(ranks <= k))


# -- report ---------------------------------------------------------------------


@dataclass
class MetricsReport:
    variant: str
    seed: int
    n_test_events: int
    k: int
    ap: float
    auc: float
    mrr: float
    recall_at_k: float

    def __post_init__(self):
        for name in ("ap", "auc", "mrr", "recall_at_k"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} outside [0,1]: {v}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


CSV_HEADER = "variant,pair,seed,ap,auc,mrr,recall@20"


def csv_row(report: MetricsReport, pair: str) -> str:
    return (
        f"{report.variant},{pair},{report.seed},"
        f"{report.ap:.6f},{report.auc:.6f},{report.mrr:.6f},{report.recall_at_k:.6f}"
    )


def summarize(values) -> tuple[float, float]:
    """(mean, std); std below 0.001 collapses to exactly 0.0."""
    values = np.asarray(values, dtype=np.float64)
    std = float(values.std())
    return float(values.mean()), 0.0 if std < 1e-3 else std


# -- protocol ---------------------------------------------------------------------


def _catalog_scores(model: TgnModel, ctx: GraphContext, mem, users, ts) -> np.ndarray:
    """(B, num_items) probabilities of every item for each (user, t) query."""
    n_items = ctx.graph.num_items
    b = len(users)
    items_g = np.tile(np.arange(n_items, dtype=np.int64) + ctx.graph.num_users, b)
    rep_ts = np.repeat(ts, n_items)
    h_items = model.embed(ctx, mem, items_g, rep_ts)
    h_users = model.embed(ctx, mem, users, ts)
    h_users_rep = T.gather(h_users, np.repeat(np.arange(b), n_items))
    logits = model.decoder(model.pset, T.concat([h_users_rep, h_items], axis=1))
    return T.sigmoid(logits).data.reshape(b, n_items)


def evaluate(
    model: TgnModel,
    ctx: GraphContext,
    split: TemporalGraph,
    state: MemoryState,
    rng: np.random.Generator,
    mode: str = "streaming",
    k: int = 20,
    chunk: int = 50,
    variant: str = "",
    seed: int = 0,
    rank_metrics: bool = True,
) -> tuple[MetricsReport, MemoryState]:
    """Score a chronological split; returns the report and the end state.

    The caller's state is never mutated; the returned state reflects the
    split's events in streaming mode (and is an unchanged copy when frozen).
    """
    if split.num_events == 0:
        raise ValueError("cannot evaluate an empty split")
    if mode not in ("streaming", "frozen"):
        raise ValueError(f"unknown mode {mode!r}")
    state = state.copy()
    num_users = ctx.graph.num_users
    pos_scores, neg_scores, ranks = [], [], []
    item_ids = np.arange(ctx.graph.num_items)
    for batch in batch_iter(split, chunk):
        with T.no_grad():
            mem = T.constant(state.memory)
            negs = sample_negatives(batch.items, ctx.graph.num_items, rng) + num_users
            b = len(batch.users)
            users2 = np.concatenate([batch.users, batch.users])
            cands = np.concatenate([batch.items + num_users, negs])
            ts2 = np.concatenate([batch.times, batch.times])
            probs = model.score_pairs(ctx, mem, users2, cands, ts2).data
            pos_scores.append(probs[:b])
            neg_scores.append(probs[b:])
            if rank_metrics:
                catalog = _catalog_scores(model, ctx, mem, batch.users, batch.times)
                for row, truth in zip(catalog, batch.items):
                    ranks.append(truth_rank(row, item_ids, int(truth)))
        if mode == "streaming":
            state = update_memory(model, state, batch, num_users)
    pos = np.concatenate(pos_scores)
    neg = np.concatenate(neg_scores)
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    report = MetricsReport(
        variant=variant,
        seed=seed,
        n_test_events=split.num_events,
        k=k,
        ap=average_precision(scores, labels),
        auc=auc(scores, labels),
        mrr=mrr(ranks) if rank_metrics else 0.0,
        recall_at_k=recall_at_k(ranks, k) if rank_metrics else 0.0,
    )
    return report, state
