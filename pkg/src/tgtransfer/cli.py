"""Command-line pipeline: transform, train, transfer, sweep, synthesize.

Every subcommand is reproducible from its inputs: outputs land at fixed
paths, a resolved-config snapshot is written next to them, and all
randomness flows from the --seed flag. A JSON file passed via --config
supplies per-command defaults that explicit flags override.

Exit codes: 0 success, 1 validation failure, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fgat as fg
from . import synthdata as sd
from . import tgn
from . import transfer as tr
from .eval_metrics import CSV_HEADER, csv_row, summarize
from .numerics import Adam, CheckpointError
from .temporal_graph import IngestError, TemporalGraph, load_events
from .transform import build_static, load_transformed, save_transformed, transform_graph

SWEEP_HEADER = "variant,fraction,seed,ap,auc,mrr,recall@20"


# -- shared helpers ------------------------------------------------------------------


def _write_config_snapshot(args, default_dir) -> None:
    run_dir = Path(args.run_dir) if args.run_dir else Path(default_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    skip = {"func", "command", "config", "run_dir"}
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    path = run_dir / f"{args.command}-config.json"
    path.write_text(json.dumps(resolved, sort_keys=True, indent=2, default=str) + "\n")


def _parse_seeds(spec: str) -> list[int]:
    """Either a comma list '1,2,3' or an inclusive range '1..5'."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty seed range {spec!r}")
        return list(range(lo, hi + 1))
    return [int(tok) for tok in spec.split(",") if tok.strip()]


def _parse_fractions(spec: str) -> list[float]:
    vals = [float(tok) for tok in spec.split(",") if tok.strip()]
    if not vals:
        raise ValueError("no fractions given")
    return vals


def _split_triple(spec: str) -> tuple:
    parts = [float(tok) for tok in spec.split(",")]
    if len(parts) != 3:
        raise ValueError(f"--split needs three comma-separated fractions, got {spec!r}")
    return tuple(parts)


def _tgn_config(args) -> tgn.TgnConfig:
    return tgn.TgnConfig(
        d_mem=args.d_mem,
        d_time=args.d_time,
        d_feat=args.d_feat,
        n_layers=args.layers,
        n_heads=args.heads,
        k_neighbors=args.k_neighbors,
        batch_size=args.batch_size,
        lr=args.lr,
        context_dropout=args.context_dropout,
    )


def _add_tgn_flags(sub) -> None:
    d = tgn.TgnConfig()
    sub.add_argument("--d-mem", type=int, default=d.d_mem)
    sub.add_argument("--d-time", type=int, default=d.d_time)
    sub.add_argument("--d-feat", type=int, default=d.d_feat)
    sub.add_argument("--layers", type=int, default=d.n_layers)
    sub.add_argument("--heads", type=int, default=d.n_heads)
    sub.add_argument("--k-neighbors", type=int, default=d.k_neighbors)
    sub.add_argument("--batch-size", type=int, default=d.batch_size)
    sub.add_argument("--lr", type=float, default=d.lr)
    sub.add_argument("--context-dropout", type=float, default=d.context_dropout,
                     help="training-time chance to hide a node's neighbor context")


def _write_loss_csv(path, losses) -> None:
    lines = ["epoch,loss"] + [f"{e},{v!r}" for e, v in enumerate(losses, start=1)]
    Path(path).write_text("\n".join(lines) + "\n")


def _filter_degree(g: TemporalGraph, min_user: int, min_item: int) -> TemporalGraph:
    """One-shot removal of low-activity nodes and their events."""
    if min_user <= 1 and min_item <= 1:
        return g
    keep_u = np.bincount(g.users, minlength=g.num_users) >= min_user
    keep_i = np.bincount(g.items, minlength=g.num_items) >= min_item
    keep_ev = keep_u[g.users] & keep_i[g.items]
    if not keep_ev.any():
        raise ValueError("degree filter drops every event")
    new_u = np.cumsum(keep_u) - 1
    new_i = np.cumsum(keep_i) - 1
    return TemporalGraph(
        new_u[g.users[keep_ev]],
        new_i[g.items[keep_ev]],
        g.times[keep_ev],
        g.edge_features[keep_ev],
        [uid for uid, k in zip(g.user_ids, keep_u) if k],
        [iid for iid, k in zip(g.item_ids, keep_i) if k],
        g.feature_vocab,
        [f for f, k in zip(g.user_features, keep_u) if k],
        [f for f, k in zip(g.item_features, keep_i) if k],
    )


# -- subcommands -----------------------------------------------------------------------


def cmd_transform(args) -> int:
    g = load_events(args.input)
    g = _filter_degree(g, args.min_user_deg, args.min_item_deg)
    tg = transform_graph(g)
    save_transformed(tg, args.output)
    _write_config_snapshot(args, Path(args.output).parent)
    print(
        f"transformed nodes: {tg.num_nodes} "
        f"({tg.num_users} users + {tg.num_items} items + {tg.num_features} features)"
    )
    print(f"interaction pairs: {tg.static.num_pairs}")
    print(f"feature edges: {len(tg.feat_edge_node)}")
    return 0


def cmd_train_tgn(args) -> int:
    g = load_events(args.graph)
    rng = np.random.default_rng(args.seed)
    model = tgn.TgnModel(_tgn_config(args), g.feature_vocab, g.edge_feature_dim, rng)
    ctx = model.bind_graph(g)
    opt = Adam(lr=model.config.lr)
    losses: list = []
    if args.epochs > 0:
        state, losses = tgn.train(model, ctx, g, args.epochs, rng, optimizer=opt)
    else:
        state = tgn.MemoryState.zeros(ctx.num_nodes, model.config.d_mem)
    static = build_static(g)
    tgn.snapshot(
        model, state, opt, args.out,
        source_graph=g,
        train_pairs=(static.pair_users, static.pair_items, static.pair_counts),
    )
    _write_loss_csv(str(args.out) + ".loss.csv", losses)
    _write_config_snapshot(args, Path(args.out).parent)
    print(f"trained {args.epochs} epochs on {g.num_events} events -> {args.out}")
    for epoch, loss in enumerate(losses, start=1):
        print(f"epoch {epoch}: loss {loss:.6f}")
    return 0


def cmd_train_fgat(args) -> int:
    pool_dir = Path(args.pool)
    if not pool_dir.is_dir():
        raise FileNotFoundError(f"pool directory not found: {pool_dir}")
    paths = sorted(pool_dir.glob("*.cache"))
    if not paths:
        raise ValueError(f"no .cache transformed graphs in {pool_dir}")
    pool = [load_transformed(p) for p in paths]
    forbidden = [load_transformed(p) for p in (args.forbid or [])]

    vocab = sorted(set().union(*(tg.feature_vocab for tg in pool)))
    rng = np.random.default_rng(args.seed)
    model = fg.FgatModel(fg.FgatConfig(dim=args.dim, n_layers=args.layers, lr=args.lr), vocab, rng)
    losses = fg.train_fgat(model, pool, args.epochs, rng, forbidden=forbidden)
    fg.save_fgat(model, args.out)
    _write_loss_csv(str(args.out) + ".loss.csv", losses)
    _write_config_snapshot(args, Path(args.out).parent)
    print(f"trained {args.epochs} epochs on a pool of {len(pool)} graphs -> {args.out}")
    return 0


def _pair_label(args) -> str:
    tgt = Path(args.target).stem
    if args.variant != "nt" and args.src_ckpt:
        return f"{Path(args.src_ckpt).stem}->{tgt}"
    return tgt


def cmd_transfer(args) -> int:
    if args.variant == "nt" and args.src_ckpt:
        print("warning: --src-ckpt is ignored for variant nt", file=sys.stderr)
    src_ckpt = args.src_ckpt if args.variant != "nt" else None
    fgat_ckpt = args.fgat_ckpt if args.variant == "mintt" else None

    g = load_events(args.target)
    seeds = _parse_seeds(args.seeds) if args.seeds else [args.seed]
    pair = _pair_label(args)
    runs = []
    print(CSV_HEADER)
    for seed in seeds:
        cfg = tr.TransferConfig(
            split=_split_triple(args.split),
            nt_epochs=args.nt_epochs,
            ft_epochs=args.ft_epochs,
            ft_lr=args.ft_lr,
            seed=seed,
            rank_metrics=not args.no_rank_metrics,
            tgn=_tgn_config(args),
        )
        result = tr.run_variant(args.variant, g, cfg, src_ckpt=src_ckpt, fgat_ckpt=fgat_ckpt)
        runs.append(result)
        print(csv_row(result.test_report, pair))
        if args.mapping_out and result.mapping is not None:
            Path(args.mapping_out).write_text(tr.mapping_to_json(result.mapping) + "\n")

    report: dict = {"variant": args.variant, "pair": pair}
    if len(runs) == 1:
        report.update(
            seed=seeds[0],
            val=runs[0].val_report.to_dict(),
            test=runs[0].test_report.to_dict(),
        )
    else:
        metrics = ("ap", "auc", "mrr", "recall_at_k")
        mean, std = {}, {}
        for m in metrics:
            mean[m], std[m] = summarize([getattr(r.test_report, m) for r in runs])
        report.update(
            seeds=seeds,
            runs=[{"seed": s, "val": r.val_report.to_dict(), "test": r.test_report.to_dict()}
                  for s, r in zip(seeds, runs)],
            mean=mean,
            std=std,
        )
        mean_row = ",".join(f"{mean[m]:.6f}" for m in metrics)
        std_row = ",".join(f"{std[m]:.6f}" for m in metrics)
        print(f"{args.variant},{pair},mean,{mean_row}")
        print(f"{args.variant},{pair},std,{std_row}")

    Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    _write_config_snapshot(args, Path(args.out).parent)
    return 0


def cmd_sweep(args) -> int:
    fractions = _parse_fractions(args.fractions)
    variants = [v.strip().lower() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in tr.VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    g = load_events(args.target)
    seeds = _parse_seeds(args.seeds) if args.seeds else [args.seed]

    rows = [SWEEP_HEADER]
    for variant in variants:
        src = args.src_ckpt if variant != "nt" else None
        enc = args.fgat_ckpt if variant == "mintt" else None
        for fraction in fractions:
            splits = tr.sweep_splits(g, fraction)
            per_seed = []
            for seed in seeds:
                cfg = tr.TransferConfig(
                    nt_epochs=args.nt_epochs,
                    ft_epochs=args.ft_epochs,
                    ft_lr=args.ft_lr,
                    seed=seed,
                    rank_metrics=not args.no_rank_metrics,
                    tgn=_tgn_config(args),
                )
                result = tr.run_variant(variant, g, cfg, src_ckpt=src, fgat_ckpt=enc, splits=splits)
                rep = result.test_report
                per_seed.append(rep)
                rows.append(
                    f"{variant},{fraction},{seed},"
                    f"{rep.ap:.6f},{rep.auc:.6f},{rep.mrr:.6f},{rep.recall_at_k:.6f}"
                )
            stats = [summarize([getattr(r, m) for r in per_seed])
                     for m in ("ap", "auc", "mrr", "recall_at_k")]
            rows.append(f"{variant},{fraction},mean," + ",".join(f"{s[0]:.6f}" for s in stats))
            rows.append(f"{variant},{fraction},std," + ",".join(f"{s[1]:.6f}" for s in stats))

    text = "\n".join(rows) + "\n"
    Path(args.out).write_text(text)
    print(text, end="")
    _write_config_snapshot(args, Path(args.out).parent)
    return 0


def cmd_plot(args) -> int:
    """Condense a sweep CSV into per-variant AP-vs-fraction curves."""
    lines = Path(args.sweep).read_text().strip().splitlines()
    if not lines or lines[0] != SWEEP_HEADER:
        raise ValueError(f"{args.sweep} is not a sweep CSV")
    points: dict = {}
    for line in lines[1:]:
        variant, fraction, seed, ap, *_ = line.split(",")
        if seed in ("mean", "std"):
            continue
        points.setdefault((variant, float(fraction)), []).append(float(ap))
    out_lines = ["variant,fraction,mean_ap,std_ap"]
    for (variant, fraction) in sorted(points):
        mean, std = summarize(points[(variant, fraction)])
        out_lines.append(f"{variant},{fraction},{mean:.6f},{std:.6f}")
    Path(args.out).write_text("\n".join(out_lines) + "\n")
    print(f"wrote {len(out_lines) - 1} curve points -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    cfg = sd.SynthConfig(
        n_users=args.users,
        n_items=args.items,
        n_feature_tokens=args.tokens,
        n_communities=args.communities,
        n_events=args.events,
        features_per_node=args.features_per_node,
        sharpness=args.sharpness,
        signature_strength=args.signature_strength,
        user_signature_strength=args.user_signature_strength,
        item_churn=args.item_churn,
        edge_signal=args.edge_signal,
        target_scale=args.target_scale,
        target_event_scale=args.target_event_scale,
        seed=args.seed,
    )
    source, target, planted = sd.generate_pair(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sd.write_events_csv(source, out_dir / "source.csv")
    sd.write_events_csv(target, out_dir / "target.csv")
    mapping = {
        "users": {target.user_ids[t]: source.user_ids[s]
                  for t, s in enumerate(planted.user_analog)},
        "items": {target.item_ids[t]: source.item_ids[s]
                  for t, s in enumerate(planted.item_analog)},
    }
    (out_dir / "mapping.json").write_text(json.dumps(mapping, sort_keys=True, indent=2) + "\n")
    _write_config_snapshot(args, out_dir)
    print(
        f"wrote source ({source.num_events} events) and target "
        f"({target.num_events} events) to {out_dir}"
    )
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tgtransfer",
        description="Memory and weight transfer for temporal interaction graph models.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def sub(name, func, **kw):
        p = subparsers.add_parser(name, **kw)
        p.set_defaults(func=func, command=name)
        p.add_argument("--config", help="JSON file of per-command defaults")
        p.add_argument("--run-dir", help="directory for the config snapshot")
        return p

    p = sub("transform", cmd_transform, help="events CSV -> attribute-graph cache")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--min-user-deg", type=int, default=1)
    p.add_argument("--min-item-deg", type=int, default=1)

    p = sub("train-tgn", cmd_train_tgn, help="train a source model on an events CSV")
    p.add_argument("--graph", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_tgn_flags(p)

    p = sub("train-fgat", cmd_train_fgat, help="train the attribute-graph encoder on a pool")
    p.add_argument("--pool", required=True, help="directory of .cache transformed graphs")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--forbid", action="append", help="transformed graph that must not be in the pool")
    fd = fg.FgatConfig()
    p.add_argument("--dim", type=int, default=fd.dim)
    p.add_argument("--layers", type=int, default=fd.n_layers)
    p.add_argument("--lr", type=float, default=fd.lr)

    p = sub("transfer", cmd_transfer, help="run one variant on a target events CSV")
    p.add_argument("--variant", required=True, choices=tr.VARIANTS)
    p.add_argument("--src-ckpt")
    p.add_argument("--fgat-ckpt")
    p.add_argument("--target", required=True)
    p.add_argument("--split", default="0.1,0.45,0.45")
    p.add_argument("--ft-epochs", type=int, default=5)
    p.add_argument("--nt-epochs", type=int, default=30)
    p.add_argument("--ft-lr", type=float, default=None,
                   help="fine-tuning learning rate for wt/mintt (defaults to --lr)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="'1..5' or '1,3,9'; overrides --seed")
    p.add_argument("--out", required=True)
    p.add_argument("--mapping-out", help="write the memory mapping JSON here")
    p.add_argument("--no-rank-metrics", action="store_true")
    _add_tgn_flags(p)

    p = sub("sweep", cmd_sweep, help="scarcity grid with fixed 20%%/30%% val/test windows")
    p.add_argument("--target", required=True)
    p.add_argument("--src-ckpt")
    p.add_argument("--fgat-ckpt")
    p.add_argument("--fractions", default="0.5,0.3,0.1")
    p.add_argument("--variants", default="nt,wt,mintt")
    p.add_argument("--ft-epochs", type=int, default=5)
    p.add_argument("--nt-epochs", type=int, default=30)
    p.add_argument("--ft-lr", type=float, default=None,
                   help="fine-tuning learning rate for wt/mintt (defaults to --lr)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds")
    p.add_argument("--out", required=True)
    p.add_argument("--no-rank-metrics", action="store_true")
    _add_tgn_flags(p)

    p = sub("plot", cmd_plot, help="sweep CSV -> AP-vs-fraction curve CSV")
    p.add_argument("--sweep", required=True)
    p.add_argument("--out", required=True)

    d = sd.SynthConfig()
    p = sub("synth", cmd_synth, help="generate a synthetic source/target pair")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--users", type=int, default=d.n_users)
    p.add_argument("--items", type=int, default=d.n_items)
    p.add_argument("--tokens", type=int, default=d.n_feature_tokens)
    p.add_argument("--communities", type=int, default=d.n_communities)
    p.add_argument("--events", type=int, default=d.n_events)
    p.add_argument("--features-per-node", type=int, default=d.features_per_node)
    p.add_argument("--sharpness", type=float, default=d.sharpness)
    p.add_argument("--signature-strength", type=float, default=d.signature_strength)
    p.add_argument("--user-signature-strength", type=float, default=d.user_signature_strength,
                   help="override signature strength for user features only")
    p.add_argument("--item-churn", type=float, default=d.item_churn)
    p.add_argument("--edge-signal", type=float, default=d.edge_signal,
                   help="fraction of events carrying a truthful community tag")
    p.add_argument("--target-scale", type=float, default=d.target_scale)
    p.add_argument("--target-event-scale", type=float, default=d.target_event_scale,
                   help="override target event count fraction (defaults to --target-scale)")
    p.add_argument("--seed", type=int, default=d.seed)

    return parser, subparsers


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, subparsers = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            overrides = json.loads(Path(args.config).read_text())
            sub = subparsers.choices[args.command]
            valid = {a.dest for a in sub._actions}
            unknown = sorted(set(overrides) - valid)
            if unknown:
                raise ValueError(f"unknown config keys: {unknown}")
            sub.set_defaults(**overrides)
            args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as err:
        return int(err.code or 0)
    except (IngestError, CheckpointError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
