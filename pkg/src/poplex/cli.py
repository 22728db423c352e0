"""Command-line interface.

One binary, subcommands for every stage plus `pipeline` for an end-to-end
run from a single JSON config and `report` for the figure-data bundle.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, active_backend
from . import align as align_mod
from . import audit as audit_mod
from . import partition as part_mod
from . import probes as probes_mod
from .errors import PoplexError
from .fileio import atomic_write_text, dumps_canonical
from .graph import load_edge_list, validate
from .pipeline import (DEFAULT_PIPELINE_CONFIG, PipelineRun,
                       load_pipeline_config)
from .sgns import EmbeddingMatrix, TrainConfig, train
from .synth import SyntheticPopulationConfig, generate_synthetic
from .walks import WalkConfig, WalkCorpus, generate_walks


def _cmd_synth(args) -> int:
    cfg = (SyntheticPopulationConfig.from_json(args.config)
           if args.config else SyntheticPopulationConfig())
    graphs, attrs = generate_synthetic(cfg, args.seed)
    import os

    os.makedirs(args.out_dir, exist_ok=True)
    from .graph import save_edge_list

    for g in graphs:
        save_edge_list(g, os.path.join(args.out_dir, f"year_{g.year}.edges"))
    attrs.save_jsonl(os.path.join(args.out_dir, "attrs.jsonl"))
    print(f"wrote {len(graphs)} yearly graphs and attributes to {args.out_dir}")
    return 0


def _cmd_validate(args) -> int:
    graph = load_edge_list(args.graph, args.num_nodes)
    report = validate(graph)
    print(json.dumps(report.to_dict(), indent=2))
    return 0 if report.valid else 1


def _cmd_walk(args) -> int:
    graph = load_edge_list(args.graph, args.num_nodes, year=args.year)
    cfg = WalkConfig(mode=args.mode, persistence_p=args.p, walk_length=args.len,
                     walks_per_node=args.num, seed=args.seed)
    cfg.validate()
    corpus = generate_walks(graph, cfg, workers=args.workers)
    corpus.save(args.out)
    print(f"wrote {corpus.num_walks} walks ({len(corpus.tokens)} tokens) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    corpus = WalkCorpus.load(args.corpus)
    cfg = TrainConfig(dim=args.dim, window=args.window, negatives=args.negatives,
                      epochs=args.epochs, learning_rate=args.lr,
                      subsample_threshold=args.subsample, seed=args.seed)
    cfg.validate()
    emb = train(corpus, cfg, workers=args.workers)
    emb.save(args.out)
    if args.text_out:
        emb.save_text(args.text_out)
    print(f"trained {emb.vocab_size}x{emb.dim} embedding "
          f"({active_backend()} backend) -> {args.out}")
    return 0


def _cmd_align(args) -> int:
    src = EmbeddingMatrix.load(args.source)
    tgt = EmbeddingMatrix.load(args.target)
    n = min(src.num_nodes, tgt.num_nodes)
    ids = np.nonzero(src.trained_mask()[:n] & tgt.trained_mask()[:n])[0]
    X = src.vectors[ids].astype(np.float64)
    Y = tgt.vectors[ids].astype(np.float64)
    fit = align_mod.fit_ols if args.method == "ols" else align_mod.fit_procrustes
    mapping = fit(X, Y, source_year=src.year, target_year=tgt.year)
    mapping.save(args.out)
    if args.apply_out:
        align_mod.apply(mapping, src).save(args.apply_out)
    print(f"fitted {args.method} map on {len(ids)} common nodes -> {args.out}")
    return 0


def _cmd_align_eval(args) -> int:
    emb_x = EmbeddingMatrix.load(args.emb_a)
    emb_y = EmbeddingMatrix.load(args.emb_b)
    n = min(emb_x.num_nodes, emb_y.num_nodes)
    ids = np.nonzero(emb_x.trained_mask()[:n] & emb_y.trained_mask()[:n])[0]
    ev = align_mod.evaluate_pairs(emb_x, emb_y, args.pairs, args.seed, ids=ids)
    print(json.dumps(ev.to_dict(), indent=2))
    return 0


def _cmd_whiten_fit(args) -> int:
    emb = EmbeddingMatrix.load(args.emb)
    ids = np.nonzero(emb.trained_mask()[: emb.num_nodes])[0]
    wt = part_mod.fit_whitening(emb.vectors[ids].astype(np.float64), eps=args.eps)
    wt.save(args.out)
    print(f"fitted whitening on {len(ids)} rows -> {args.out}")
    return 0


def _cmd_grid(args) -> int:
    grid = part_mod.fibonacci_grid(args.k, args.dim)
    grid.save(args.out)
    print(f"{grid.construction} grid, k={grid.k}, d={grid.dim} -> {args.out}")
    return 0


def _cmd_partition(args) -> int:
    emb = EmbeddingMatrix.load(args.emb)
    grid = part_mod.FibonacciGrid.load(args.grid)
    wt = part_mod.WhiteningTransform.load(args.whiten) if args.whiten else None
    part = part_mod.assign(emb, grid, wt)
    part.save(args.out)
    metrics = part_mod.balance_metrics(part)
    print(json.dumps({k: v for k, v in metrics.items() if k != "lorenz"}, indent=2))
    return 0


def _cmd_retention(args) -> int:
    base = part_mod.Partition.load(args.base)
    later = part_mod.Partition.load(args.later)
    value = part_mod.retention(base, later)
    print(json.dumps({"retention": value}))
    return 0


def _cmd_audit(args) -> int:
    inp = audit_mod.AuditInput.from_json(args.input)
    result = audit_mod.run_audit(inp, alpha=args.alpha, wiggle_sims=args.wiggle_sims)
    atomic_write_text(args.out, dumps_canonical(result.to_dict()) + "\n")
    if args.funnel_out:
        import csv
        import io

        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["cluster", "share", "deviation_pp",
                                                 "envelope_pp", "flagged"])
        writer.writeheader()
        for row in result.funnel:
            writer.writerow(row)
        atomic_write_text(args.funnel_out, buf.getvalue())
    print(json.dumps({"S_obs": result.s_obs, "p_global": result.p_global,
                      "threshold": result.threshold, "p_tmax": result.p_tmax,
                      "flagged": result.flagged_clusters()}))
    return 0


def _cmd_eval(args) -> int:
    tasks = probes_mod.load_tasks(args.tasks)
    emb = EmbeddingMatrix.load(args.emb)
    results = []
    for task in tasks:
        _, res = probes_mod.train_probe(task, emb, hidden=args.hidden, seed=args.seed)
        results.append(res.to_dict())
        print(f"{task.name}: {res.metric_name}={res.test_metric:.4f} "
              f"(batch={res.chosen['batch']}, lr={res.chosen['lr']})")
    atomic_write_text(args.report, dumps_canonical({"results": results}) + "\n")
    return 0


def _cmd_pipeline(args) -> int:
    config = load_pipeline_config(args.config)
    out_dir = args.out_dir or config.get("out_dir", "pipeline_run")
    run = PipelineRun(config, out_dir, workers=args.workers)
    if args.only:
        ran = run.run_stage(args.only, force=args.force)
        print(f"[{args.only}] {'done' if ran else 'skipped (cached)'}")
    else:
        run.run_all(force=args.force, log=print)
    return 0


def _cmd_report(args) -> int:
    config = load_pipeline_config(args.config)
    out_dir = args.out_dir or config.get("out_dir", "pipeline_run")
    run = PipelineRun(config, out_dir)
    ran = run.run_stage("report", force=args.force)
    print(f"[report] {'done' if ran else 'skipped (cached)'}: "
          f"{run.path('report.json')}, {run.path('report.csv')}")
    return 0


def _cmd_init_config(args) -> int:
    atomic_write_text(args.out, json.dumps(DEFAULT_PIPELINE_CONFIG, indent=2,
                                           sort_keys=True) + "\n")
    print(f"wrote default pipeline config to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poplex",
        description="Multiplex network embeddings: walks, training, alignment, "
                    "partitioning, audits, probes.")
    parser.add_argument("--version", action="version",
                        version=f"poplex {__version__} ({active_backend()} backend)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic temporal population")
    p.add_argument("--config", help="SyntheticPopulationConfig JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("validate", help="validate an edge-list graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--num-nodes", type=int, required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("walk", help="generate a walk corpus")
    p.add_argument("--graph", required=True)
    p.add_argument("--num-nodes", type=int, required=True)
    p.add_argument("--year", type=int, default=0)
    p.add_argument("--mode", choices=["flatten", "blind", "aware"], default="aware")
    p.add_argument("--p", type=float, default=0.8, help="layer persistence")
    p.add_argument("--len", type=int, default=40, help="person tokens per walk")
    p.add_argument("--num", type=int, default=4, help="walks per node")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_walk)

    p = sub.add_parser("train", help="train SGNS embeddings on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--subsample", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--text-out", help="optional word2vec-style text export")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("align", help="fit a map from source into target space")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--method", choices=["ols", "procrustes"], default="ols")
    p.add_argument("--out", required=True)
    p.add_argument("--apply-out", help="also write the aligned source embedding")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("align-eval", help="pairwise-cosine correlation between spaces")
    p.add_argument("--emb-a", required=True)
    p.add_argument("--emb-b", required=True)
    p.add_argument("--pairs", type=int, default=132_530)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_align_eval)

    p = sub.add_parser("whiten-fit", help="fit a PCA whitening transform")
    p.add_argument("--emb", required=True)
    p.add_argument("--eps", type=float, default=1e-9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_whiten_fit)

    p = sub.add_parser("grid", help="build a direction grid")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("partition", help="assign embeddings to grid cells")
    p.add_argument("--emb", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--whiten", help="optional whitening transform file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_partition)

    p = sub.add_parser("retention", help="fraction keeping their base cluster")
    p.add_argument("--base", required=True)
    p.add_argument("--later", required=True)
    p.set_defaults(func=_cmd_retention)

    p = sub.add_parser("audit", help="representativeness audit of a sample")
    p.add_argument("--input", required=True, help='JSON {"c": [...], "x": [...], "Q": n, "seed": s}')
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--wiggle-sims", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--funnel-out", help="optional funnel-plot CSV")
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("eval", help="train probes for tasks against an embedding")
    p.add_argument("--tasks", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pipeline", help="run the full pipeline from one config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", help="overrides the config's out_dir")
    p.add_argument("--only", help="run a single stage")
    p.add_argument("--force", action="store_true", help="ignore cached manifests")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("report", help="(re)build the report bundle of a run")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("init-config", help="write the default pipeline config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_init_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PoplexError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
