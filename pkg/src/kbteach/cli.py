"""Command line front end.

Subcommands cover the full workflow: synthesize an original KB, carve a
simulated world out of it, run initial training into a checkpoint,
evaluate the interactive stream, sweep configuration grids, and serve
the HTTP interface.  All artifact files are deterministic for a given
input and seed; wall-clock timing goes to stdout only.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import EngineConfig
from .decision import ThresholdVariant, save_buffers_tsv
from .engine import SamplingStrategy, initial_training
from .evaluate import SweepCell, run_stream, sweep, write_log
from .kb import KBFormatError, load_kb, save_kb
from .simulate import WorldBuildConfig, WorldBuildError, build_world, load_world, save_world
from .synth import SynthConfig, synthetic_original_kb


class CliError(Exception):
    """User-facing failure; prints the message and exits with status 2."""


def _load_config(args: argparse.Namespace) -> EngineConfig:
    if getattr(args, "config", None):
        try:
            config = EngineConfig.from_file(args.config)
        except (OSError, ValueError) as exc:
            raise CliError(f"bad config file: {exc}") from exc
    else:
        config = EngineConfig()
    overrides = {}
    for name in (
        "dim",
        "init_epochs",
        "seed",
        "alpha",
        "rho",
        "learning_rate",
        "max_clues",
        "max_entity_facts",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "variant", None) is not None:
        overrides["threshold_variant"] = args.variant
    if getattr(args, "sampling", None) is not None:
        overrides["sampling"] = args.sampling
    if getattr(args, "no_buffer", False):
        overrides["use_performance_buffer"] = False
    if overrides:
        config = EngineConfig.from_dict({**config.to_dict(), **overrides})
    return config


def _cmd_make_kb(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        n_entities=args.entities,
        n_clusters=args.clusters,
        n_sym_relations=args.sym_relations,
        hubs_per_cluster=args.hubs_per_cluster,
        member_fraction=args.member_fraction,
        relations_per_member=args.relations_per_member,
        n_scatter_relations=args.scatter_relations,
        scatter_triples=args.scatter_triples,
        n_category_relations=args.category_relations,
        noise_fraction=args.noise,
    )
    try:
        kb = synthetic_original_kb(cfg, np.random.default_rng(args.seed))
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    save_kb(kb, args.out)
    print(f"wrote {args.out}: {kb.n_entities} entities, {kb.n_relations} relations, "
          f"{kb.n_triples} triples")
    return 0


def _cmd_build_world(args: argparse.Namespace) -> int:
    try:
        kb = load_kb(args.kb)
    except (OSError, KBFormatError) as exc:
        raise CliError(str(exc)) from exc
    cfg = WorldBuildConfig(
        n_test_relations=args.test_relations,
        min_triples_per_relation=args.min_triples,
        unknown_relation_fraction=args.unknown_relation_fraction,
        per_relation_cap=args.cap,
        test_fraction=args.test_fraction,
        unknown_entity_fraction=args.unknown_entity_fraction,
        known_base_share=args.base_share,
        seed=args.seed,
    )
    try:
        world = build_world(kb, cfg, np.random.default_rng(args.seed))
    except WorldBuildError as exc:
        raise CliError(str(exc)) from exc
    save_world(world, args.out)
    print(f"wrote {args.out}: base {world.base_kb.n_triples}, user {world.user_kb.n_triples}, "
          f"{len(world.queries)} queries "
          f"({world.meta['n_unknown_relations']} unknown relations, "
          f"{world.meta['n_moved_entities']} moved entities)")
    return 0


def _cmd_init_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    try:
        world = load_world(args.world)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load world {args.world}: {exc}") from exc
    engine = initial_training(
        world.base_kb,
        config.model_hyper(),
        config.session_config(),
        config.init_epochs,
        np.random.default_rng(config.seed),
    )
    save_checkpoint(engine, config, args.out)
    print(f"wrote {args.out}: {engine.kb.n_entities} entities, "
          f"{engine.kb.n_relations} relations, {engine.model.step} optimizer steps, "
          f"{len(engine.thresholds.relations)} relation thresholds")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        engine, config = load_checkpoint(args.state)
    except CheckpointError as exc:
        raise CliError(str(exc)) from exc
    try:
        world = load_world(args.world)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load world {args.world}: {exc}") from exc
    result = run_stream(engine, world, np.random.default_rng(config.seed))
    result.report.config = config.to_dict()
    os.makedirs(args.outdir, exist_ok=True)
    report_path = os.path.join(args.outdir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(result.report.to_json())
    write_log(result.records, os.path.join(args.outdir, "log.tsv"))
    save_buffers_tsv(os.path.join(args.outdir, "perf_buffer.tsv"), engine.perf)
    save_buffers_tsv(os.path.join(args.outdir, "threshold_buffer.tsv"), engine.thresholds)
    if args.state_out:
        save_checkpoint(engine, config, args.state_out)
    overall = result.report.overall
    rej = result.report.rejection
    print(f"{result.report.n_queries} queries | "
          f"mrr {overall['mrr']:.4f} | hits@1 {overall['hits1']:.1f}% | "
          f"hits@10 {overall['hits10']:.1f}% | "
          f"unanswerable {result.report.unanswerable_count}")
    pr_rej = rej["pr_reject_given_no_answer"]
    print(f"pr(predict|answerable) "
          f"{rej['pr_predict_given_answer_exists'] if rej['pr_predict_given_answer_exists'] is not None else float('nan'):.3f} | "
          f"pr(reject|unanswerable) {pr_rej if pr_rej is not None else float('nan'):.3f}")
    print(f"mean session {result.mean_session_seconds * 1000:.1f} ms")
    print(f"wrote {report_path}")
    return 0


def _parse_budgets(text: str) -> list[tuple[int, int]]:
    budgets = []
    for part in text.split(","):
        try:
            c, f = part.split("x")
            budgets.append((int(c), int(f)))
        except ValueError as exc:
            raise CliError(f"bad budget {part!r}, expected CLUESxFACTS like 1x3") from exc
    return budgets


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args)
    try:
        world = load_world(args.world)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load world {args.world}: {exc}") from exc
    try:
        variants = [ThresholdVariant(v) for v in args.variants.split(",")]
        samplings = [SamplingStrategy(s) for s in args.samplings.split(",")]
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    budgets = _parse_budgets(args.budgets)
    cells: list[SweepCell] = []
    for v in variants:
        for s in samplings:
            for c, f in budgets:
                cells.append(SweepCell(v, s, c, f))
                if args.buffer_ablation:
                    cells.append(SweepCell(v, s, c, f, use_performance_buffer=False))
    results = sweep(
        world,
        config.model_hyper(),
        config.session_config(),
        config.init_epochs,
        config.seed,
        cells,
    )
    os.makedirs(args.outdir, exist_ok=True)
    summary_rows = []
    for name, result in results.items():
        cell_dir = os.path.join(args.outdir, name)
        os.makedirs(cell_dir, exist_ok=True)
        with open(os.path.join(cell_dir, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(result.report.to_json())
        write_log(result.records, os.path.join(cell_dir, "log.tsv"))
        o = result.report.overall
        rej = result.report.rejection
        summary_rows.append(
            (
                name,
                o["n"],
                o["mrr"],
                o["hits1"],
                o["hits10"],
                rej["pr_predict_given_answer_exists"],
                rej["pr_reject_given_no_answer"],
            )
        )
    summary_path = os.path.join(args.outdir, "summary.tsv")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("cell\tn\tmrr\thits1\thits10\tpr_predict_ae\tpr_reject_not_ae\n")
        for row in summary_rows:
            cell, n, v_mrr, h1, h10, ppred, prej = row
            fmt = lambda x: "" if x is None else f"{x:.6f}"
            fh.write(f"{cell}\t{n}\t{fmt(v_mrr)}\t{fmt(h1)}\t{fmt(h10)}\t{fmt(ppred)}\t{fmt(prej)}\n")
    for row in summary_rows:
        print(f"{row[0]}: mrr {row[2]:.4f}, hits@1 {row[3]:.1f}%, hits@10 {row[4]:.1f}%")
    print(f"wrote {summary_path}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    try:
        engine, config = load_checkpoint(args.state)
    except CheckpointError as exc:
        raise CliError(str(exc)) from exc
    from .server import serve  # heavy import, only the service needs it

    serve(
        engine,
        config,
        host=args.host,
        port=args.port,
        state_path=args.state_out or args.state,
        append_log=args.append_log,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbteach",
        description="Interactive KB completion: train, ask, answer or reject.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-kb", help="synthesize an original KB as TSV")
    p.add_argument("--out", required=True)
    p.add_argument("--entities", type=int, default=1200)
    p.add_argument("--clusters", type=int, default=8)
    p.add_argument("--sym-relations", type=int, default=6)
    p.add_argument("--hubs-per-cluster", type=int, default=2)
    p.add_argument("--member-fraction", type=float, default=0.3)
    p.add_argument("--relations-per-member", type=int, default=2)
    p.add_argument("--scatter-relations", type=int, default=2)
    p.add_argument("--scatter-triples", type=int, default=120)
    p.add_argument("--category-relations", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.06)
    p.add_argument("--seed", type=int, default=1000)
    p.set_defaults(func=_cmd_make_kb)

    p = sub.add_parser("build-world", help="carve base/user stores and queries from a KB")
    p.add_argument("--kb", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--test-relations", type=int, default=None)
    p.add_argument("--min-triples", type=int, default=0)
    p.add_argument("--unknown-relation-fraction", type=float, default=0.34)
    p.add_argument("--cap", type=int, default=250)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--unknown-entity-fraction", type=float, default=0.45)
    p.add_argument("--base-share", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=1000)
    p.set_defaults(func=_cmd_build_world)

    def add_config_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON file with engine configuration")
        p.add_argument("--dim", type=int)
        p.add_argument("--init-epochs", type=int, dest="init_epochs")
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.add_argument("--max-clues", type=int, dest="max_clues")
        p.add_argument("--max-entity-facts", type=int, dest="max_entity_facts")
        p.add_argument("--variant", choices=[v.value for v in ThresholdVariant])
        p.add_argument("--sampling", choices=[s.value for s in SamplingStrategy])
        p.add_argument("--no-buffer", action="store_true")

    p = sub.add_parser("init-train", help="train on a world's base KB into a checkpoint")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)
    add_config_options(p)
    p.set_defaults(func=_cmd_init_train)

    p = sub.add_parser("evaluate", help="run the interactive stream from a checkpoint")
    p.add_argument("--state", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--state-out", help="also save the post-stream engine state here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="evaluate a grid of session configurations")
    p.add_argument("--world", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--variants", default="max")
    p.add_argument("--samplings", default="both")
    p.add_argument("--budgets", default="1x3")
    p.add_argument("--buffer-ablation", action="store_true",
                   help="also run each cell with the performance buffer off")
    add_config_options(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("serve", help="serve the HTTP interface from a checkpoint")
    p.add_argument("--state", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8100)
    p.add_argument("--state-out", help="checkpoint path for post-session saves")
    p.add_argument("--append-log", help="TSV file that accumulates acquired facts")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
