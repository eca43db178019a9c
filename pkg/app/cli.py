"""Command-line entry point: ``hcp <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import random
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from app.config import Settings, load_settings
from app.errors import (
    BackendError,
    BudgetExceededError,
    CachePoisonError,
    NodeNotFoundError,
    ProviderError,
)
from app.logging_config import configure_logging
from app.schemas import EvalReport, HitDiff, PromptLengthReport
from app.services.backends import RecordingBackend, build_backend
from app.services.dependency_graph import dependency_closure
from app.services.embeddings import embed_batch
from app.services.evaluation import load_report, prompt_length_stats, run_eval, write_report
from app.services.relevance import candidate_texts
from app.services.repo_model import index_repository, summarize, write_index_dump
from app.services.scoring import diff_reports
from app.services.storage import EmbeddingCache, atomic_write_text
from app.services.strategies import PromptPipeline, build_provider, parse_strategy
from app.services.synthetic import bulky_repo, chain_repo, random_repo, write_repo
from app.services.tasks import load_tasks, make_task

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_BUDGET = 4
EXIT_BACKEND = 5

# Flag name -> Settings field.
_SETTING_FLAGS = {
    "repo_root": "repo_root",
    "template": "template_family",
    "model_max_length": "model_max_length",
    "strategy": "strategy",
    "top_k": "top_k",
    "top_p": "top_p",
    "d_level": "d_level",
    "p_level": "p_level",
    "query_radius": "query_radius",
    "chunk_size": "chunk_size",
    "top_n": "top_n",
    "seed": "seed",
    "tokenizer": "tokenizer",
    "embedding_provider": "embedding_provider",
    "cache_dir": "cache_dir",
    "backend": "backend",
    "replay_path": "replay_path",
    "max_new_tokens": "max_new_tokens",
    "workers": "eval_workers",
}


def _settings_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("configuration overrides")
    group.add_argument("--repo-root", dest="repo_root")
    group.add_argument("--template", choices=["deepseekcoder", "starcoder2", "codegemma"])
    group.add_argument("--model-max-length", type=int)
    group.add_argument("--strategy", help="infile | rag-bm25 | random-all | d-level[:N] | p-level[:N[+d:M]] | hcp")
    group.add_argument("--top-k", type=int)
    group.add_argument("--top-p", type=float)
    group.add_argument("--d-level", type=int)
    group.add_argument("--p-level", type=int, choices=[0, 1, 2], help="level for a bare p-level strategy")
    group.add_argument("--query-radius", type=int)
    group.add_argument("--chunk-size", type=int)
    group.add_argument("--top-n", type=int)
    group.add_argument("--seed", type=int)
    group.add_argument("--tokenizer")
    group.add_argument("--embedding-provider", choices=["offline", "openai"])
    group.add_argument("--cache-dir")
    group.add_argument("--backend", choices=["replay", "echo", "openai"])
    group.add_argument("--replay-path")
    group.add_argument("--max-new-tokens", type=int)
    group.add_argument("--workers", type=int)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcp", description="Hierarchical context pruning for code completion.")
    parser.add_argument("--config", help="JSON settings file")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    settings_parent = _settings_parent()
    commands = parser.add_subparsers(dest="command", required=True)

    index = commands.add_parser("index", help="parse a repository and dump its node model")
    index.add_argument("root")
    index.add_argument("--out", help="JSON-Lines index dump")

    prompt = commands.add_parser("prompt", parents=[settings_parent], help="build the prompt for one cursor")
    prompt.add_argument("--file", required=True)
    prompt.add_argument("--line", type=int, required=True)
    prompt.add_argument("--column", type=int, required=True)
    prompt.add_argument("--stats", action="store_true", help="report token counts on stderr")
    prompt.add_argument("--plan-out", help="write the plan summary as JSON")

    evaluate = commands.add_parser("eval", parents=[settings_parent], help="evaluate a task file")
    evaluate.add_argument("tasks")
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--record", help="append completions to this replay file")

    diff = commands.add_parser("diff", help="hit-count change between two reports")
    diff.add_argument("before")
    diff.add_argument("after")

    stats = commands.add_parser("stats", parents=[settings_parent], help="prompt length per dependency level")
    stats.add_argument("tasks")
    stats.add_argument("--out", help="write the table as JSON")

    cache = commands.add_parser("cache", parents=[settings_parent], help="embedding cache administration")
    cache.add_argument("action", choices=["warm", "clear"])

    deps = commands.add_parser("deps", parents=[settings_parent], help="dependency levels of one file")
    deps.add_argument("--file", required=True)
    deps.add_argument("--depth", type=int, default=4)

    synth = commands.add_parser("synth", help="write a synthetic benchmark repository")
    synth.add_argument("kind", choices=["chain", "random", "bulk"])
    synth.add_argument("--out", required=True)
    synth.add_argument("--files", type=int, default=6)
    synth.add_argument("--extra", type=int, default=0)
    synth.add_argument("--seed", type=int, default=0)
    return parser


def _load(args: argparse.Namespace) -> Settings:
    overrides: dict[str, Any] = {
        field: getattr(args, flag) for flag, field in _SETTING_FLAGS.items() if hasattr(args, flag)
    }
    return load_settings(args.config, overrides)


def _repo_root(settings: Settings) -> str:
    if not settings.repo_root:
        raise ValueError("No repository given; pass --repo-root or set repo_root")
    return settings.repo_root


def cmd_index(args: argparse.Namespace, settings: Settings) -> int:
    index = index_repository(args.root, settings.include_globs, settings.exclude_globs)
    if args.out:
        write_index_dump(index, args.out)
    summary = summarize(index)
    print(summary.model_dump_json(indent=2))
    for path, reason in index.failures.items():
        print(f"failed: {path}: {reason}", file=sys.stderr)
    return EXIT_OK


def cmd_prompt(args: argparse.Namespace, settings: Settings) -> int:
    pipeline = PromptPipeline.from_settings(settings)
    index = pipeline.index_for(_repo_root(settings))
    file = index.file(args.file)
    prepared = make_task(index.root, file.path, args.line, args.column, text=file.raw_text)
    plan = pipeline.plan(prepared, index)
    rendered = pipeline.render(plan)
    sys.stdout.write(rendered.text)
    sys.stdout.flush()
    if args.plan_out:
        atomic_write_text(args.plan_out, plan.summary().model_dump_json(indent=2) + "\n")
    if args.stats:
        print(
            f"tokens={rendered.counted_tokens} budget={pipeline.budget.limit} "
            f"truncated={str(rendered.truncated).lower()} segments_dropped={rendered.segments_dropped}",
            file=sys.stderr,
        )
    return EXIT_OK


def format_aggregates(report: EvalReport) -> str:
    aggregates = report.aggregates
    header = (
        f"{'strategy':<20} {'EM':>7} {'ES':>7} {'count':>6} {'errors':>6} "
        f"{'tokens':>9} {'median':>9} {'latency':>9} {'tasks/s':>9}"
    )
    row = (
        f"{report.meta.strategy:<20} {aggregates.em:>7.2f} {aggregates.es:>7.2f} "
        f"{aggregates.count:>6} {aggregates.errors:>6} "
        f"{aggregates.mean_prompt_tokens:>9.1f} {aggregates.median_prompt_tokens:>9.1f} "
        f"{aggregates.mean_latency_seconds:>9.3f} {aggregates.tasks_per_second:>9.1f}"
    )
    return f"{header}\n{row}"


def cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    tasks = load_tasks(args.tasks)
    strategy = parse_strategy(settings.strategy, settings.p_level, settings.d_level)
    pipeline = PromptPipeline.from_settings(settings, strategy)
    backend = build_backend(settings)
    if args.record:
        backend = RecordingBackend(backend, args.record)
    report = run_eval(
        tasks,
        strategy,
        backend,
        pipeline,
        max_new_tokens=settings.max_new_tokens,
        workers=settings.eval_workers,
        app_version=settings.app_version,
    )
    write_report(report, args.out)
    print(format_aggregates(report))
    return EXIT_OK


def format_diff(before: EvalReport, after: EvalReport, diff: HitDiff) -> str:
    return (
        f"{before.meta.strategy} -> {after.meta.strategy}: "
        f"gained {diff.gained}, lost {diff.lost}, net {diff.net:+d} over {diff.compared} tasks"
    )


def cmd_diff(args: argparse.Namespace, settings: Settings) -> int:
    before = load_report(args.before)
    after = load_report(args.after)
    diff = diff_reports(before, after)
    print(format_diff(before, after, diff))
    print(diff.model_dump_json())
    return EXIT_OK


def format_stats(report: PromptLengthReport) -> str:
    lines = [f"{'level':<6} {'count':>6} {'median':>10} {'mean':>10}"]
    lines.extend(
        f"{row.level:<6} {row.count:>6} {row.median:>10.1f} {row.mean:>10.1f}" for row in report.levels
    )
    return "\n".join(lines)


def cmd_stats(args: argparse.Namespace, settings: Settings) -> int:
    tasks = load_tasks(args.tasks)
    pipeline = PromptPipeline.from_settings(settings)
    report = prompt_length_stats(tasks, pipeline)
    if args.out:
        atomic_write_text(args.out, report.model_dump_json(indent=2) + "\n")
    print(format_stats(report))
    return EXIT_OK


def cmd_cache(args: argparse.Namespace, settings: Settings) -> int:
    cache = EmbeddingCache(str(settings.embedding_cache_path()))
    if args.action == "clear":
        removed = cache.clear()
        print(f"cleared {removed} cached embeddings")
        return EXIT_OK

    index = index_repository(_repo_root(settings), settings.include_globs, settings.exclude_globs)
    texts = [text for _path, _name, text in candidate_texts(index.paths(), index).values()]
    before = len(cache)
    embed_batch(
        texts,
        build_provider(settings),
        cache,
        batch_size=settings.embedding_batch_size,
        max_in_flight=settings.embedding_max_in_flight,
    )
    print(f"warmed {len(texts)} functions ({len(cache) - before} new embeddings)")
    return EXIT_OK


def cmd_deps(args: argparse.Namespace, settings: Settings) -> int:
    index = index_repository(_repo_root(settings), settings.include_globs, settings.exclude_globs)
    dep_set = dependency_closure(index.file(args.file).path, args.depth, index)
    print(dep_set.to_dump().model_dump_json(indent=2))
    for error in dep_set.errors:
        print(f"unresolved: {error}", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, settings: Settings) -> int:
    if args.kind == "chain":
        sources = chain_repo(args.files, extra=args.extra)
    elif args.kind == "random":
        sources = random_repo(random.Random(args.seed), args.files)
    else:
        sources = bulky_repo(n_files=args.files, seed=args.seed)
    written = write_repo(sources, args.out)
    print(f"wrote {len(written)} files to {Path(args.out)}")
    return EXIT_OK


COMMANDS = {
    "index": cmd_index,
    "prompt": cmd_prompt,
    "eval": cmd_eval,
    "diff": cmd_diff,
    "stats": cmd_stats,
    "cache": cmd_cache,
    "deps": cmd_deps,
    "synth": cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)

    try:
        settings = _load(args)
        configure_logging(args.log_level or settings.log_level)
        logger.debug("Running %s", args.command)
        return COMMANDS[args.command](args, settings)
    except BudgetExceededError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_BUDGET
    except (BackendError, ProviderError, CachePoisonError) as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_BACKEND
    except (OSError, NodeNotFoundError) as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_IO
    except ValueError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
