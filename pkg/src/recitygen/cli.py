"""Operator command line: run the service, export or inspect the corpus, and
replay generations for audit.

Exit codes: 0 success, 1 validation error (bad flags or inputs, message on
stderr), 2 runtime failure. Only `serve` opens a network listener; flags beat
environment variables, which beat built-in defaults.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import backends, pipeline
from .api import (
    ENV_DATA_DIR,
    ENV_INPAINTER,
    ENV_PORT,
    ENV_SEGMENTER,
    ENV_WORKERS,
    PortInUse,
    ServiceConfig,
    StoreOpenFailure,
    serve,
)
from .backends import BackendRef, Gateway
from .images import decode_png
from .masks import BinaryMask
from .store import QUESTION_KEYS, Store, StoreError, UnknownReference


class _CliParser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage by default; the contract here is 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _CliParser(prog="recitygen", description="participatory street redesign service")
    sub = parser.add_subparsers(dest="command", required=True)

    env = os.environ
    serve_p = sub.add_parser("serve", help="run the HTTP service")
    serve_p.add_argument("--port", type=int, default=int(env.get(ENV_PORT, 8000)))
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--data-dir", default=env.get(ENV_DATA_DIR, "./recitygen-data"))
    serve_p.add_argument("--segmenter", default=env.get(ENV_SEGMENTER, "mock"),
                         help='"mock" or a backend base URL')
    serve_p.add_argument("--inpainter", default=env.get(ENV_INPAINTER, "mock"),
                         help='"mock" or a backend base URL')
    serve_p.add_argument("--workers", type=int, default=int(env.get(ENV_WORKERS, 2)))

    export_p = sub.add_parser("export", help="write the event log as JSONL")
    export_p.add_argument("--data-dir", default=env.get(ENV_DATA_DIR), required=ENV_DATA_DIR not in env)
    export_p.add_argument("--out", required=True)

    stats_p = sub.add_parser("stats", help="print questionnaire and rating histograms")
    stats_p.add_argument("--data-dir", default=env.get(ENV_DATA_DIR), required=ENV_DATA_DIR not in env)

    batch_p = sub.add_parser("batch-generate", help="replay a generation for one entry")
    batch_p.add_argument("--data-dir", default=env.get(ENV_DATA_DIR), required=ENV_DATA_DIR not in env)
    batch_p.add_argument("--entry", required=True, help="feedback entry id")
    batch_p.add_argument("--prompt", required=True)
    batch_p.add_argument("--seed", type=int, default=None)
    batch_p.add_argument("-n", "--num-variants", type=int, default=3)
    batch_p.add_argument("--inpainter", default=env.get(ENV_INPAINTER, "mock"))
    return parser


def _cmd_serve(args: argparse.Namespace) -> int:
    try:
        config = ServiceConfig(
            data_dir=args.data_dir,
            port=args.port,
            host=args.host,
            segmenter=BackendRef.parse(args.segmenter),
            inpainter=BackendRef.parse(args.inpainter),
            worker_count=args.workers,
        )
    except ValueError as exc:
        print(f"recitygen serve: {exc}", file=sys.stderr)
        return 1
    try:
        serve(config)
    except (PortInUse, StoreOpenFailure) as exc:
        print(f"recitygen serve: {exc}", file=sys.stderr)
        return 2
    return 0


def format_stats(store: Store) -> str:
    """One line per questionnaire item plus a ratings line; counts for every
    score 1..5 are always present, so the output diffs cleanly."""
    aggregate = store.aggregate_stats()
    lines = []
    for key in QUESTION_KEYS:
        cells = " ".join(f"{score}:{aggregate.questions[key][score]}" for score in range(1, 6))
        lines.append(f"{key}: {cells}")
    cells = " ".join(f"{score}:{aggregate.ratings[score]}" for score in range(1, 6))
    lines.append(f"ratings: {cells}")
    return "\n".join(lines)


def _cmd_stats(args: argparse.Namespace) -> int:
    try:
        with Store(args.data_dir, read_only=True) as store:
            print(format_stats(store))
    except StoreError as exc:
        print(f"recitygen stats: {exc}", file=sys.stderr)
        return 2
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    try:
        with Store(args.data_dir, read_only=True) as store:
            count = store.export_jsonl(args.out)
    except StoreError as exc:
        print(f"recitygen export: {exc}", file=sys.stderr)
        return 2
    print(count)
    return 0


def _cmd_batch_generate(args: argparse.Namespace) -> int:
    if args.seed is not None and not 0 <= args.seed <= backends.UINT64_MASK:
        print("recitygen batch-generate: seed must fit in 64 bits", file=sys.stderr)
        return 1
    if not 1 <= args.num_variants <= backends.MAX_VARIANTS:
        print(f"recitygen batch-generate: -n must be 1..{backends.MAX_VARIANTS}", file=sys.stderr)
        return 1
    try:
        inpainter = BackendRef.parse(args.inpainter)
    except ValueError as exc:
        print(f"recitygen batch-generate: {exc}", file=sys.stderr)
        return 1
    try:
        store = Store(args.data_dir)
    except StoreError as exc:
        print(f"recitygen batch-generate: {exc}", file=sys.stderr)
        return 2
    try:
        try:
            entry = store.get_entry(args.entry)
        except UnknownReference as exc:
            print(f"recitygen batch-generate: {exc}", file=sys.stderr)
            return 1
        gateway = Gateway(inpainter=inpainter)
        manager = pipeline.SessionManager(store, gateway)
        jobs = pipeline.JobQueue(store, gateway, manager, worker_count=1)
        try:
            image = decode_png(store.get_blob(entry.image_ref))
            # No stored session in a fresh process: redesign the whole photo.
            mask = BinaryMask.full(image.width, image.height)
            try:
                job = jobs.submit_direct(
                    entry_id=entry.id,
                    image=image,
                    mask=mask,
                    prompt=args.prompt,
                    seed=args.seed,
                    num_variants=args.num_variants,
                )
            except (pipeline.PromptEmpty, pipeline.PromptTooLong, backends.InvalidRequest) as exc:
                print(f"recitygen batch-generate: {exc}", file=sys.stderr)
                return 1
            job = jobs.wait(job.job_id, timeout_s=600.0)
            if job.state != pipeline.JobState.SUCCEEDED:
                print(f"recitygen batch-generate: job failed: {job.reason}", file=sys.stderr)
                return 2
            for variant_id in job.variant_ids:
                print(variant_id)
            return 0
        finally:
            jobs.shutdown()
    finally:
        store.close()


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "serve": _cmd_serve,
        "export": _cmd_export,
        "stats": _cmd_stats,
        "batch-generate": _cmd_batch_generate,
    }
    try:
        return handlers[args.command](args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # contract: runtime failures exit 2
        print(f"recitygen {args.command}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
