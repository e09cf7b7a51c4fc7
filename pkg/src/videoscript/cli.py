"""Command-line entry points.

Subcommands: run (full pipeline), ablate (variant sweep with a merged
table), score (rebuild the report from stored verdicts), inspect (print a
stored transcript or reasoning trace). Exit codes: 0 success, 1 bad
configuration or manifest, 2 per-question failures above the budget.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import urllib.parse
from pathlib import Path

from .budget import DropTarget
from .config import ConfigError, DropSpec, RunConfig, derive_variant, load_config
from .evaluation import (
    build_report,
    report_table,
    report_to_record,
    verdict_from_record,
)
from .figures import save_category_accuracy
from .manifest import ManifestError
from .pipeline import EmptyVariantList, ablation_table, run_ablation, run_pipeline

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURES = 2


def _parse_drop(value: str) -> DropSpec | None:
    if value == "none":
        return None
    parts = value.split(":")
    if len(parts) != 2:
        raise ConfigError(f"--drop expects target:rate or 'none', got {value!r}")
    try:
        return DropSpec(target=DropTarget(parts[0]), rate=float(parts[1]))
    except ValueError as exc:
        raise ConfigError(f"--drop {value!r}: {exc}") from exc


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates: dict = {}
    if args.manifest is not None:
        updates["manifest_path"] = args.manifest
    if args.output_dir is not None:
        updates["output_dir"] = args.output_dir
    if args.cache_root is not None:
        updates["cache_root"] = args.cache_root
    if args.context_limit is not None:
        updates["context_limit"] = args.context_limit
    if args.initial_clip_length is not None:
        updates["initial_clip_length"] = args.initial_clip_length
    if args.fixed_clip_length is not None:
        updates["fixed_clip_length"] = args.fixed_clip_length
    if args.drop is not None:
        updates["drop_spec"] = _parse_drop(args.drop)
    if args.time_aware is not None:
        updates["time_aware"] = args.time_aware
    if args.max_in_flight is not None:
        updates["max_in_flight"] = args.max_in_flight
    if args.temperature is not None:
        updates["temperature"] = args.temperature
    if args.resume:
        updates["resume"] = True
    if args.failure_budget is not None:
        updates["failure_budget"] = args.failure_budget
    if not updates:
        return config
    return dataclasses.replace(config, **updates)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="JSON run configuration file")
    parser.add_argument("--manifest", help="override the manifest path")
    parser.add_argument("--output-dir", help="override the output directory")
    parser.add_argument("--cache-root", help="override the response cache directory")
    parser.add_argument("--context-limit", type=int, help="model context window in tokens")
    parser.add_argument("--initial-clip-length", type=float, help="adaptive mode starting clip length (s)")
    parser.add_argument("--fixed-clip-length", type=float, help="pin the clip length, disabling adaptation")
    parser.add_argument("--drop", help="token dropping, target:rate (subtitles:0.75) or 'none'")
    parser.add_argument(
        "--time-aware",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="prefix transcript lines with timestamps",
    )
    parser.add_argument("--max-in-flight", type=int, help="concurrent request cap")
    parser.add_argument("--temperature", type=float, help="sampling temperature for the reasoning model")
    parser.add_argument("--resume", action="store_true", help="skip videos with stored artifacts")
    parser.add_argument("--failure-budget", type=int, help="per-question failures tolerated before exit 2")


def _cmd_run(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    report = run_pipeline(config)
    sys.stdout.write(report_table(report))
    if report.counts["errors"] > config.failure_budget:
        logger.error(
            "%d question failures exceed the budget of %d",
            report.counts["errors"],
            config.failure_budget,
        )
        return EXIT_FAILURES
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    base = _apply_overrides(load_config(args.config), args)
    variants = [derive_variant(base, spec) for spec in args.variant]
    rows = run_ablation(variants, table_dir=base.output_dir)
    sys.stdout.write(ablation_table(rows))
    worst = max(report.counts["errors"] for _, report in rows)
    if worst > base.failure_budget:
        return EXIT_FAILURES
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    verdicts_path = run_dir / "verdicts.jsonl"
    if not verdicts_path.is_file():
        raise ConfigError(f"{verdicts_path} not found; is this a run directory?")
    verdicts = []
    with open(verdicts_path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("record") == "verdict":
                verdicts.append(verdict_from_record(record))
    if not verdicts:
        raise ConfigError(f"{verdicts_path} holds no verdict records")
    labels = {v.question_id: v.category for v in verdicts if v.category is not None}
    report = build_report(verdicts, labels)
    (run_dir / "report.txt").write_text(report_table(report), encoding="utf-8")
    (run_dir / "report.json").write_text(
        json.dumps(report_to_record(report), ensure_ascii=False, indent=2), encoding="utf-8"
    )
    figures_dir = run_dir / "figures"
    figures_dir.mkdir(exist_ok=True)
    save_category_accuracy(report, figures_dir / "category_accuracy.png")
    sys.stdout.write(report_table(report))
    return EXIT_OK


def _cmd_inspect(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    safe = urllib.parse.quote(args.video, safe="")
    artifact_path = run_dir / "videos" / f"{safe}.json"
    if not artifact_path.is_file():
        raise ConfigError(f"no stored artifact for video {args.video!r} under {run_dir}")
    record = json.loads(artifact_path.read_text(encoding="utf-8"))
    out = sys.stdout
    if args.question is not None:
        for entry in record.get("questions", []):
            if entry["question_id"] == args.question:
                verdict = entry["verdict"]
                out.write(f"question {args.question} ({entry['kind']})\n")
                out.write(f"predicted: {verdict['predicted']!r}  gold: {verdict['gold']!r}\n")
                out.write(f"correct: {verdict['correct']}  abstained: {verdict['abstained']}\n")
                if verdict.get("error"):
                    out.write(f"error: {verdict['error']}\n")
                if args.raw and entry.get("raw_output") is not None:
                    out.write("raw output:\n")
                    out.write(entry["raw_output"])
                    out.write("\n")
                return EXIT_OK
        raise ConfigError(f"question {args.question!r} not found in the artifact")
    if record.get("error"):
        out.write(f"video {record['video_id']} failed: {record['error']}\n")
        return EXIT_OK
    plan = record["budget_plan"]
    out.write(f"video {record['video_id']}\n")
    trace = ", ".join(f"L={length:g}: {count}" for length, count in plan["trace"])
    out.write(f"budget trace: {trace}\n")
    out.write(
        f"outcome: {plan['outcome']} (final clip length {plan['final_clip_length']:g} s, "
        f"{plan['final_token_count']} tokens against limit {plan['context_limit']})\n"
    )
    out.write("transcript:\n")
    out.write(record["transcript"]["subtitle_block"])
    if record["transcript"]["subtitle_block"] and record["transcript"]["caption_block"]:
        out.write("\n")
    out.write(record["transcript"]["caption_block"])
    out.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videoscript",
        description="Transcript-based video question answering over pluggable model backends.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the pipeline over a manifest")
    _add_run_flags(run_p)
    run_p.set_defaults(handler=_cmd_run)

    ablate_p = sub.add_parser("ablate", help="run variants and merge a comparison table")
    _add_run_flags(ablate_p)
    ablate_p.add_argument(
        "--variant",
        action="append",
        required=True,
        help="variant spec: adaptive | fixed:<seconds> | drop:<target>:<rate> (repeatable)",
    )
    ablate_p.set_defaults(handler=_cmd_ablate)

    score_p = sub.add_parser("score", help="rebuild the report from stored verdicts")
    score_p.add_argument("--run-dir", required=True, help="run output directory")
    score_p.set_defaults(handler=_cmd_score)

    inspect_p = sub.add_parser("inspect", help="print a stored transcript or trace")
    inspect_p.add_argument("--run-dir", required=True, help="run output directory")
    inspect_p.add_argument("--video", required=True, help="video id")
    inspect_p.add_argument("--question", help="question id within the video")
    inspect_p.add_argument("--raw", action="store_true", help="include the raw model output")
    inspect_p.set_defaults(handler=_cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (ConfigError, ManifestError, EmptyVariantList) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
