"""Operator CLI: run, score, report, import-scores, stats, validate, sweep.

One JSON config file drives everything; ``${VAR}`` in string values is
replaced from the environment, and flags override file values. Exit codes
are stable: 0 ok, 2 config error, 3 provider auth error, 4 budget exhausted
before any cell ran, 5 bad external-score row.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from .core import ReasoningEffort, StrategyId, StrategySpec, validate_spec
from .datasets import DatasetDescriptor, DatasetError, dataset_statistics, load_jsonl
from .metrics import MetricError, ScoreImportError, TooFewPointsError, UnknownSampleError
from .provider import AuthError
from .report import (
    render_effort_sweep,
    render_main_tables,
    render_paradigm_abstractiveness,
    render_tradeoff,
)
from .runner import (
    ConfigError,
    DatasetEntry,
    ExperimentConfig,
    ProviderConfig,
    RunnerError,
    RunStore,
    build_provider,
    group_mapping,
    load_metric_rows,
    merge_external_scores,
    run_experiment,
    run_status,
    score_run,
    sweep_reasoning_effort,
)
from .strategies import expected_call_bounds

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_AUTH = 3
EXIT_BUDGET = 4
EXIT_IMPORT = 5

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate_env(value: Any, path: str = "") -> Any:
    if isinstance(value, str):

        def _sub(match: re.Match) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"{path}: environment variable {name} is not set")
            return os.environ[name]

        return _ENV_RE.sub(_sub, value)
    if isinstance(value, dict):
        return {k: _interpolate_env(v, f"{path}.{k}" if path else k) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate_env(v, f"{path}[{i}]") for i, v in enumerate(value)]
    return value


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse the operator config file into an ExperimentConfig.

    Dataset entries are flat (descriptor fields plus path/train_path).
    ConfigError messages name the offending field path.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    raw = _interpolate_env(raw)
    datasets: list[DatasetEntry] = []
    for i, entry in enumerate(raw.get("datasets", [])):
        where = f"datasets[{i}]"
        if "path" not in entry:
            raise ConfigError(f"{where}.path: required")
        try:
            descriptor = DatasetDescriptor.from_dict(entry)
        except (KeyError, ValueError) as err:
            raise ConfigError(f"{where}: {err}") from None
        datasets.append(
            DatasetEntry(descriptor=descriptor, path=entry["path"], train_path=entry.get("train_path"))
        )
    strategies: list[StrategySpec] = []
    for i, entry in enumerate(raw.get("strategies", [])):
        where = f"strategies[{i}]"
        try:
            spec = StrategySpec.from_dict(entry)
        except (KeyError, ValueError) as err:
            raise ConfigError(f"{where}: {err}") from None
        for violation in validate_spec(spec):
            raise ConfigError(f"{where}: {violation}")
        strategies.append(spec)
    try:
        provider = ProviderConfig.from_dict(raw.get("provider", {}))
    except (KeyError, ValueError) as err:
        raise ConfigError(f"provider: {err}") from None
    return ExperimentConfig(
        datasets=tuple(datasets),
        strategies=tuple(strategies),
        provider=provider,
        concurrency=int(raw.get("concurrency", 1)),
        max_calls=raw.get("max_calls"),
        max_total_tokens=raw.get("max_total_tokens"),
        run_dir=raw.get("run_dir", "runs/exp"),
        sample_n=int(raw.get("sample_n", 100)),
        seed=int(raw.get("seed", 42)),
    )


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    datasets = config.datasets
    if getattr(args, "dataset", None):
        wanted = list(args.dataset)
        known = {d.descriptor.dataset_id for d in datasets}
        for name in wanted:
            if name not in known:
                raise ConfigError(f"--dataset {name}: not in config (known: {sorted(known)})")
        datasets = tuple(d for d in datasets if d.descriptor.dataset_id in wanted)
    strategies = config.strategies
    if getattr(args, "strategy", None):
        picked: list[StrategySpec] = []
        for name in args.strategy:
            try:
                sid = StrategyId(name)
            except ValueError:
                raise ConfigError(f"--strategy {name}: unknown strategy") from None
            matching = [s for s in strategies if s.strategy is sid]
            picked.extend(matching or [StrategySpec(strategy=sid)])
        strategies = tuple(picked)
    if getattr(args, "shots", None) is not None:
        if args.shots not in (0, 2):
            raise ConfigError(f"--shots {args.shots}: must be 0 or 2")
        strategies = tuple(replace(s, shots=args.shots) for s in strategies)
    if getattr(args, "effort", None):
        level = ReasoningEffort(args.effort)
        strategies = tuple(replace(s, reasoning_effort=level) for s in strategies)
    updates: dict[str, Any] = {"datasets": datasets, "strategies": strategies}
    if getattr(args, "concurrency", None) is not None:
        updates["concurrency"] = args.concurrency
    if getattr(args, "run_dir", None):
        updates["run_dir"] = args.run_dir
    return replace(config, **updates)


def _load_mock_script(path: str | None) -> dict[str, Any] | None:
    if not path:
        return None
    try:
        script = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"--mock {path}: {err}") from None
    if not isinstance(script, dict):
        raise ConfigError(f"--mock {path}: script must be a JSON object")
    return script


def _print_dry_run(config: ExperimentConfig) -> None:
    print(f"run_dir: {config.run_dir}")
    print(f"grid: {len(config.datasets)} dataset(s) x {len(config.strategies)} strategy "
          f"spec(s) x {config.sample_n} sample(s)")
    total_min = total_max = 0
    for entry in config.datasets:
        for spec in config.strategies:
            lo, hi = expected_call_bounds(spec)
            per = f"{lo}" if lo == hi else f"{lo}..{hi}"
            print(
                f"  {entry.descriptor.dataset_id} x {spec.method_label()}/{spec.shots}shot: "
                f"{per} calls per sample (plus bounded schema re-asks)"
            )
            total_min += lo * config.sample_n
            total_max += hi * config.sample_n
    calls = f"{total_min}" if total_min == total_max else f"{total_min}..{total_max}"
    print(f"estimated provider calls: {calls}")


def cmd_run(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    problems = config.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    if args.dry_run:
        _print_dry_run(config)
        return EXIT_OK
    script = _load_mock_script(args.mock)
    provider = build_provider(config, mock_script=script)
    run_dir = run_experiment(config, provider=provider)
    counts = run_status(run_dir)
    print(run_dir)
    print(f"cells: {counts['done']} done, {counts['failed']} failed, {counts['pending']} pending")
    if counts["done"] == 0 and counts["failed"] > 0:
        manifest = RunStore(run_dir).load_manifest()
        reasons = {c["reason"] for c in manifest["cells"].values() if c["status"] == "failed"}
        if reasons == {"budget_exceeded"}:
            print("budget exhausted before any cell completed", file=sys.stderr)
            return EXIT_BUDGET
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    geval_provider = None
    if args.geval:
        if not args.config:
            raise ConfigError("--geval requires --config for provider settings")
        config = load_config(args.config)
        geval_provider = build_provider(config, mock_script=_load_mock_script(args.mock))
    new_rows = score_run(args.run_dir, geval_provider=geval_provider)
    print(f"{new_rows} new metric rows")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    store = RunStore(args.run_dir)
    manifest = store.load_manifest()
    config = ExperimentConfig.from_dict(manifest["config"])
    rows = load_metric_rows(args.run_dir)
    if not rows:
        raise RunnerError("no metric rows; run `score` first")
    groups = group_mapping(config)
    written = render_main_tables(rows, groups, store.reports_dir)
    written.append(render_paradigm_abstractiveness(rows, store.reports_dir))
    try:
        fit, path = render_tradeoff(rows, args.tradeoff_x, args.tradeoff_y, store.reports_dir)
        written.append(path)
        print(f"tradeoff {args.tradeoff_x} vs {args.tradeoff_y}: "
              f"r={fit.r:.3f} p={fit.p_value:.3f} n={fit.n}")
    except (TooFewPointsError, MetricError) as err:
        print(f"tradeoff skipped: {err}")
    for path in written:
        print(path)
    return EXIT_OK


def cmd_import_scores(args: argparse.Namespace) -> int:
    attached = merge_external_scores(args.run_dir, args.csv)
    print(f"{attached} score attachments")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    entries = {e.descriptor.dataset_id: e for e in config.datasets}
    if args.dataset not in entries:
        raise ConfigError(f"dataset {args.dataset!r} not in config (known: {sorted(entries)})")
    entry = entries[args.dataset]
    records = load_jsonl(entry.path, entry.descriptor)
    stats = dataset_statistics(records)
    print("dataset,n,doc_tokens,sum_tokens,density,compression,coverage_pct")
    print(
        f"{args.dataset},{stats.n_records},{stats.doc_tokens:.1f},{stats.sum_tokens:.1f},"
        f"{stats.density:.4f},{stats.compression:.2f},{stats.coverage_pct:.2f}"
    )
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    problems = config.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    print("config ok")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    problems = config.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    levels = [lvl.strip() for lvl in args.levels.split(",") if lvl.strip()]
    if not levels:
        raise ConfigError("--levels: at least one level required")
    script = _load_mock_script(args.mock)

    def factory(level: ReasoningEffort):
        return build_provider(config, mock_script=script)

    run_dirs = sweep_reasoning_effort(config, levels, provider_factory=factory)
    rows_by_level = {}
    for level, run_dir in zip(levels, run_dirs):
        score_run(run_dir)
        rows_by_level[level] = load_metric_rows(run_dir)
        print(run_dir)
    sweep_csv = render_effort_sweep(rows_by_level, Path(config.run_dir) / "effort_sweep.csv")
    print(sweep_csv)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reason-sum",
        description="Reasoning-strategy summarization harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the experiment grid")
    run.add_argument("--config", required=True)
    run.add_argument("--strategy", action="append",
                     help="restrict to a strategy (repeatable)")
    run.add_argument("--dataset", action="append",
                     help="restrict to a dataset id (repeatable)")
    run.add_argument("--shots", type=int, choices=(0, 2))
    run.add_argument("--effort", choices=[e.value for e in ReasoningEffort])
    run.add_argument("--concurrency", type=int)
    run.add_argument("--run-dir", dest="run_dir")
    run.add_argument("--dry-run", action="store_true",
                     help="print the grid and estimated call counts, no provider calls")
    run.add_argument("--mock", help="path to a JSON mock script; forces the mock provider")
    run.set_defaults(func=cmd_run)

    score = sub.add_parser("score", help="compute metrics for completed cells")
    score.add_argument("run_dir")
    score.add_argument("--geval", action="store_true", help="also run judge scoring")
    score.add_argument("--config", help="provider settings for --geval")
    score.add_argument("--mock", help="mock script for --geval")
    score.set_defaults(func=cmd_score)

    report = sub.add_parser("report", help="render tables and the trade-off fit")
    report.add_argument("run_dir")
    report.add_argument("--tradeoff-x", default="bertscore")
    report.add_argument("--tradeoff-y", default="alignscore")
    report.set_defaults(func=cmd_report)

    imp = sub.add_parser("import-scores", help="merge an external metric CSV")
    imp.add_argument("run_dir")
    imp.add_argument("csv")
    imp.set_defaults(func=cmd_import_scores)

    stats = sub.add_parser("stats", help="dataset token/fragment statistics")
    stats.add_argument("--config", required=True)
    stats.add_argument("--dataset", required=True)
    stats.set_defaults(func=cmd_stats)

    validate = sub.add_parser("validate", help="validate a config file")
    validate.add_argument("--config", required=True)
    validate.set_defaults(func=cmd_validate)

    sweep = sub.add_parser("sweep", help="run the grid once per reasoning-effort level")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--levels", required=True,
                       help="comma-separated effort levels, e.g. minimal,medium,high")
    sweep.add_argument("--strategy", action="append")
    sweep.add_argument("--dataset", action="append")
    sweep.add_argument("--shots", type=int, choices=(0, 2))
    sweep.add_argument("--mock")
    sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except AuthError as err:
        print(f"auth error: {err}", file=sys.stderr)
        return EXIT_AUTH
    except (ScoreImportError, UnknownSampleError) as err:
        print(f"import error: {err}", file=sys.stderr)
        return EXIT_IMPORT
    except (RunnerError, DatasetError, MetricError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
