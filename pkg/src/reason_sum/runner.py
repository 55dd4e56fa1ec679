"""Experiment orchestration: grid execution, persistence, resume, scoring.

A run directory is self-contained: manifest.json (config snapshot, template
checksums, per-cell status), samples.jsonl (the sampled inputs), exemplars
.json (2-shot exemplars per dataset), results.jsonl (one generation record
per line, append-only), metrics.jsonl (one scored row per cell), reports/.

Cells execute at most once across crashes and resumes: a result line is
fsynced before its cell is marked done, and the manifest rewrite is atomic.
"""

from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .core import (
    ReasoningEffort,
    SampleRecord,
    ShotExemplar,
    Split,
    StrategySpec,
    SummaryResult,
    validate_spec,
)
from .datasets import DatasetDescriptor, load_jsonl, pick_exemplars, sample_test_set
from .judge import geval_score
from .metrics import MetricRow, compute_sample_metrics, import_external_scores
from .prompts import template_checksums
from .provider import (
    BudgetExceededError,
    BudgetLedger,
    ChatProvider,
    DecodingDefaults,
    HttpTransport,
    MockProvider,
)
from .strategies import run_strategy


class RunnerError(RuntimeError):
    pass


class ConfigError(RunnerError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    """Endpoint settings; ``kind`` selects the live transport or the mock."""

    kind: str = "mock"  # mock | http
    base_url: str = ""
    model: str = ""
    api_key_env: str = "REASON_SUM_API_KEY"
    per_stage_model: Mapping[str, str] = field(default_factory=dict)
    temperature: float = 0.0
    max_output_tokens: int = 1000
    reasoning_max_output_tokens: int = 10000
    sc_sampling_temperature: float = 0.7

    def decoding_defaults(self) -> DecodingDefaults:
        return DecodingDefaults(
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            reasoning_max_output_tokens=self.reasoning_max_output_tokens,
            sc_sampling_temperature=self.sc_sampling_temperature,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "base_url": self.base_url,
            "model": self.model,
            "api_key_env": self.api_key_env,
            "per_stage_model": dict(self.per_stage_model),
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "reasoning_max_output_tokens": self.reasoning_max_output_tokens,
            "sc_sampling_temperature": self.sc_sampling_temperature,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ProviderConfig":
        return cls(
            kind=d.get("kind", "mock"),
            base_url=d.get("base_url", ""),
            model=d.get("model", ""),
            api_key_env=d.get("api_key_env", "REASON_SUM_API_KEY"),
            per_stage_model=dict(d.get("per_stage_model", {})),
            temperature=float(d.get("temperature", 0.0)),
            max_output_tokens=int(d.get("max_output_tokens", 1000)),
            reasoning_max_output_tokens=int(d.get("reasoning_max_output_tokens", 10000)),
            sc_sampling_temperature=float(d.get("sc_sampling_temperature", 0.7)),
        )


@dataclass(frozen=True)
class DatasetEntry:
    descriptor: DatasetDescriptor
    path: str
    train_path: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "descriptor": self.descriptor.to_dict(),
            "path": self.path,
            "train_path": self.train_path,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DatasetEntry":
        return cls(
            descriptor=DatasetDescriptor.from_dict(d["descriptor"]),
            path=d["path"],
            train_path=d.get("train_path"),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[DatasetEntry, ...]
    strategies: tuple[StrategySpec, ...]
    provider: ProviderConfig = ProviderConfig()
    concurrency: int = 1
    max_calls: int | None = None
    max_total_tokens: int | None = None
    run_dir: str = "runs/exp"
    sample_n: int = 100
    seed: int = 42

    def validate(self) -> list[str]:
        problems: list[str] = []
        if not self.datasets:
            problems.append("datasets: at least one dataset required")
        if not self.strategies:
            problems.append("strategies: at least one strategy required")
        if self.concurrency < 1:
            problems.append("concurrency: must be >= 1")
        if self.sample_n < 0:
            problems.append("sample_n: must be >= 0")
        for i, spec in enumerate(self.strategies):
            for violation in validate_spec(spec):
                problems.append(f"strategies[{i}]: {violation}")
        needs_train = any(s.shots == 2 for s in self.strategies)
        if needs_train:
            for entry in self.datasets:
                if not entry.train_path:
                    problems.append(
                        f"datasets[{entry.descriptor.dataset_id}]: "
                        "train_path required for 2-shot strategies"
                    )
        if self.provider.kind not in ("mock", "http"):
            problems.append(f"provider.kind: unknown kind {self.provider.kind!r}")
        return problems

    def to_dict(self) -> dict[str, Any]:
        return {
            "datasets": [d.to_dict() for d in self.datasets],
            "strategies": [s.to_dict() for s in self.strategies],
            "provider": self.provider.to_dict(),
            "concurrency": self.concurrency,
            "max_calls": self.max_calls,
            "max_total_tokens": self.max_total_tokens,
            "run_dir": self.run_dir,
            "sample_n": self.sample_n,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        return cls(
            datasets=tuple(DatasetEntry.from_dict(x) for x in d["datasets"]),
            strategies=tuple(StrategySpec.from_dict(x) for x in d["strategies"]),
            provider=ProviderConfig.from_dict(d.get("provider", {})),
            concurrency=int(d.get("concurrency", 1)),
            max_calls=d.get("max_calls"),
            max_total_tokens=d.get("max_total_tokens"),
            run_dir=d.get("run_dir", "runs/exp"),
            sample_n=int(d.get("sample_n", 100)),
            seed=int(d.get("seed", 42)),
        )


def spec_cell_label(spec: StrategySpec) -> str:
    return f"{spec.method_label()}/{spec.shots}shot"


def cell_key(dataset_id: str, spec: StrategySpec, sample_id: str) -> str:
    return f"{dataset_id}|{spec_cell_label(spec)}|{sample_id}"


def build_provider(
    config: ExperimentConfig, mock_script: Mapping[str, Any] | None = None
) -> ChatProvider:
    """Provider from config: scripted/echo mock, or the live HTTP transport."""
    ledger = BudgetLedger(config.max_calls, config.max_total_tokens)
    pc = config.provider
    if pc.kind == "mock" or mock_script is not None:
        transport = MockProvider(script=mock_script, echo=mock_script is None)
        return ChatProvider(transport, ledger=ledger, defaults=pc.decoding_defaults())
    api_key = os.environ.get(pc.api_key_env, "")
    if not api_key:
        from .provider import AuthError

        raise AuthError(f"environment variable {pc.api_key_env} is not set")
    transport = HttpTransport(
        base_url=pc.base_url,
        model=pc.model,
        api_key=api_key,
        per_stage_model=dict(pc.per_stage_model),
    )
    return ChatProvider(transport, ledger=ledger, defaults=pc.decoding_defaults())


def _atomic_write_json(path: Path, payload: Any) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, sort_keys=True, indent=1)
        fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _append_jsonl(path: Path, obj: Any) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


class RunStore:
    """Filesystem layout of one run directory."""

    def __init__(self, run_dir: str | Path):
        self.root = Path(run_dir)
        self.manifest_path = self.root / "manifest.json"
        self.samples_path = self.root / "samples.jsonl"
        self.exemplars_path = self.root / "exemplars.json"
        self.results_path = self.root / "results.jsonl"
        self.metrics_path = self.root / "metrics.jsonl"
        self.reports_dir = self.root / "reports"

    def load_manifest(self) -> dict:
        with open(self.manifest_path, encoding="utf-8") as fh:
            return json.load(fh)

    def save_manifest(self, manifest: dict) -> None:
        _atomic_write_json(self.manifest_path, manifest)

    def load_samples(self) -> dict[str, list[SampleRecord]]:
        by_dataset: dict[str, list[SampleRecord]] = {}
        for obj in _read_jsonl(self.samples_path):
            rec = SampleRecord.from_dict(obj)
            by_dataset.setdefault(rec.dataset_id, []).append(rec)
        return by_dataset

    def load_exemplars(self) -> dict[str, list[ShotExemplar]]:
        if not self.exemplars_path.exists():
            return {}
        raw = json.loads(self.exemplars_path.read_text(encoding="utf-8"))
        return {
            ds: [ShotExemplar.from_dict(e) for e in items] for ds, items in raw.items()
        }

    def load_results(self) -> list[dict]:
        # A crash between the result fsync and the manifest ack can leave an
        # orphan line that re-execution supersedes: last write wins per cell,
        # original order kept.
        by_cell: dict[str, dict] = {}
        for line in _read_jsonl(self.results_path):
            by_cell[line["cell"]] = line
        return list(by_cell.values())

    def load_metric_rows(self) -> list[dict]:
        return _read_jsonl(self.metrics_path)


def _prepare_run(config: ExperimentConfig, store: RunStore) -> dict:
    """Create the run directory, sample inputs, and write a fresh manifest."""
    store.root.mkdir(parents=True, exist_ok=True)
    store.reports_dir.mkdir(exist_ok=True)
    samples: list[SampleRecord] = []
    exemplars: dict[str, list[ShotExemplar]] = {}
    needs_exemplars = any(s.shots == 2 for s in config.strategies)
    for entry in config.datasets:
        records = load_jsonl(entry.path, entry.descriptor, split=Split.test)
        chosen = sample_test_set(records, config.sample_n, config.seed)
        samples.extend(chosen)
        if needs_exemplars:
            train = load_jsonl(entry.train_path, entry.descriptor, split=Split.train)
            exemplars[entry.descriptor.dataset_id] = pick_exemplars(
                train, k=2, seed=config.seed
            )
    with open(store.samples_path, "w", encoding="utf-8") as fh:
        for rec in samples:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    if exemplars:
        _atomic_write_json(
            store.exemplars_path,
            {ds: [e.to_dict() for e in items] for ds, items in exemplars.items()},
        )
    by_dataset: dict[str, list[SampleRecord]] = {}
    for rec in samples:
        by_dataset.setdefault(rec.dataset_id, []).append(rec)
    cells = {}
    for entry in config.datasets:
        for spec in config.strategies:
            for rec in by_dataset.get(entry.descriptor.dataset_id, []):
                cells[cell_key(rec.dataset_id, spec, rec.sample_id)] = {
                    "status": "pending",
                    "reason": None,
                }
    manifest = {
        "config": config.to_dict(),
        "template_checksums": template_checksums(),
        "cells": cells,
    }
    store.save_manifest(manifest)
    return manifest


def run_experiment(
    config: ExperimentConfig,
    provider: ChatProvider | None = None,
    mock_script: Mapping[str, Any] | None = None,
) -> Path:
    """Execute every pending cell of the grid; safe to re-invoke.

    Grid order is datasets outer, strategies middle, samples inner; with
    concurrency 1 that order is also the provider call order. Cell failures
    are recorded and the run continues; a completed run re-invoked is a no-op.
    """
    problems = config.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    store = RunStore(config.run_dir)
    if store.manifest_path.exists():
        manifest = store.load_manifest()
        if manifest["config"] != config.to_dict():
            raise RunnerError(
                "run_dir already holds a different config; refusing to mix grids"
            )
    else:
        manifest = _prepare_run(config, store)
    if provider is None:
        provider = build_provider(config, mock_script)

    by_dataset = store.load_samples()
    exemplars = store.load_exemplars()
    domain_of = {e.descriptor.dataset_id: e.descriptor.domain.value for e in config.datasets}
    record_of = {
        (rec.dataset_id, rec.sample_id): rec
        for recs in by_dataset.values()
        for rec in recs
    }

    pending: list[tuple[str, str, StrategySpec, str]] = []
    for entry in config.datasets:
        ds = entry.descriptor.dataset_id
        for spec in config.strategies:
            for rec in by_dataset.get(ds, []):
                key = cell_key(ds, spec, rec.sample_id)
                if manifest["cells"][key]["status"] == "pending":
                    pending.append((key, ds, spec, rec.sample_id))

    lock = threading.Lock()

    def finish(key: str, status: str, reason: str | None) -> None:
        with lock:
            manifest["cells"][key] = {"status": status, "reason": reason}
            store.save_manifest(manifest)

    def execute(item: tuple[str, str, StrategySpec, str]) -> None:
        key, ds, spec, sample_id = item
        record = record_of[(ds, sample_id)]
        shots = exemplars.get(ds, []) if spec.shots == 2 else []
        try:
            result = run_strategy(
                record, spec, provider, shots, domain=domain_of.get(ds, "generic")
            )
        except BudgetExceededError:
            finish(key, "failed", "budget_exceeded")
            return
        except Exception as err:  # per-cell failure; the run continues
            finish(key, "failed", f"{type(err).__name__}: {err}")
            return
        with lock:
            _append_jsonl(
                store.results_path,
                {"cell": key, "dataset_id": ds, "result": result.to_dict()},
            )
            manifest["cells"][key] = {"status": "done", "reason": None}
            store.save_manifest(manifest)

    if config.concurrency <= 1:
        for item in pending:
            execute(item)
    else:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            list(pool.map(execute, pending))
    return store.root


def sweep_reasoning_effort(
    config: ExperimentConfig,
    levels: Sequence[ReasoningEffort | str],
    provider_factory: Callable[[ReasoningEffort], ChatProvider] | None = None,
) -> list[Path]:
    """Run the identical grid once per reasoning-effort level.

    Each level gets its own run directory (``effort_<level>`` under the
    configured run_dir) and its own budget ledger.
    """
    run_dirs: list[Path] = []
    for raw in levels:
        level = ReasoningEffort(raw) if isinstance(raw, str) else raw
        leveled = replace(
            config,
            strategies=tuple(
                replace(s, reasoning_effort=level) for s in config.strategies
            ),
            run_dir=str(Path(config.run_dir) / f"effort_{level.value}"),
        )
        provider = provider_factory(level) if provider_factory else None
        run_dirs.append(run_experiment(leveled, provider=provider))
    return run_dirs


def _manifest_counts(manifest: dict) -> dict[str, int]:
    counts = {"pending": 0, "done": 0, "failed": 0}
    for cell in manifest["cells"].values():
        counts[cell["status"]] += 1
    return counts


def run_status(run_dir: str | Path) -> dict[str, int]:
    return _manifest_counts(RunStore(run_dir).load_manifest())


def score_run(
    run_dir: str | Path,
    geval_provider: ChatProvider | None = None,
) -> int:
    """Compute SampleMetrics for every done cell lacking them; idempotent.

    Judge-based scores are attached only when a judge provider is passed.
    Cells without a gold reference keep their reference-based fields empty
    and are flagged. Returns the number of newly scored cells.
    """
    store = RunStore(run_dir)
    if not store.manifest_path.exists():
        raise RunnerError(f"{store.root} is not a run directory")
    results = store.load_results()
    if not results:
        raise RunnerError("run has no completed cells to score")
    existing = {row["cell"] for row in store.load_metric_rows()}
    record_of = {
        (rec.dataset_id, rec.sample_id): rec
        for recs in store.load_samples().values()
        for rec in recs
    }
    new_rows = 0
    for line in results:
        key = line["cell"]
        if key in existing:
            continue
        result = SummaryResult.from_dict(line["result"])
        record = record_of[(line["dataset_id"], result.sample_id)]
        metrics = compute_sample_metrics(record.document, record.reference, result.summary)
        flags: list[str] = []
        if not record.reference.strip():
            flags.append("missing_reference")
        if geval_provider is not None:
            metrics.geval = geval_score(record.document, result.summary, geval_provider)
        spec = result.strategy_spec
        row = MetricRow(
            sample_id=result.sample_id,
            dataset_id=line["dataset_id"],
            strategy=spec.strategy.value,
            shots=spec.shots,
            reasoning_effort=spec.reasoning_effort.value,
            metrics=metrics,
            flags=tuple(flags),
        )
        _append_jsonl(store.metrics_path, {"cell": key, **row.to_dict()})
        new_rows += 1
    return new_rows


def merge_external_scores(run_dir: str | Path, csv_path: str | Path) -> int:
    """Merge an external-score CSV into the metric store.

    CSV ids may name a cell (``dataset|method/0shot|sample``) for a single
    row, or a bare sample_id to hit every cell of that sample. Returns the
    number of (row, metric) attachments made. The metric file is rewritten
    atomically; generation records are never touched.
    """
    store = RunStore(run_dir)
    raw_rows = store.load_metric_rows()
    if not raw_rows:
        raise RunnerError("no metric rows; run `score` before importing external scores")
    cells = {row["cell"] for row in raw_rows}
    sample_ids = {row["sample_id"] for row in raw_rows}
    scores = import_external_scores(csv_path, known_sample_ids=cells | sample_ids)
    attached = 0
    for (target, metric), value in scores.items():
        for row in raw_rows:
            if row["cell"] == target or (target not in cells and row["sample_id"] == target):
                row["metrics"]["external"][metric] = value
                attached += 1
    tmp = store.metrics_path.with_suffix(".jsonl.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in raw_rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, store.metrics_path)
    return attached


def load_metric_rows(run_dir: str | Path) -> list[MetricRow]:
    return [MetricRow.from_dict(row) for row in RunStore(run_dir).load_metric_rows()]


def group_mapping(config: ExperimentConfig) -> dict[str, str]:
    return {e.descriptor.dataset_id: e.descriptor.group.value for e in config.datasets}
