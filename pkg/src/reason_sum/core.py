"""Shared domain types: samples, strategy specs, pipeline traces, results.

All types are immutable values with a canonical JSON form (snake_case keys);
the JSON form is also the run-store record format.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Mapping, Sequence


class Split(str, enum.Enum):
    train = "train"
    test = "test"


class StrategyId(str, enum.Enum):
    """The nine pipelines: a plain baseline plus eight reasoning strategies."""

    vanilla = "vanilla"
    cot = "cot"
    e2a = "e2a"
    qag = "qag"
    cite = "cite"
    deco = "deco"
    plan = "plan"
    ir = "ir"
    sc = "sc"

    def __str__(self) -> str:  # str(StrategyId.cot) == "cot"
        return self.value


class ReasoningEffort(str, enum.Enum):
    none = "none"
    minimal = "minimal"
    low = "low"
    medium = "medium"
    high = "high"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SampleRecord:
    """One document/reference pair with dataset identity and split.

    ``reference`` may be empty only for unlabeled inference runs.
    """

    sample_id: str
    dataset_id: str
    document: str
    reference: str = ""
    split: Split = Split.test

    def __post_init__(self) -> None:
        if not self.document:
            raise ValueError("document must be non-empty")
        if not self.sample_id:
            raise ValueError("sample_id must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "dataset_id": self.dataset_id,
            "document": self.document,
            "reference": self.reference,
            "split": self.split.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SampleRecord":
        return cls(
            sample_id=d["sample_id"],
            dataset_id=d["dataset_id"],
            document=d["document"],
            reference=d.get("reference", ""),
            split=Split(d.get("split", "test")),
        )


@dataclass(frozen=True)
class ShotExemplar:
    """A worked (document, summary) pair inlined into 2-shot prompts."""

    document: str
    summary: str

    def to_dict(self) -> dict[str, Any]:
        return {"document": self.document, "summary": self.summary}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ShotExemplar":
        return cls(document=d["document"], summary=d["summary"])


@dataclass(frozen=True)
class StrategySpec:
    """Which pipeline to run and its per-strategy knobs.

    ``shots`` is restricted to 0 or 2 so result tables stay comparable.
    ``sc_n`` is the candidate count for self-consistency selection,
    ``ir_max_iters`` bounds the evaluate/revise loop, ``e2a_max_k`` caps the
    extraction budget, and ``qag_question_range`` bounds the generated
    question count. ``reasoning_effort`` drives endpoints that expose an
    internal-reasoning depth knob.
    """

    strategy: StrategyId
    shots: int = 0
    e2a_max_k: int = 14
    qag_question_range: tuple[int, int] = (4, 8)
    qag_confidence_threshold: int = 1
    sc_n: int = 3
    ir_max_iters: int = 3
    reasoning_effort: ReasoningEffort = ReasoningEffort.none

    def method_label(self) -> str:
        """Row label used in manifests and report tables."""
        name = self.strategy.value
        if self.reasoning_effort is not ReasoningEffort.none:
            name += f"+{self.reasoning_effort.value}"
        return name

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy.value,
            "shots": self.shots,
            "e2a_max_k": self.e2a_max_k,
            "qag_question_range": list(self.qag_question_range),
            "qag_confidence_threshold": self.qag_confidence_threshold,
            "sc_n": self.sc_n,
            "ir_max_iters": self.ir_max_iters,
            "reasoning_effort": self.reasoning_effort.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StrategySpec":
        rng = d.get("qag_question_range", (4, 8))
        return cls(
            strategy=StrategyId(d["strategy"]),
            shots=int(d.get("shots", 0)),
            e2a_max_k=int(d.get("e2a_max_k", 14)),
            qag_question_range=(int(rng[0]), int(rng[1])),
            qag_confidence_threshold=int(d.get("qag_confidence_threshold", 1)),
            sc_n=int(d.get("sc_n", 3)),
            ir_max_iters=int(d.get("ir_max_iters", 3)),
            reasoning_effort=ReasoningEffort(d.get("reasoning_effort", "none")),
        )


def validate_spec(spec: StrategySpec) -> list[str]:
    """Return invariant violations for ``spec``; empty list means valid.

    Total function: never raises, each violation names the offending field.
    """
    violations: list[str] = []
    if spec.shots not in (0, 2):
        violations.append("shots must be 0 or 2")
    if spec.sc_n < 2:
        violations.append("sc_n must be >= 2")
    if spec.ir_max_iters < 1:
        violations.append("ir_max_iters must be >= 1")
    if spec.e2a_max_k < 1:
        violations.append("e2a_max_k must be >= 1")
    lo, hi = spec.qag_question_range
    if not (1 <= lo <= hi):
        violations.append("qag_question_range must satisfy 1 <= lo <= hi")
    if not (1 <= spec.qag_confidence_threshold <= 5):
        violations.append("qag_confidence_threshold must be in [1, 5]")
    return violations


@dataclass(frozen=True)
class StageRecord:
    """One model call: prompt, raw response, parsed payload, usage, latency.

    Token counts are whatever the provider reported (0 for the mock).
    ``flags`` carries non-fatal repair/quality markers attached during the run.
    """

    stage_name: str
    prompt_messages: tuple[tuple[str, str], ...]
    raw_response: str
    parsed_payload: Any = None
    prompt_tokens: int = 0
    completion_tokens: int = 0
    reasoning_tokens: int = 0
    latency_ms: int = 0
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.stage_name:
            raise ValueError("stage_name must be non-empty")
        for name in ("prompt_tokens", "completion_tokens", "reasoning_tokens", "latency_ms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def with_flags(self, *new_flags: str) -> "StageRecord":
        return replace(self, flags=self.flags + tuple(new_flags))

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage_name": self.stage_name,
            "prompt_messages": [[r, t] for r, t in self.prompt_messages],
            "raw_response": self.raw_response,
            "parsed_payload": self.parsed_payload,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "reasoning_tokens": self.reasoning_tokens,
            "latency_ms": self.latency_ms,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StageRecord":
        return cls(
            stage_name=d["stage_name"],
            prompt_messages=tuple((r, t) for r, t in d["prompt_messages"]),
            raw_response=d["raw_response"],
            parsed_payload=d.get("parsed_payload"),
            prompt_tokens=int(d.get("prompt_tokens", 0)),
            completion_tokens=int(d.get("completion_tokens", 0)),
            reasoning_tokens=int(d.get("reasoning_tokens", 0)),
            latency_ms=int(d.get("latency_ms", 0)),
            flags=tuple(d.get("flags", ())),
        )


@dataclass(frozen=True)
class PipelineTrace:
    """Ordered record of every model call in one pipeline run."""

    stages: tuple[StageRecord, ...]
    total_calls: int

    def __post_init__(self) -> None:
        if self.total_calls != len(self.stages):
            raise ValueError("total_calls must equal the number of stages")

    @classmethod
    def from_stages(cls, stages: Sequence[StageRecord]) -> "PipelineTrace":
        return cls(stages=tuple(stages), total_calls=len(stages))

    def all_flags(self) -> list[str]:
        return [f for s in self.stages for f in s.flags]

    def to_dict(self) -> dict[str, Any]:
        return {
            "stages": [s.to_dict() for s in self.stages],
            "total_calls": self.total_calls,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PipelineTrace":
        return cls(
            stages=tuple(StageRecord.from_dict(s) for s in d["stages"]),
            total_calls=int(d["total_calls"]),
        )


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class SummaryResult:
    """Final summary text plus the trace that produced it."""

    sample_id: str
    strategy_spec: StrategySpec
    summary: str
    trace: PipelineTrace
    created_at: str = field(default_factory=utc_now_iso)

    def __post_init__(self) -> None:
        if not self.summary:
            raise ValueError("summary must be non-empty")
        if self.trace.total_calls < 1:
            raise ValueError("trace must contain at least one stage")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "strategy_spec": self.strategy_spec.to_dict(),
            "summary": self.summary,
            "trace": self.trace.to_dict(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SummaryResult":
        return cls(
            sample_id=d["sample_id"],
            strategy_spec=StrategySpec.from_dict(d["strategy_spec"]),
            summary=d["summary"],
            trace=PipelineTrace.from_dict(d["trace"]),
            created_at=d["created_at"],
        )
