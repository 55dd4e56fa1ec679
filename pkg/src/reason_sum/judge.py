"""LLM-as-judge surfaces: candidate selection, revision feedback, rubric scores."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from ._calls import run_structured_stage
from .core import ReasoningEffort, StageRecord, StrategyId
from .payloads import (
    IREvaluation,
    ir_evaluation_from_payload,
    ir_evaluation_violations,
)
from .prompts import assemble_prompt, candidate_labels, sc_judge_slots
from .provider import ChatProvider


@dataclass(frozen=True)
class RubricWeights:
    """Criterion weights for candidate selection; must sum to 1."""

    faithfulness: float = 0.35
    coverage: float = 0.35
    coherence: float = 0.15
    concision: float = 0.15

    def __post_init__(self) -> None:
        values = self.as_dict().values()
        if any(w < 0 for w in values):
            raise ValueError("weights must be non-negative")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    def as_dict(self) -> dict[str, float]:
        return {
            "faithfulness": self.faithfulness,
            "coverage": self.coverage,
            "coherence": self.coherence,
            "concision": self.concision,
        }


@dataclass(frozen=True)
class JudgeVerdict:
    """Validated selection verdict.

    ``computed_totals`` holds the harness's own weighted sums recomputed from
    the judge's sub-scores; the judge's winner stays authoritative even when
    its arithmetic disagrees (the discrepancy is flagged, not corrected).
    """

    scores: dict[str, Any]
    winner: str
    reason: str
    final_summary: str
    computed_totals: dict[str, float] = field(default_factory=dict)
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class GEvalScores:
    """Judge ratings for completeness, conciseness, faithfulness, each in [1, 5]."""

    completeness: float
    conciseness: float
    faithfulness: float

    def __post_init__(self) -> None:
        for name, value in self.to_dict().items():
            if not 1.0 <= value <= 5.0:
                raise ValueError(f"{name} must be in [1, 5]")

    def to_dict(self) -> dict[str, float]:
        return {
            "completeness": self.completeness,
            "conciseness": self.conciseness,
            "faithfulness": self.faithfulness,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GEvalScores":
        return cls(
            completeness=float(d["completeness"]),
            conciseness=float(d["conciseness"]),
            faithfulness=float(d["faithfulness"]),
        )


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def verdict_violations(obj: Any, labels: Sequence[str]) -> list[str]:
    v: list[str] = []
    if not isinstance(obj, Mapping):
        return ["payload must be a JSON object"]
    winner = obj.get("winner")
    if winner not in labels:
        v.append(f"winner {winner!r} not one of {list(labels)}")
    scores = obj.get("scores")
    if not isinstance(scores, Mapping):
        v.append("scores must be an object keyed by candidate label")
    elif winner in labels and winner not in scores:
        v.append(f"winner {winner!r} missing from scores")
    if not isinstance(obj.get("final_summary"), str) or not obj.get("final_summary").strip():
        v.append("final_summary must be a non-empty string")
    if not isinstance(obj.get("reason"), str):
        v.append("reason must be a string")
    return v


def weighted_totals(
    scores: Mapping[str, Any], weights: RubricWeights
) -> tuple[dict[str, float], list[str]]:
    """Recompute per-candidate weighted totals from sub-score maps.

    Candidates whose score entry is a bare number are taken as judge-computed
    totals and not recomputed. A sub-score map carrying its own total that
    disagrees with our arithmetic gets flagged.
    """
    totals: dict[str, float] = {}
    flags: list[str] = []
    wmap = weights.as_dict()
    for label, entry in scores.items():
        if _is_num(entry):
            totals[label] = float(entry)
            continue
        if not isinstance(entry, Mapping):
            continue
        acc = 0.0
        seen = False
        for criterion, weight in wmap.items():
            value = entry.get(criterion)
            if _is_num(value):
                acc += weight * float(value)
                seen = True
        if not seen:
            continue
        totals[label] = acc
        for key in ("total", "weighted_total"):
            claimed = entry.get(key)
            if _is_num(claimed) and abs(float(claimed) - acc) > 0.05:
                flags.append(f"judge_total_mismatch:{label}")
                break
    return totals, flags


def judge_select(
    document: str,
    candidates: Sequence[str],
    provider: ChatProvider,
    weights: RubricWeights | None = None,
    *,
    effort: ReasoningEffort = ReasoningEffort.none,
    stages: list[StageRecord] | None = None,
) -> JudgeVerdict:
    """Score labeled candidates and pick a winner; one call plus <=1 re-ask.

    The returned ``final_summary`` always equals the winning candidate's text
    byte for byte; a mismatching judge output is repaired and flagged.
    """
    weights = weights or RubricWeights()
    labels = candidate_labels(len(candidates))
    messages = assemble_prompt(
        StrategyId.sc,
        "judge",
        document,
        slots=sc_judge_slots(document, candidates, weights.as_dict()),
    )
    obj, records = run_structured_stage(
        provider,
        "sc_judge",
        messages,
        lambda o: verdict_violations(o, labels),
        effort=effort,
    )
    flags: list[str] = []
    winner = obj["winner"]
    winner_text = candidates[labels.index(winner)]
    final_summary = obj.get("final_summary", "")
    if final_summary != winner_text:
        final_summary = winner_text
        flags.append("final_summary_repaired")
    reason = obj.get("reason", "")
    if len(reason.split()) > 50:
        flags.append("reason_over_50_words")
    totals, total_flags = weighted_totals(obj["scores"], weights)
    flags.extend(total_flags)
    if flags:
        records[-1] = records[-1].with_flags(*flags)
    if stages is not None:
        stages.extend(records)
    return JudgeVerdict(
        scores=dict(obj["scores"]),
        winner=winner,
        reason=reason,
        final_summary=final_summary,
        computed_totals=totals,
        flags=tuple(flags),
    )


def ir_evaluate(
    document: str,
    summary: str,
    provider: ChatProvider,
    *,
    effort: ReasoningEffort = ReasoningEffort.none,
    stages: list[StageRecord] | None = None,
) -> IREvaluation:
    """Structured evaluate step of the refine loop; one call plus <=1 re-ask."""
    messages = assemble_prompt(
        StrategyId.ir, "evaluate", document, slots={"current_summary": summary}
    )
    obj, records = run_structured_stage(
        provider, "ir_evaluate", messages, ir_evaluation_violations, effort=effort
    )
    if stages is not None:
        stages.extend(records)
    return ir_evaluation_from_payload(obj)


def geval_violations(obj: Any) -> list[str]:
    v: list[str] = []
    if not isinstance(obj, Mapping):
        return ["payload must be a JSON object"]
    for key in ("completeness", "conciseness", "faithfulness"):
        value = obj.get(key)
        if not _is_num(value):
            v.append(f"{key} must be a number")
        elif not 1.0 <= float(value) <= 5.0:
            v.append(f"{key} {value} outside [1, 5]")
    return v


def geval_score(
    document: str,
    summary: str,
    provider: ChatProvider,
    *,
    effort: ReasoningEffort = ReasoningEffort.none,
    stages: list[StageRecord] | None = None,
) -> GEvalScores:
    """Three-dimension rubric score for one summary; out-of-range values are
    rejected (re-ask, then error), never clamped."""
    from .prompts import load_template, render

    text = render(load_template("geval_score"), {"document": document, "summary": summary})
    obj, records = run_structured_stage(
        provider, "geval_score", (("user", text),), geval_violations, effort=effort
    )
    if stages is not None:
        stages.extend(records)
    return GEvalScores.from_dict(obj)
