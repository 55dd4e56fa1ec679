"""The nine summarization pipelines, each a deterministic stage graph.

Stage names double as mock-script keys: ``vanilla_summarize``,
``e2a_extract``/``e2a_abstract``, ``qag_questions``/``qag_answer``/
``qag_summarize``, ``cite_cite``, ``deco_chunk``/``deco_merge``,
``plan_plan``/``plan_write``, ``ir_draft``/``ir_evaluate``/``ir_revise``,
``sc_candidate``/``sc_judge``.

Call-count law (no schema re-asks): vanilla, cot, cite make 1 call; e2a,
deco, plan make 2; qag makes H+2; ir makes between 2 and 1+2T; sc makes N+1.
"""

from __future__ import annotations

import json
import math
from dataclasses import replace
from typing import Sequence

from . import judge as judge_mod
from ._calls import run_stage, run_structured_stage
from .core import (
    PipelineTrace,
    SampleRecord,
    ShotExemplar,
    StageRecord,
    StrategyId,
    StrategySpec,
    SummaryResult,
)
from .payloads import (
    answers_violations,
    chunk_plan_from_payload,
    chunk_plan_violations,
    cited_summary_violations,
    extraction_violations,
    normalize_cite_summary_ids,
    questions_violations,
    write_plan_from_payload,
    write_plan_violations,
)
from .prompts import assemble_prompt, cot_block
from .provider import ChatProvider, canonical_json
from .textproc import split_sentences


class EmptySummaryError(Exception):
    pass


def _check_entry(spec: StrategySpec, expected: StrategyId, exemplars: Sequence[ShotExemplar]):
    if spec.strategy is not expected:
        raise ValueError(f"spec.strategy is {spec.strategy}, pipeline expects {expected}")
    if spec.shots == 2 and len(exemplars) != 2:
        raise ValueError("2-shot spec requires exactly 2 exemplars")
    if spec.shots == 0 and exemplars:
        raise ValueError("0-shot spec must not receive exemplars")


def _result(
    record: SampleRecord,
    spec: StrategySpec,
    stages: Sequence[StageRecord],
    summary: str,
    stage_name: str,
) -> SummaryResult:
    summary = summary.strip()
    if not summary:
        raise EmptySummaryError(f"{stage_name} returned a blank summary")
    return SummaryResult(
        sample_id=record.sample_id,
        strategy_spec=spec,
        summary=summary,
        trace=PipelineTrace.from_stages(stages),
    )


def run_vanilla(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
) -> SummaryResult:
    """Single-pass baseline: brief instruction plus the document, one call."""
    _check_entry(spec, StrategyId.vanilla, exemplars)
    messages = assemble_prompt(StrategyId.vanilla, "summarize", record.document, exemplars)
    rec, text = run_stage(
        provider, "vanilla_summarize", messages, effort=spec.reasoning_effort
    )
    return _result(record, spec, [rec], text, "vanilla_summarize")


def run_cot(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
    domain: str = "generic",
) -> SummaryResult:
    """Single pass with a domain-conditioned stepwise reasoning block inlined."""
    _check_entry(spec, StrategyId.cot, exemplars)
    messages = assemble_prompt(
        StrategyId.cot,
        "summarize",
        record.document,
        exemplars,
        slots={"reasoning_block": cot_block(domain)},
    )
    rec, text = run_stage(provider, "cot_summarize", messages, effort=spec.reasoning_effort)
    return _result(record, spec, [rec], text, "cot_summarize")


def e2a_expected_budget(n: int, max_k: int = 14) -> int:
    """Harness-side oracle for the extraction budget policy.

    min(n, 3) for short documents, capped at ``max_k`` past 60 sentences,
    and ceil(n/5) clamped into [3, max_k] in between. The extractor only has
    to be near this (the policy is advisory in the prompt), so the pipeline
    flags but does not fail on disagreement.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n <= 6:
        return min(n, 3)
    if n > 60:
        return max_k
    return max(3, min(max_k, math.ceil(n / 5)))


def run_e2a(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
) -> SummaryResult:
    """Extract salient sentences, then abstract over evidence plus document."""
    _check_entry(spec, StrategyId.e2a, exemplars)
    sentences = split_sentences(record.document)
    if not sentences:
        raise ValueError("document yields no sentences")
    extract_messages = assemble_prompt(
        StrategyId.e2a, "extract", record.document, slots={"max_k": str(spec.e2a_max_k)}
    )
    obj, stages = run_structured_stage(
        provider,
        "e2a_extract",
        extract_messages,
        lambda o: extraction_violations(o, len(sentences)),
        effort=spec.reasoning_effort,
    )
    # Evidence must be verbatim: substitute the true sentence at each index.
    flags: list[str] = []
    selected = []
    for item in obj["selected"]:
        idx = item["index"]
        if item["text"] != sentences[idx]:
            flags.append(f"e2a_text_repaired:{idx}")
            item = {"index": idx, "text": sentences[idx]}
        else:
            item = {"index": idx, "text": item["text"]}
        selected.append(item)
    payload = {"stats": dict(obj["stats"]), "selected": selected}
    policy_k = e2a_expected_budget(len(sentences), spec.e2a_max_k)
    model_k = payload["stats"]["selected_budget"]
    if model_k != policy_k:
        flags.append(f"e2a_budget_differs:model={model_k},policy={policy_k}")
    stages[-1] = replace(stages[-1], parsed_payload=payload).with_flags(*flags)
    abstract_messages = assemble_prompt(
        StrategyId.e2a,
        "abstract",
        record.document,
        exemplars,
        slots={"evidence_json": canonical_json(payload)},
    )
    rec2, text = run_stage(
        provider, "e2a_abstract", abstract_messages, effort=spec.reasoning_effort
    )
    return _result(record, spec, list(stages) + [rec2], text, "e2a_abstract")


def run_qag(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
) -> SummaryResult:
    """Generate H questions, answer each, then summarize over the Q&A table."""
    _check_entry(spec, StrategyId.qag, exemplars)
    lo, hi = spec.qag_question_range
    q_messages = assemble_prompt(
        StrategyId.qag, "questions", record.document, slots={"q_min": str(lo), "q_max": str(hi)}
    )
    q_obj, stages = run_structured_stage(
        provider,
        "qag_questions",
        q_messages,
        lambda o: questions_violations(o, spec.qag_question_range),
        effort=spec.reasoning_effort,
    )
    questions = q_obj["questions"]
    answers: list[dict] = []
    for question in questions:
        a_messages = assemble_prompt(
            StrategyId.qag,
            "answer",
            record.document,
            slots={"questions_json": canonical_json({"questions": [question]})},
        )
        a_obj, a_stages = run_structured_stage(
            provider,
            "qag_answer",
            a_messages,
            lambda o, qid=question["id"]: answers_violations(o, {qid}),
            effort=spec.reasoning_effort,
        )
        stages.extend(a_stages)
        answers.extend(a_obj["answers"])
    kept = [a for a in answers if a["confidence"] >= spec.qag_confidence_threshold]
    qa_table = {"questions": questions, "answers": kept}
    s_messages = assemble_prompt(
        StrategyId.qag,
        "summarize",
        record.document,
        exemplars,
        slots={"qa_table_json": canonical_json(qa_table)},
    )
    rec, text = run_stage(provider, "qag_summarize", s_messages, effort=spec.reasoning_effort)
    if len(kept) < len(answers):
        rec = rec.with_flags(f"qag_low_confidence_dropped:{len(answers) - len(kept)}")
    return _result(record, spec, list(stages) + [rec], text, "qag_summarize")


def run_cite(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
) -> SummaryResult:
    """Summary plus evidence alignments over a 0-based sentence array; one call."""
    _check_entry(spec, StrategyId.cite, exemplars)
    sentences = split_sentences(record.document)
    if not sentences:
        raise ValueError("document yields no sentences")
    messages = assemble_prompt(
        StrategyId.cite,
        "cite",
        record.document,
        exemplars,
        slots={"sentences_json": json.dumps(sentences, ensure_ascii=False)},
    )
    obj, stages = run_structured_stage(
        provider,
        "cite_cite",
        messages,
        lambda o: cited_summary_violations(o, len(sentences)),
        effort=spec.reasoning_effort,
        normalizer=normalize_cite_summary_ids,
    )
    return _result(record, spec, stages, obj["summary_text"], "cite_cite")


def run_deco(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
) -> SummaryResult:
    """Chunk and locally summarize in one call, then merge the local summaries.

    The merge prompt sees chunk summaries and contexts only, never the raw
    document.
    """
    _check_entry(spec, StrategyId.deco, exemplars)
    chunk_messages = assemble_prompt(StrategyId.deco, "chunk", record.document)
    obj, stages = run_structured_stage(
        provider, "deco_chunk", chunk_messages, chunk_plan_violations,
        effort=spec.reasoning_effort,
    )
    plan = chunk_plan_from_payload(obj)
    merge_messages = assemble_prompt(
        StrategyId.deco,
        "merge",
        record.document,
        exemplars,
        slots={
            "chunk_summaries_json": canonical_json(plan.summaries()),
            "chunk_contexts_json": canonical_json(plan.contexts()),
        },
    )
    rec, text = run_stage(provider, "deco_merge", merge_messages, effort=spec.reasoning_effort)
    lowered = text.lower()
    for word in ("chunk", "document"):
        if word in lowered:
            rec = rec.with_flags(f"merge_mentions_{word}")
    return _result(record, spec, list(stages) + [rec], text, "deco_merge")


def run_plan(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
) -> SummaryResult:
    """Plan (domain, goal, audience, style, salient info), then write to it."""
    _check_entry(spec, StrategyId.plan, exemplars)
    plan_messages = assemble_prompt(StrategyId.plan, "plan", record.document)
    obj, stages = run_structured_stage(
        provider, "plan_plan", plan_messages, write_plan_violations,
        effort=spec.reasoning_effort,
    )
    plan = write_plan_from_payload(obj)
    write_messages = assemble_prompt(
        StrategyId.plan,
        "write",
        record.document,
        exemplars,
        slots={
            "domain": plan.domain,
            "style": plan.style,
            "salient_info": "; ".join(plan.salient_info),
            "length_guidance": plan.length_guidance,
            "plan_json": canonical_json(obj),
        },
    )
    rec, text = run_stage(provider, "plan_write", write_messages, effort=spec.reasoning_effort)
    return _result(record, spec, list(stages) + [rec], text, "plan_write")


def _ir_should_stop(evaluation) -> bool:
    # stop=true, score 5 with nothing actionable, or all suggestions "none"
    if evaluation.stop:
        return True
    actionable = evaluation.actionable()
    if evaluation.score == 5 and not actionable:
        return True
    return bool(evaluation.suggestions) and not actionable


def run_ir(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
) -> SummaryResult:
    """Draft, then evaluate/revise up to T times with early stopping."""
    _check_entry(spec, StrategyId.ir, exemplars)
    draft_messages = assemble_prompt(StrategyId.ir, "draft", record.document, exemplars)
    rec, text = run_stage(provider, "ir_draft", draft_messages, effort=spec.reasoning_effort)
    stages: list[StageRecord] = [rec]
    summary = text.strip()
    if not summary:
        raise EmptySummaryError("ir_draft returned a blank summary")
    for _ in range(spec.ir_max_iters):
        evaluation = judge_mod.ir_evaluate(
            record.document, summary, provider, effort=spec.reasoning_effort, stages=stages
        )
        if _ir_should_stop(evaluation):
            break
        revise_messages = assemble_prompt(
            StrategyId.ir,
            "revise",
            record.document,
            slots={
                "current_summary": summary,
                "evaluation_json": canonical_json(evaluation.to_payload()),
            },
        )
        rec, text = run_stage(
            provider, "ir_revise", revise_messages, effort=spec.reasoning_effort
        )
        stages.append(rec)
        revised = text.strip()
        if not revised:
            raise EmptySummaryError("ir_revise returned a blank summary")
        summary = revised
    return _result(record, spec, stages, summary, "ir_revise")


def run_sc(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
    judge_provider: ChatProvider | None = None,
    weights: judge_mod.RubricWeights | None = None,
) -> SummaryResult:
    """Sample N candidates at a diversity temperature, judge, keep the winner.

    The returned summary is always one of the candidates, byte for byte.
    """
    _check_entry(spec, StrategyId.sc, exemplars)
    messages = assemble_prompt(StrategyId.sc, "candidate", record.document, exemplars)
    stages: list[StageRecord] = []
    candidates: list[str] = []
    for _ in range(spec.sc_n):
        rec, text = run_stage(
            provider,
            "sc_candidate",
            messages,
            effort=spec.reasoning_effort,
            temperature=provider.defaults.sc_sampling_temperature,
        )
        stages.append(rec)
        candidate = text.strip()
        if not candidate:
            raise EmptySummaryError("sc_candidate returned a blank summary")
        candidates.append(candidate)
    verdict = judge_mod.judge_select(
        record.document,
        candidates,
        judge_provider or provider,
        weights,
        effort=spec.reasoning_effort,
        stages=stages,
    )
    return _result(record, spec, stages, verdict.final_summary, "sc_judge")


_RUNNERS = {
    StrategyId.vanilla: run_vanilla,
    StrategyId.cot: run_cot,
    StrategyId.e2a: run_e2a,
    StrategyId.qag: run_qag,
    StrategyId.cite: run_cite,
    StrategyId.deco: run_deco,
    StrategyId.plan: run_plan,
    StrategyId.ir: run_ir,
    StrategyId.sc: run_sc,
}


def run_strategy(
    record: SampleRecord,
    spec: StrategySpec,
    provider: ChatProvider,
    exemplars: Sequence[ShotExemplar] = (),
    domain: str = "generic",
    judge_provider: ChatProvider | None = None,
) -> SummaryResult:
    """Dispatch to the pipeline selected by ``spec.strategy``."""
    if spec.strategy is StrategyId.cot:
        return run_cot(record, spec, provider, exemplars, domain=domain)
    if spec.strategy is StrategyId.sc:
        return run_sc(record, spec, provider, exemplars, judge_provider=judge_provider)
    return _RUNNERS[spec.strategy](record, spec, provider, exemplars)


def expected_call_bounds(spec: StrategySpec) -> tuple[int, int]:
    """(min, max) provider calls for one run, excluding schema re-asks."""
    s = spec.strategy
    if s in (StrategyId.vanilla, StrategyId.cot, StrategyId.cite):
        return (1, 1)
    if s in (StrategyId.e2a, StrategyId.deco, StrategyId.plan):
        return (2, 2)
    if s is StrategyId.qag:
        lo, hi = spec.qag_question_range
        return (lo + 2, hi + 2)
    if s is StrategyId.ir:
        return (2, 1 + 2 * spec.ir_max_iters)
    if s is StrategyId.sc:
        return (spec.sc_n + 1, spec.sc_n + 1)
    raise ValueError(f"unknown strategy {s}")
