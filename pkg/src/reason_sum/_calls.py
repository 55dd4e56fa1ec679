"""Internal helpers for issuing pipeline stage calls and tracing them."""

from __future__ import annotations

import time
from dataclasses import replace
from typing import Any, Callable, Sequence

from .core import ReasoningEffort, StageRecord
from .payloads import SchemaViolationError
from .provider import ChatProvider, ChatRequest, NoJsonFoundError, extract_json

Validator = Callable[[Any], list[str]]

REASK_FLAG = "schema_reask"


def run_stage(
    provider: ChatProvider,
    stage: str,
    messages: Sequence[tuple[str, str]],
    *,
    effort: ReasoningEffort = ReasoningEffort.none,
    temperature: float | None = None,
    max_output_tokens: int | None = None,
    response_kind: str = "free_text",
) -> tuple[StageRecord, str]:
    """One provider call; returns the trace record and the response text."""
    request = ChatRequest(
        messages=tuple(messages),
        temperature=provider.defaults.temperature if temperature is None else temperature,
        max_output_tokens=(
            provider.defaults.output_cap(effort) if max_output_tokens is None else max_output_tokens
        ),
        reasoning_effort=effort,
        response_kind=response_kind,
    )
    t0 = time.perf_counter()
    response = provider.complete(request, stage)
    latency_ms = int((time.perf_counter() - t0) * 1000)
    record = StageRecord(
        stage_name=stage,
        prompt_messages=tuple(messages),
        raw_response=response.text,
        prompt_tokens=response.prompt_tokens,
        completion_tokens=response.completion_tokens,
        reasoning_tokens=response.reasoning_tokens,
        latency_ms=latency_ms,
    )
    return record, response.text


def _parse_and_check(text: str, validator: Validator) -> tuple[Any, list[str]]:
    try:
        obj = extract_json(text)
    except NoJsonFoundError:
        return None, ["no JSON object found in response"]
    return obj, validator(obj)


def run_structured_stage(
    provider: ChatProvider,
    stage: str,
    messages: Sequence[tuple[str, str]],
    validator: Validator,
    *,
    effort: ReasoningEffort = ReasoningEffort.none,
    normalizer: Callable[[dict], bool] | None = None,
) -> tuple[dict, list[StageRecord]]:
    """Structured stage with one bounded re-ask on an invalid payload.

    The re-ask appends the offending output and a correction request to the
    original messages; a second invalid payload raises SchemaViolationError.
    ``normalizer`` may rewrite the parsed object in place before validation
    (e.g. index-base normalization) and reports whether it changed anything.
    """
    record, text = run_stage(
        provider, stage, messages, effort=effort, response_kind="json_object"
    )
    obj = None
    try:
        obj = extract_json(text)
        violations: list[str] = []
    except NoJsonFoundError:
        violations = ["no JSON object found in response"]
    normalized = False
    if not violations:
        if normalizer is not None:
            normalized = normalizer(obj)
        violations = validator(obj)
    if not violations:
        if normalized:
            record = record.with_flags("payload_normalized")
        return obj, [replace(record, parsed_payload=obj)]

    reask_messages = list(messages) + [
        ("assistant", text if text else "(empty response)"),
        (
            "user",
            "Your previous output was invalid because: "
            + "; ".join(violations)
            + ". Return ONLY a corrected JSON object that satisfies the required schema.",
        ),
    ]
    record = record.with_flags(REASK_FLAG)
    record2, text2 = run_stage(
        provider, stage, reask_messages, effort=effort, response_kind="json_object"
    )
    obj2, violations2 = _parse_and_check(text2, lambda o: [])
    normalized2 = False
    if not violations2:
        if normalizer is not None:
            normalized2 = normalizer(obj2)
        violations2 = validator(obj2)
    if violations2:
        raise SchemaViolationError(stage, violations2)
    if normalized2:
        record2 = record2.with_flags("payload_normalized")
    return obj2, [record, replace(record2, parsed_payload=obj2)]
