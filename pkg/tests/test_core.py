from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from reason_sum.core import (
    PipelineTrace,
    ReasoningEffort,
    SampleRecord,
    StageRecord,
    StrategyId,
    StrategySpec,
    SummaryResult,
    validate_spec,
)


def test_validate_spec_defaults_pass():
    spec = StrategySpec(strategy=StrategyId.vanilla)
    assert spec.shots == 0 and spec.sc_n == 3 and spec.ir_max_iters == 3
    assert validate_spec(spec) == []


def test_validate_spec_rejects_bad_shots():
    spec = StrategySpec(strategy=StrategyId.vanilla, shots=1)
    assert validate_spec(spec) == ["shots must be 0 or 2"]


def test_validate_spec_rejects_small_sc_n():
    spec = StrategySpec(strategy=StrategyId.sc, sc_n=1)
    assert validate_spec(spec) == ["sc_n must be >= 2"]


def test_validate_spec_collects_multiple_violations():
    spec = StrategySpec(strategy=StrategyId.ir, shots=3, ir_max_iters=0, e2a_max_k=0)
    violations = validate_spec(spec)
    assert len(violations) == 3
    assert any("shots" in v for v in violations)
    assert any("ir_max_iters" in v for v in violations)
    assert any("e2a_max_k" in v for v in violations)


def test_strategy_id_round_trips_for_all_nine():
    names = ["vanilla", "cot", "e2a", "qag", "cite", "deco", "plan", "ir", "sc"]
    assert len(StrategyId) == 9
    for name in names:
        assert str(StrategyId(name)) == name


def test_sample_record_rejects_empty_document():
    with pytest.raises(ValueError):
        SampleRecord(sample_id="x", dataset_id="d", document="")


def test_trace_total_calls_must_match():
    stage = StageRecord(stage_name="s", prompt_messages=(("user", "hi"),), raw_response="r")
    with pytest.raises(ValueError):
        PipelineTrace(stages=(stage,), total_calls=2)


def test_summary_result_requires_nonempty_summary():
    stage = StageRecord(stage_name="s", prompt_messages=(("user", "hi"),), raw_response="r")
    trace = PipelineTrace.from_stages([stage])
    spec = StrategySpec(strategy=StrategyId.vanilla)
    with pytest.raises(ValueError):
        SummaryResult(sample_id="a", strategy_spec=spec, summary="", trace=trace)


text = st.text(min_size=1, max_size=50)
ids = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Nd")), min_size=1, max_size=12
)


@st.composite
def specs(draw):
    return StrategySpec(
        strategy=draw(st.sampled_from(list(StrategyId))),
        shots=draw(st.sampled_from([0, 2])),
        e2a_max_k=draw(st.integers(1, 30)),
        qag_question_range=(draw(st.integers(1, 4)), draw(st.integers(4, 10))),
        qag_confidence_threshold=draw(st.integers(1, 5)),
        sc_n=draw(st.integers(2, 6)),
        ir_max_iters=draw(st.integers(1, 5)),
        reasoning_effort=draw(st.sampled_from(list(ReasoningEffort))),
    )


@st.composite
def stage_records(draw):
    n_msgs = draw(st.integers(1, 3))
    return StageRecord(
        stage_name=draw(ids),
        prompt_messages=tuple(
            (draw(st.sampled_from(["system", "user", "assistant"])), draw(text))
            for _ in range(n_msgs)
        ),
        raw_response=draw(st.text(max_size=50)),
        parsed_payload=draw(
            st.none() | st.dictionaries(ids, st.integers() | text, max_size=3)
        ),
        prompt_tokens=draw(st.integers(0, 10_000)),
        completion_tokens=draw(st.integers(0, 10_000)),
        reasoning_tokens=draw(st.integers(0, 10_000)),
        latency_ms=draw(st.integers(0, 10_000)),
        flags=tuple(draw(st.lists(ids, max_size=3))),
    )


@given(
    sample_id=ids,
    dataset_id=ids,
    document=text,
    reference=st.text(max_size=50),
)
def test_sample_record_round_trip(sample_id, dataset_id, document, reference):
    rec = SampleRecord(
        sample_id=sample_id, dataset_id=dataset_id, document=document, reference=reference
    )
    assert SampleRecord.from_dict(rec.to_dict()) == rec


@given(spec=specs())
def test_strategy_spec_round_trip(spec):
    assert StrategySpec.from_dict(spec.to_dict()) == spec


@given(stage=stage_records())
def test_stage_record_round_trip(stage):
    assert StageRecord.from_dict(stage.to_dict()) == stage


@given(stages=st.lists(stage_records(), min_size=1, max_size=4), spec=specs(), summary=text)
def test_summary_result_round_trip(stages, spec, summary):
    result = SummaryResult(
        sample_id="s",
        strategy_spec=spec,
        summary=summary,
        trace=PipelineTrace.from_stages(stages),
    )
    assert SummaryResult.from_dict(result.to_dict()) == result
