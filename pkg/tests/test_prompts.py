from __future__ import annotations

import pytest

from reason_sum.core import ShotExemplar, StrategyId
from reason_sum.prompts import (
    COT_DOMAINS,
    STAGE_TEMPLATES,
    MissingSlotError,
    MissingTemplateError,
    assemble_prompt,
    candidate_labels,
    cot_block,
    load_template,
    pinned_checksums,
    render,
    sc_judge_slots,
    template_checksums,
)

EXEMPLARS = (
    ShotExemplar(document="Example doc one.", summary="Example summary one."),
    ShotExemplar(document="Example doc two.", summary="Example summary two."),
)


def test_templates_match_pinned_checksums():
    # drift detector: any edit to a shipped prompt must be deliberate
    assert template_checksums() == pinned_checksums()


def test_all_stage_templates_load():
    for name in STAGE_TEMPLATES:
        assert load_template(name).strip()


def test_vanilla_prompt_starts_with_instruction():
    messages = assemble_prompt(StrategyId.vanilla, "summarize", "Doc text.")
    assert len(messages) == 1
    role, text = messages[0]
    assert role == "user"
    assert "You are a skilled analyst" in text.splitlines()[1]
    assert "Doc text." in text


def test_unknown_stage_raises_missing_template():
    with pytest.raises(MissingTemplateError):
        assemble_prompt(StrategyId.vanilla, "nope", "Doc")


def test_missing_slot_raises():
    with pytest.raises(MissingSlotError):
        render("Needs {{thing}}", {})


def test_two_shot_exemplars_precede_target_document():
    [(_, text)] = assemble_prompt(StrategyId.vanilla, "summarize", "TARGET DOC", EXEMPLARS)
    first = text.index("Example doc one.")
    second = text.index("Example doc two.")
    target = text.index("TARGET DOC")
    assert first < second < target
    assert "Example summary two." in text


def test_zero_shot_has_no_exemplar_block():
    [(_, text)] = assemble_prompt(StrategyId.vanilla, "summarize", "TARGET DOC")
    assert "Worked examples" not in text


def test_exemplars_rejected_outside_final_stage():
    with pytest.raises(ValueError):
        assemble_prompt(StrategyId.e2a, "extract", "Doc", EXEMPLARS, slots={"max_k": "14"})


def test_cot_news_block_mentions_entities():
    [(_, text)] = assemble_prompt(
        StrategyId.cot, "summarize", "Doc", slots={"reasoning_block": cot_block("news")}
    )
    assert "important entities (people, organizations, places)" in text


def test_cot_unknown_domain_falls_back_to_generic():
    assert cot_block("meteorology") == cot_block("generic")


def test_cot_block_per_domain_distinct():
    blocks = {cot_block(d) for d in COT_DOMAINS}
    assert len(blocks) == len(COT_DOMAINS)


def test_sc_judge_rubric_uses_default_weights():
    slots = sc_judge_slots("Doc", ["a", "b", "c"], {
        "faithfulness": 0.35, "coverage": 0.35, "coherence": 0.15, "concision": 0.15,
    })
    [(_, text)] = assemble_prompt(StrategyId.sc, "judge", "Doc", slots=slots)
    assert "Faithfulness (0.35)" in text
    assert "Coverage (0.35)" in text
    assert "Coherence (0.15) / Concision (0.15)" in text
    assert "three candidate abstractive summaries (A/B/C)" in text
    assert "CANDIDATE_A: a" in text and "CANDIDATE_C: c" in text


def test_sc_judge_relabels_for_other_candidate_counts():
    slots = sc_judge_slots("Doc", ["a", "b", "c", "d"], {
        "faithfulness": 0.35, "coverage": 0.35, "coherence": 0.15, "concision": 0.15,
    })
    [(_, text)] = assemble_prompt(StrategyId.sc, "judge", "Doc", slots=slots)
    assert "four candidate abstractive summaries (A/B/C/D)" in text
    assert "CANDIDATE_D: d" in text


def test_candidate_labels():
    assert candidate_labels(3) == ["A", "B", "C"]
    with pytest.raises(ValueError):
        candidate_labels(1)


def test_deco_merge_never_sees_document():
    [(_, text)] = assemble_prompt(
        StrategyId.deco,
        "merge",
        "RAW DOCUMENT MUST NOT APPEAR",
        slots={"chunk_summaries_json": "[]", "chunk_contexts_json": "[]"},
    )
    assert "RAW DOCUMENT MUST NOT APPEAR" not in text
