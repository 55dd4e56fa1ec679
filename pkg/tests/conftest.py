from __future__ import annotations

import json

import pytest

from reason_sum.core import SampleRecord
from reason_sum.provider import ChatProvider, MockProvider

# Six sentences so e2a's budget policy and deco's spans have room to work.
DOC = (
    "Alpha Corp announced a merger with Beta Group. The deal closed on Friday. "
    "Analysts were surprised by the speed. Markets rose after the news. "
    "Regulators approved the deal quickly. Shareholders cheered the outcome."
)
REF = "Alpha Corp merged with Beta Group and markets rose."


@pytest.fixture
def record() -> SampleRecord:
    return SampleRecord(sample_id="s1", dataset_id="toy", document=DOC, reference=REF)


def make_provider(script: dict, **kwargs) -> tuple[ChatProvider, MockProvider]:
    mock = MockProvider(script)
    return ChatProvider(mock, **kwargs), mock


def full_strategy_script(cells: int = 1) -> dict:
    """Scripted mock responses driving all nine pipelines on the toy document.

    Sequenced stages (qag answers, sc candidates) are scripted per call, so
    ``cells`` must cover how many times each pipeline will run.
    """
    extraction = {
        "stats": {"total_sentences": 6, "selected_budget": 3},
        "selected": [
            {"index": 0, "text": "Alpha Corp announced a merger with Beta Group."},
            {"index": 1, "text": "The deal closed on Friday."},
            {"index": 3, "text": "Markets rose after the news."},
        ],
    }
    questions = {
        "questions": [
            {"id": "q1", "facet": "topic", "question": "What happened?"},
            {"id": "q2", "facet": "entities", "question": "Who was involved?"},
            {"id": "q3", "facet": "timeline", "question": "When did it close?"},
            {"id": "q4", "facet": "outcomes", "question": "What was the outcome?"},
        ]
    }

    def answer(qid: str) -> str:
        return json.dumps(
            {"answers": [{"id": qid, "question": "q", "answer": "a", "confidence": 5}]}
        )

    cited = {
        "summary_text": "Alpha merged with Beta. Markets rose.",
        "alignments": [
            {"summary_id": 0, "support": [0, 1], "importance_reason": "core event",
             "support_strength": 5},
            {"summary_id": 1, "support": [3], "importance_reason": "market effect",
             "support_strength": 4},
        ],
    }
    chunk_plan = {
        "doc_stats": {"total_sentences": 6, "chunk_count": 2},
        "chunks": [
            {"id": 1, "span": [0, 2], "summary": "A merger was announced and closed.",
             "contexts": ["merger", "friday close", "analyst surprise"]},
            {"id": 2, "span": [3, 5], "summary": "Markets and shareholders reacted well.",
             "contexts": ["markets rose", "regulator approval", "shareholders cheered"]},
        ],
    }
    write_plan = {
        "domain": "news",
        "goal": "inform",
        "audience": "general readers",
        "style": "concise, neutral",
        "salient_info": ["the merger", "the timing", "the market reaction"],
        "length_guidance": "two sentences",
    }
    verdict = {
        "scores": {
            "A": {"faithfulness": 4, "coverage": 4, "coherence": 4, "concision": 4},
            "B": {"faithfulness": 5, "coverage": 5, "coherence": 4, "concision": 4},
            "C": {"faithfulness": 3, "coverage": 4, "coherence": 4, "concision": 4},
        },
        "winner": "B",
        "reason": "most faithful with best coverage",
        "final_summary": "Candidate B text.",
    }
    return {
        "vanilla_summarize": "Vanilla summary of the merger.",
        "cot_summarize": "Stepwise summary of the merger.",
        "e2a_extract": json.dumps(extraction),
        "e2a_abstract": "Evidence-grounded summary of the merger.",
        "qag_questions": json.dumps(questions),
        "qag_answer": [answer(f"q{i}") for _ in range(cells) for i in range(1, 5)],
        "qag_summarize": "Question-guided summary of the merger.",
        "cite_cite": json.dumps(cited),
        "deco_chunk": json.dumps(chunk_plan),
        "deco_merge": "Merged summary of the merger and its reception.",
        "plan_plan": json.dumps(write_plan),
        "plan_write": "Planned summary of the merger.",
        "ir_draft": "Draft summary of the merger.",
        "ir_evaluate": json.dumps({"score": 5, "suggestions": [], "stop": True}),
        "ir_revise": "Revised summary of the merger.",
        "sc_candidate": [
            text
            for _ in range(cells)
            for text in ("Candidate A text.", "Candidate B text.", "Candidate C text.")
        ],
        "sc_judge": json.dumps(verdict),
        "geval_score": json.dumps(
            {"completeness": 5, "conciseness": 4.5, "faithfulness": 5}
        ),
    }
