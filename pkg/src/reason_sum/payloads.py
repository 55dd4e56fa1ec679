"""Structured stage payloads and their validators.

Every multi-stage pipeline parses a JSON payload out of at least one model
response. Validators return a list of human-readable violations (empty means
valid); pipelines turn a non-empty list into one bounded re-ask and then a
hard SchemaViolationError. No malformed payload ever reaches a downstream
stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from . import textproc


class SchemaViolationError(Exception):
    def __init__(self, stage: str, violations: Sequence[str]):
        self.stage = stage
        self.violations = list(violations)
        super().__init__(f"{stage}: " + "; ".join(self.violations))


QAG_FACETS = frozenset(
    {"topic", "key_pts", "entities", "timeline", "numbers", "outcomes", "challenges", "insights"}
)

IR_SUGGESTION_TYPES = frozenset({"add", "remove", "rephrase", "shorten", "none"})


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v: Any) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool))


# ---------------------------------------------------------------------------
# E2A stage 1

@dataclass(frozen=True)
class Extraction:
    total_sentences: int
    selected_budget: int
    selected: tuple[tuple[int, str], ...]

    def to_payload(self) -> dict[str, Any]:
        return {
            "stats": {
                "total_sentences": self.total_sentences,
                "selected_budget": self.selected_budget,
            },
            "selected": [{"index": i, "text": t} for i, t in self.selected],
        }


def extraction_violations(obj: Any, n_sentences: int) -> list[str]:
    """Shape and index checks for the extraction payload.

    Indices must be valid into the harness's own sentence array (length
    ``n_sentences``) and strictly increasing. Verbatim-text mismatches are
    not violations; the pipeline repairs them against the true sentences.
    """
    v: list[str] = []
    if not isinstance(obj, Mapping):
        return ["payload must be a JSON object"]
    stats = obj.get("stats")
    if not isinstance(stats, Mapping):
        v.append("stats must be an object with total_sentences and selected_budget")
        stats = {}
    if not _is_int(stats.get("total_sentences")) or stats.get("total_sentences", 0) < 1:
        v.append("stats.total_sentences must be a positive integer")
    budget = stats.get("selected_budget")
    if not _is_int(budget) or budget < 1:
        v.append("stats.selected_budget must be a positive integer")
    selected = obj.get("selected")
    if not isinstance(selected, list) or not selected:
        v.append("selected must be a non-empty array")
        return v
    prev = -1
    for pos, item in enumerate(selected):
        if not isinstance(item, Mapping):
            v.append(f"selected[{pos}] must be an object")
            continue
        idx = item.get("index")
        if not _is_int(idx):
            v.append(f"selected[{pos}].index must be an integer")
            continue
        if not 0 <= idx < n_sentences:
            v.append(f"selected[{pos}].index {idx} out of range [0, {n_sentences})")
        if idx <= prev:
            v.append(f"selected[{pos}].index {idx} not strictly increasing")
        prev = idx
        if not isinstance(item.get("text"), str):
            v.append(f"selected[{pos}].text must be a string")
    if _is_int(budget) and budget >= 1 and budget != len(selected):
        v.append(f"selected_budget {budget} != number of selected sentences {len(selected)}")
    return v


def extraction_from_payload(obj: Mapping[str, Any]) -> Extraction:
    return Extraction(
        total_sentences=obj["stats"]["total_sentences"],
        selected_budget=obj["stats"]["selected_budget"],
        selected=tuple((item["index"], item["text"]) for item in obj["selected"]),
    )


# ---------------------------------------------------------------------------
# QAG stages 1 and 2

@dataclass(frozen=True)
class QASet:
    questions: tuple[dict[str, Any], ...]
    answers: tuple[dict[str, Any], ...]

    def to_payload(self) -> dict[str, Any]:
        return {"questions": list(self.questions), "answers": list(self.answers)}


def questions_violations(obj: Any, q_range: tuple[int, int]) -> list[str]:
    v: list[str] = []
    if not isinstance(obj, Mapping):
        return ["payload must be a JSON object"]
    questions = obj.get("questions")
    if not isinstance(questions, list):
        return ["questions must be an array"]
    lo, hi = q_range
    if not lo <= len(questions) <= hi:
        v.append(f"question count {len(questions)} outside range {lo}-{hi}")
    seen_ids = set()
    for pos, q in enumerate(questions):
        if not isinstance(q, Mapping):
            v.append(f"questions[{pos}] must be an object")
            continue
        qid = q.get("id")
        if qid is None:
            v.append(f"questions[{pos}].id missing")
        elif qid in seen_ids:
            v.append(f"questions[{pos}].id {qid!r} duplicated")
        else:
            seen_ids.add(qid)
        if q.get("facet") not in QAG_FACETS:
            v.append(f"questions[{pos}].facet {q.get('facet')!r} not a known facet")
        if not isinstance(q.get("question"), str) or not q.get("question"):
            v.append(f"questions[{pos}].question must be a non-empty string")
    return v


def answers_violations(obj: Any, question_ids: set[Any]) -> list[str]:
    v: list[str] = []
    if not isinstance(obj, Mapping):
        return ["payload must be a JSON object"]
    answers = obj.get("answers")
    if not isinstance(answers, list) or not answers:
        return ["answers must be a non-empty array"]
    for pos, a in enumerate(answers):
        if not isinstance(a, Mapping):
            v.append(f"answers[{pos}] must be an object")
            continue
        if a.get("id") not in question_ids:
            v.append(f"answers[{pos}].id {a.get('id')!r} does not match a question id")
        if not isinstance(a.get("answer"), str):
            v.append(f"answers[{pos}].answer must be a string")
        conf = a.get("confidence")
        if not _is_int(conf) or not 1 <= conf <= 5:
            v.append(f"answers[{pos}].confidence must be an integer in [1, 5]")
    return v


# ---------------------------------------------------------------------------
# Cite

@dataclass(frozen=True)
class CitedSummary:
    summary_text: str
    alignments: tuple[dict[str, Any], ...]

    def to_payload(self) -> dict[str, Any]:
        return {"summary_text": self.summary_text, "alignments": list(self.alignments)}


def cited_summary_violations(obj: Any, n_sentences: int) -> list[str]:
    """Checks for the cite payload against the shipped sentence array.

    ``summary_id`` is read as a 0-based index into the summary's own
    sentences; a payload that is uniformly 1-based is normalized by the
    pipeline before validation.
    """
    v: list[str] = []
    if not isinstance(obj, Mapping):
        return ["payload must be a JSON object"]
    summary_text = obj.get("summary_text")
    if not isinstance(summary_text, str) or not summary_text.strip():
        v.append("summary_text must be a non-empty string")
        n_summary = 0
    else:
        n_summary = len(textproc.split_sentences(summary_text))
    alignments = obj.get("alignments")
    if not isinstance(alignments, list) or not alignments:
        v.append("alignments must be a non-empty array")
        return v
    for pos, al in enumerate(alignments):
        if not isinstance(al, Mapping):
            v.append(f"alignments[{pos}] must be an object")
            continue
        sid = al.get("summary_id")
        if not _is_int(sid) or not 0 <= sid < max(n_summary, 1):
            v.append(
                f"alignments[{pos}].summary_id {sid!r} does not address a summary sentence"
            )
        support = al.get("support")
        if not isinstance(support, list) or not 1 <= len(support) <= 3:
            v.append(f"alignments[{pos}].support must list 1-3 sentence indices")
        else:
            for s in support:
                if not _is_int(s) or not 0 <= s < n_sentences:
                    v.append(
                        f"alignments[{pos}].support index {s!r} out of range [0, {n_sentences})"
                    )
        if not isinstance(al.get("importance_reason"), str):
            v.append(f"alignments[{pos}].importance_reason must be a string")
        strength = al.get("support_strength")
        if not _is_int(strength) or not 1 <= strength <= 5:
            v.append(f"alignments[{pos}].support_strength must be an integer in [1, 5]")
    return v


def normalize_cite_summary_ids(obj: dict[str, Any]) -> bool:
    """Shift uniformly 1-based summary_ids down to 0-based; True if shifted."""
    alignments = obj.get("alignments")
    if not isinstance(alignments, list) or not alignments:
        return False
    ids = [al.get("summary_id") for al in alignments if isinstance(al, Mapping)]
    if not ids or not all(_is_int(i) for i in ids):
        return False
    summary = obj.get("summary_text")
    if not isinstance(summary, str):
        return False
    n_summary = len(textproc.split_sentences(summary))
    if min(ids) >= 1 and max(ids) == n_summary and n_summary > 0:
        for al in alignments:
            al["summary_id"] = al["summary_id"] - 1
        return True
    return False


# ---------------------------------------------------------------------------
# Deco stage 1

@dataclass(frozen=True)
class ChunkPlan:
    total_sentences: int
    chunk_count: int
    chunks: tuple[dict[str, Any], ...]

    def summaries(self) -> list[str]:
        return [c["summary"] for c in self.chunks]

    def contexts(self) -> list[list[str]]:
        return [list(c["contexts"]) for c in self.chunks]

    def to_payload(self) -> dict[str, Any]:
        return {
            "doc_stats": {
                "total_sentences": self.total_sentences,
                "chunk_count": self.chunk_count,
            },
            "chunks": list(self.chunks),
        }


def _span_pair(span: Any) -> tuple[int, int] | None:
    if isinstance(span, Mapping) and _is_int(span.get("start")) and _is_int(span.get("end")):
        return span["start"], span["end"]
    if isinstance(span, (list, tuple)) and len(span) == 2 and all(_is_int(x) for x in span):
        return span[0], span[1]
    return None


def chunk_plan_violations(obj: Any) -> list[str]:
    """Spans are inclusive (start, end) sentence indices; contiguity means
    next.start == prev.end + 1 and the spans must exactly cover
    [0, total_sentences - 1] in order."""
    v: list[str] = []
    if not isinstance(obj, Mapping):
        return ["payload must be a JSON object"]
    stats = obj.get("doc_stats")
    if not isinstance(stats, Mapping):
        return ["doc_stats must be an object with total_sentences and chunk_count"]
    total = stats.get("total_sentences")
    if not _is_int(total) or total < 1:
        v.append("doc_stats.total_sentences must be a positive integer")
        total = None
    chunks = obj.get("chunks")
    if not isinstance(chunks, list) or not chunks:
        v.append("chunks must be a non-empty array")
        return v
    count = stats.get("chunk_count")
    if not _is_int(count) or count != len(chunks):
        v.append(f"doc_stats.chunk_count {count!r} != number of chunks {len(chunks)}")
    expected_start = 0
    for pos, chunk in enumerate(chunks):
        if not isinstance(chunk, Mapping):
            v.append(f"chunks[{pos}] must be an object")
            continue
        pair = _span_pair(chunk.get("span"))
        if pair is None:
            v.append(f"chunks[{pos}].span must be (start, end) integers")
            continue
        start, end = pair
        if start > end:
            v.append(f"chunks[{pos}].span start {start} > end {end}")
        if start != expected_start:
            v.append(
                f"chunks[{pos}].span starts at {start}, expected {expected_start} "
                "(spans must be contiguous and non-overlapping)"
            )
        expected_start = end + 1
        if not isinstance(chunk.get("summary"), str) or not chunk.get("summary"):
            v.append(f"chunks[{pos}].summary must be a non-empty string")
        contexts = chunk.get("contexts")
        if not isinstance(contexts, list) or not 3 <= len(contexts) <= 6:
            v.append(f"chunks[{pos}].contexts must list 3-6 strings")
        elif not all(isinstance(c, str) and c for c in contexts):
            v.append(f"chunks[{pos}].contexts entries must be non-empty strings")
    if total is not None and expected_start != total:
        v.append(f"spans cover [0, {expected_start}) but total_sentences is {total}")
    return v


def chunk_plan_from_payload(obj: Mapping[str, Any]) -> ChunkPlan:
    return ChunkPlan(
        total_sentences=obj["doc_stats"]["total_sentences"],
        chunk_count=obj["doc_stats"]["chunk_count"],
        chunks=tuple(dict(c) for c in obj["chunks"]),
    )


# ---------------------------------------------------------------------------
# Plan stage 1

@dataclass(frozen=True)
class WritePlan:
    domain: str
    goal: str
    audience: str
    style: str
    salient_info: tuple[str, ...]
    length_guidance: str

    def to_payload(self) -> dict[str, Any]:
        return {
            "domain": self.domain,
            "goal": self.goal,
            "audience": self.audience,
            "style": self.style,
            "salient_info": list(self.salient_info),
            "length_guidance": self.length_guidance,
        }


def write_plan_violations(obj: Any) -> list[str]:
    v: list[str] = []
    if not isinstance(obj, Mapping):
        return ["payload must be a JSON object"]
    for key in ("domain", "goal", "audience", "style", "length_guidance"):
        val = obj.get(key)
        if not isinstance(val, str) or not val.strip():
            v.append(f"{key} must be a non-empty string")
    info = obj.get("salient_info")
    if not isinstance(info, list) or not 3 <= len(info) <= 5:
        v.append("salient_info must list 3-5 entries")
    elif not all(isinstance(s, str) and s.strip() for s in info):
        v.append("salient_info entries must be non-empty strings")
    return v


def write_plan_from_payload(obj: Mapping[str, Any]) -> WritePlan:
    return WritePlan(
        domain=obj["domain"],
        goal=obj["goal"],
        audience=obj["audience"],
        style=obj["style"],
        salient_info=tuple(obj["salient_info"]),
        length_guidance=obj["length_guidance"],
    )


# ---------------------------------------------------------------------------
# IR evaluation

@dataclass(frozen=True)
class IREvaluation:
    score: int
    suggestions: tuple[dict[str, Any], ...]
    stop: bool

    def actionable(self) -> list[dict[str, Any]]:
        return [s for s in self.suggestions if s.get("type") != "none"]

    def to_payload(self) -> dict[str, Any]:
        return {"score": self.score, "suggestions": list(self.suggestions), "stop": self.stop}


def ir_evaluation_violations(obj: Any) -> list[str]:
    v: list[str] = []
    if not isinstance(obj, Mapping):
        return ["payload must be a JSON object"]
    score = obj.get("score")
    if not _is_int(score) or not 1 <= score <= 5:
        v.append("score must be an integer in [1, 5]")
    suggestions = obj.get("suggestions")
    if not isinstance(suggestions, list):
        v.append("suggestions must be an array")
        suggestions = []
    actionable = 0
    for pos, s in enumerate(suggestions):
        if not isinstance(s, Mapping):
            v.append(f"suggestions[{pos}] must be an object")
            continue
        stype = s.get("type")
        if stype not in IR_SUGGESTION_TYPES:
            v.append(f"suggestions[{pos}].type {stype!r} not one of {sorted(IR_SUGGESTION_TYPES)}")
        elif stype != "none":
            actionable += 1
        if not isinstance(s.get("content"), str):
            v.append(f"suggestions[{pos}].content must be a string")
    stop = obj.get("stop")
    if not isinstance(stop, bool):
        v.append("stop must be a boolean")
    elif stop and score != 5 and actionable > 0:
        v.append("stop=true requires score 5 or no actionable suggestions")
    return v


def ir_evaluation_from_payload(obj: Mapping[str, Any]) -> IREvaluation:
    return IREvaluation(
        score=obj["score"],
        suggestions=tuple(dict(s) for s in obj.get("suggestions", [])),
        stop=obj["stop"],
    )
