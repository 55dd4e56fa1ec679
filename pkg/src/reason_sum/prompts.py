"""Prompt template loading, slot filling, and message assembly.

Templates live under ``resources/templates`` (one file per pipeline stage,
named ``<strategy>_<stage>.txt``) with ``{{slot}}`` placeholders. A shipped
checksum file pins their content so any accidental edit is caught in tests.
"""

from __future__ import annotations

import hashlib
import json
import re
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

from .core import ShotExemplar, StrategyId


class MissingTemplateError(KeyError):
    pass


class MissingSlotError(KeyError):
    pass


_SLOT_RE = re.compile(r"\{\{([a-z_]+)\}\}")

# Stage names double as template names and as the stage keys a mock scripts.
STAGE_TEMPLATES = (
    "vanilla_summarize",
    "cot_summarize",
    "sc_candidate",
    "sc_judge",
    "cite_cite",
    "deco_chunk",
    "deco_merge",
    "qag_questions",
    "qag_answer",
    "qag_summarize",
    "plan_plan",
    "plan_write",
    "ir_draft",
    "ir_evaluate",
    "ir_revise",
    "e2a_extract",
    "e2a_abstract",
    "geval_score",
)

COT_DOMAINS = (
    "news",
    "dialogue",
    "social_media",
    "knowledge_base",
    "scientific",
    "narrative",
    "table",
    "generic",
)

# The stage of each pipeline that writes a summary from the document; 2-shot
# exemplars are inlined here and nowhere else.
FINAL_SUMMARY_STAGE = {
    StrategyId.vanilla: "vanilla_summarize",
    StrategyId.cot: "cot_summarize",
    StrategyId.e2a: "e2a_abstract",
    StrategyId.qag: "qag_summarize",
    StrategyId.cite: "cite_cite",
    StrategyId.deco: "deco_merge",
    StrategyId.plan: "plan_write",
    StrategyId.ir: "ir_draft",
    StrategyId.sc: "sc_candidate",
}


def _templates_root():
    return resources.files("reason_sum") / "resources" / "templates"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Template text by stage name (or ``cot_blocks/<domain>``)."""
    path = _templates_root() / f"{name}.txt"
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise MissingTemplateError(name) from None


@lru_cache(maxsize=None)
def cot_block(domain: str) -> str:
    """Domain-conditioned reasoning block; unknown domains get the generic one."""
    key = domain if domain in COT_DOMAINS else "generic"
    return load_template(f"cot_blocks/{key}").rstrip("\n")


def render(template: str, slots: Mapping[str, str]) -> str:
    """Fill ``{{slot}}`` placeholders; unresolved slots are an error."""

    def _sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in slots:
            raise MissingSlotError(key)
        return slots[key]

    return _SLOT_RE.sub(_sub, template)


def render_exemplars(exemplars: Sequence[ShotExemplar]) -> str:
    """Worked (document, summary) pairs, or empty text for 0-shot."""
    if not exemplars:
        return ""
    parts = ["Worked examples:", ""]
    for i, ex in enumerate(exemplars, start=1):
        parts += [
            f"Example {i}:",
            "[Begin Document]",
            ex.document,
            "[End Document]",
            f"SUMMARY: {ex.summary}",
            "",
        ]
    parts.append("Now the target document:")
    parts.append("")
    return "\n".join(parts) + "\n"


def assemble_prompt(
    strategy: StrategyId,
    stage: str,
    document: str,
    exemplars: Sequence[ShotExemplar] = (),
    slots: Mapping[str, str] | None = None,
) -> tuple[tuple[str, str], ...]:
    """Messages for one pipeline stage: filled template as a single user turn.

    ``stage`` is the short stage name ("summarize", "judge", ...); the
    template key is ``<strategy>_<stage>``. Exemplars render only into the
    strategy's final summarization stage; passing them for any other stage is
    a caller bug and raises.
    """
    name = f"{strategy.value}_{stage}"
    if name not in STAGE_TEMPLATES:
        raise MissingTemplateError(name)
    if exemplars and FINAL_SUMMARY_STAGE.get(strategy) != name:
        raise ValueError(f"exemplars are not allowed in stage {name}")
    filled: dict[str, str] = {"document": document}
    if slots:
        filled.update(slots)
    if "{{exemplars}}" in load_template(name):
        filled.setdefault("exemplars", render_exemplars(exemplars))
    text = render(load_template(name), filled)
    return (("user", text),)


_COUNT_WORDS = {
    2: "two", 3: "three", 4: "four", 5: "five",
    6: "six", 7: "seven", 8: "eight", 9: "nine", 10: "ten",
}


def candidate_labels(n: int) -> list[str]:
    """A, B, C, ... labels for n candidates."""
    if not 2 <= n <= 26:
        raise ValueError("candidate count must be in [2, 26]")
    return [chr(ord("A") + i) for i in range(n)]


def sc_judge_slots(
    document: str, candidates: Sequence[str], weights: Mapping[str, float]
) -> dict[str, str]:
    """Slot values for the candidate-selection judge prompt."""
    labels = candidate_labels(len(candidates))
    block = "\n".join(
        f"CANDIDATE_{lab}: {cand}" for lab, cand in zip(labels, candidates)
    )
    return {
        "document": document,
        "candidate_count": _COUNT_WORDS.get(len(candidates), str(len(candidates))),
        "labels_slash": "/".join(labels),
        "labels_quoted": ", ".join(f"'{lab}'" for lab in labels),
        "candidates_block": block,
        "w_faithfulness": f"{weights['faithfulness']:g}",
        "w_coverage": f"{weights['coverage']:g}",
        "w_coherence": f"{weights['coherence']:g}",
        "w_concision": f"{weights['concision']:g}",
    }


def template_checksums() -> dict[str, str]:
    """sha256 of every shipped template file, keyed by template name."""
    sums: dict[str, str] = {}
    for name in STAGE_TEMPLATES:
        text = load_template(name)
        sums[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    for domain in COT_DOMAINS:
        key = f"cot_blocks/{domain}"
        sums[key] = hashlib.sha256(load_template(key).encode("utf-8")).hexdigest()
    return sums


def pinned_checksums() -> dict[str, str]:
    """The checksums shipped with the package (drift detector baseline)."""
    path = _templates_root() / "checksums.json"
    return json.loads(path.read_text(encoding="utf-8"))
