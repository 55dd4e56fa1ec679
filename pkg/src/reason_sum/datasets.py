"""Dataset registry, JSONL ingestion, seeded sampling, exemplar selection.

Sampling is pinned to SplitMix64 (64-bit state, fixed shipped constants) with
rejection-sampled bounded draws and a partial Fisher-Yates shuffle, so a seed
reproduces the same subset on any runtime or language, not just this Python
build.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .core import SampleRecord, ShotExemplar, Split
from .metrics import extractive_fragments
from .textproc import tokenize


class DatasetError(ValueError):
    pass


class ParseError(DatasetError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class MissingFieldError(DatasetError):
    def __init__(self, lineno: int, field_name: str):
        self.lineno = lineno
        self.field_name = field_name
        super().__init__(f"line {lineno}: missing field {field_name!r}")


class InsufficientTrainDataError(DatasetError):
    pass


class EmptyInputError(DatasetError):
    pass


class Domain(str, enum.Enum):
    news = "news"
    dialogue = "dialogue"
    social_media = "social_media"
    knowledge_base = "knowledge_base"
    scientific = "scientific"
    narrative = "narrative"
    table = "table"


class DatasetFormat(str, enum.Enum):
    SDS = "SDS"  # single document
    MDS = "MDS"  # multi document
    LNS = "LNS"  # long-form narrative
    TTS = "TTS"  # table to text


class Group(str, enum.Enum):
    short = "short"
    long = "long"
    table = "table"


DEFAULT_MDS_SEPARATOR = "\n\n----- NEXT DOCUMENT -----\n\n"


@dataclass(frozen=True)
class DatasetDescriptor:
    """Registry entry mapping a JSONL file onto SampleRecords.

    The group must be consistent with the format: table-to-text is always the
    table group, multi-document and narrative formats are always long, and
    single-document sets may be short or (for long scientific input) long.
    """

    dataset_id: str
    domain: Domain
    format: DatasetFormat
    group: Group
    document_field: str = "document"
    reference_field: str = "reference"
    id_field: str | None = None
    mds_separator: str = DEFAULT_MDS_SEPARATOR

    def __post_init__(self) -> None:
        if self.format is DatasetFormat.TTS and self.group is not Group.table:
            raise ValueError("TTS datasets must be in the table group")
        if self.format in (DatasetFormat.MDS, DatasetFormat.LNS) and self.group is not Group.long:
            raise ValueError(f"{self.format.value} datasets must be in the long group")
        if self.format is DatasetFormat.SDS and self.group is Group.table:
            raise ValueError("SDS datasets cannot be in the table group")

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset_id": self.dataset_id,
            "domain": self.domain.value,
            "format": self.format.value,
            "group": self.group.value,
            "document_field": self.document_field,
            "reference_field": self.reference_field,
            "id_field": self.id_field,
            "mds_separator": self.mds_separator,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DatasetDescriptor":
        return cls(
            dataset_id=d["dataset_id"],
            domain=Domain(d["domain"]),
            format=DatasetFormat(d["format"]),
            group=Group(d["group"]),
            document_field=d.get("document_field", "document"),
            reference_field=d.get("reference_field", "reference"),
            id_field=d.get("id_field"),
            mds_separator=d.get("mds_separator", DEFAULT_MDS_SEPARATOR),
        )


def load_jsonl(
    path, descriptor: DatasetDescriptor, split: Split = Split.test
) -> list[SampleRecord]:
    """Read one record per JSONL line, in file order.

    Multi-document inputs (a list in the document field) are joined with the
    descriptor's separator line; table inputs are expected pre-linearized.
    Sample ids must be unique within the file.
    """
    records: list[SampleRecord] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(lineno, f"invalid JSON ({err.msg})") from None
            if not isinstance(obj, dict):
                raise ParseError(lineno, "line is not a JSON object")
            if descriptor.document_field not in obj:
                raise MissingFieldError(lineno, descriptor.document_field)
            raw_doc = obj[descriptor.document_field]
            if isinstance(raw_doc, list):
                document = descriptor.mds_separator.join(str(part) for part in raw_doc)
            elif isinstance(raw_doc, str):
                document = raw_doc
            else:
                raise ParseError(
                    lineno, f"document field must be a string or list, got {type(raw_doc).__name__}"
                )
            if not document.strip():
                raise ParseError(lineno, "document is empty")
            reference = obj.get(descriptor.reference_field) or ""
            if not isinstance(reference, str):
                raise ParseError(lineno, "reference field must be a string")
            if descriptor.id_field and descriptor.id_field in obj:
                sample_id = str(obj[descriptor.id_field])
            else:
                sample_id = f"{descriptor.dataset_id}-{lineno:06d}"
            if sample_id in seen_ids:
                raise ParseError(lineno, f"duplicate sample_id {sample_id!r}")
            seen_ids.add(sample_id)
            records.append(
                SampleRecord(
                    sample_id=sample_id,
                    dataset_id=descriptor.dataset_id,
                    document=document,
                    reference=reference,
                    split=split,
                )
            )
    return records


class SplitMix64:
    """SplitMix64 with the standard published constants.

    64-bit state; bounded draws use rejection sampling so there is no modulo
    bias and the stream is identical on every platform.
    """

    GAMMA = 0x9E3779B97F4B7C15
    MIX1 = 0xBF58476D1CE4E5B9
    MIX2 = 0x94D049BB133111EB
    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * self.MIX1) & self.MASK
        z = ((z ^ (z >> 27)) * self.MIX2) & self.MASK
        return z ^ (z >> 31)

    def next_below(self, bound: int) -> int:
        """Uniform integer in [0, bound) via rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = (1 << 64) - ((1 << 64) % bound)
        while True:
            draw = self.next_u64()
            if draw < threshold:
                return draw % bound


def sample_test_set(
    records: Sequence[SampleRecord], n: int = 100, seed: int = 42
) -> list[SampleRecord]:
    """Uniform sample of n records without replacement, pinned to the seed.

    When n covers the whole input, everything is returned in original order.
    Otherwise a partial Fisher-Yates over SplitMix64 picks and orders the
    sample deterministically in (records order, n, seed).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n >= len(records):
        return list(records)
    rng = SplitMix64(seed)
    indices = list(range(len(records)))
    for i in range(n):
        j = i + rng.next_below(len(indices) - i)
        indices[i], indices[j] = indices[j], indices[i]
    return [records[indices[i]] for i in range(n)]


def truncate_tokens(text: str, cap: int, marker: str = " [truncated]") -> str:
    """Cut text to at most ``cap`` whitespace tokens, marking the cut."""
    parts = text.split()
    if len(parts) <= cap:
        return text
    return " ".join(parts[:cap]) + marker


def pick_exemplars(
    train_records: Sequence[SampleRecord],
    k: int = 2,
    seed: int = 42,
    doc_token_cap: int = 800,
) -> list[ShotExemplar]:
    """Deterministic seeded exemplar choice from a designated train split.

    Exemplar documents are truncated to the token cap with a trailing marker
    so 2-shot prompts stay bounded.
    """
    if len(train_records) < k:
        raise InsufficientTrainDataError(
            f"need at least {k} train records, got {len(train_records)}"
        )
    chosen = sample_test_set(train_records, k, seed)
    return [
        ShotExemplar(
            document=truncate_tokens(rec.document, doc_token_cap),
            summary=rec.reference,
        )
        for rec in chosen
    ]


@dataclass(frozen=True)
class DatasetStatistics:
    """Corpus means in the dataset-table convention.

    ``compression`` here is document tokens over summary tokens (the inverse
    of the per-summary compression-ratio metric) and coverage is a percent.
    """

    n_records: int
    doc_tokens: float
    sum_tokens: float
    density: float
    compression: float
    coverage_pct: float

    def to_dict(self) -> dict[str, float | int]:
        return {
            "n_records": self.n_records,
            "doc_tokens": self.doc_tokens,
            "sum_tokens": self.sum_tokens,
            "density": self.density,
            "compression": self.compression,
            "coverage_pct": self.coverage_pct,
        }


def dataset_statistics(records: Iterable[SampleRecord]) -> DatasetStatistics:
    """Token counts and extractive-fragment statistics over labeled records."""
    doc_counts: list[int] = []
    sum_counts: list[int] = []
    densities: list[float] = []
    compressions: list[float] = []
    coverages: list[float] = []
    for rec in records:
        if not rec.reference.strip():
            continue
        d = len(tokenize(rec.document))
        s = len(tokenize(rec.reference))
        if d == 0 or s == 0:
            continue
        coverage, density = extractive_fragments(rec.document, rec.reference)
        doc_counts.append(d)
        sum_counts.append(s)
        densities.append(density)
        compressions.append(d / s)
        coverages.append(coverage)
    if not doc_counts:
        raise EmptyInputError("no records with non-empty document and reference")
    n = len(doc_counts)
    return DatasetStatistics(
        n_records=n,
        doc_tokens=math.fsum(doc_counts) / n,
        sum_tokens=math.fsum(sum_counts) / n,
        density=math.fsum(densities) / n,
        compression=math.fsum(compressions) / n,
        coverage_pct=math.fsum(coverages) / n * 100.0,
    )
