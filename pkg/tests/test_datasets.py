from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from reason_sum.core import SampleRecord
from reason_sum.datasets import (
    DatasetDescriptor,
    DatasetFormat,
    Domain,
    EmptyInputError,
    Group,
    InsufficientTrainDataError,
    MissingFieldError,
    ParseError,
    SplitMix64,
    dataset_statistics,
    load_jsonl,
    pick_exemplars,
    sample_test_set,
    truncate_tokens,
)

FIXTURES = Path(__file__).parent / "fixtures"


def descriptor(**kwargs) -> DatasetDescriptor:
    defaults = dict(
        dataset_id="toy",
        domain=Domain.news,
        format=DatasetFormat.SDS,
        group=Group.short,
        document_field="article",
        reference_field="highlights",
    )
    defaults.update(kwargs)
    return DatasetDescriptor(**defaults)


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


class TestDescriptor:
    def test_tts_must_be_table(self):
        with pytest.raises(ValueError):
            descriptor(format=DatasetFormat.TTS, group=Group.short)

    def test_mds_must_be_long(self):
        with pytest.raises(ValueError):
            descriptor(format=DatasetFormat.MDS, group=Group.short)

    def test_sds_may_be_long(self):
        descriptor(format=DatasetFormat.SDS, group=Group.long)  # the long-paper case

    def test_round_trip(self):
        d = descriptor(format=DatasetFormat.LNS, group=Group.long)
        assert DatasetDescriptor.from_dict(d.to_dict()) == d


class TestLoadJsonl:
    def test_order_preserved(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [{"article": f"doc {i}", "highlights": f"ref {i}"} for i in range(3)],
        )
        records = load_jsonl(path, descriptor())
        assert [r.document for r in records] == ["doc 0", "doc 1", "doc 2"]
        assert [r.sample_id for r in records] == ["toy-000001", "toy-000002", "toy-000003"]

    def test_missing_document_field_reports_line(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [{"article": "ok", "highlights": "r"}, {"highlights": "r only"}],
        )
        with pytest.raises(MissingFieldError) as err:
            load_jsonl(path, descriptor())
        assert err.value.lineno == 2

    def test_mds_documents_joined_with_separator(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [{"article": ["first doc", "second doc"], "highlights": "r"}],
        )
        desc = descriptor(format=DatasetFormat.MDS, group=Group.long, mds_separator="\n<BREAK>\n")
        records = load_jsonl(path, desc)
        assert records[0].document == "first doc\n<BREAK>\nsecond doc"

    def test_bad_json_line_number(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"article": "a", "highlights": "r"}\nnot json\n')
        with pytest.raises(ParseError) as err:
            load_jsonl(path, descriptor())
        assert err.value.lineno == 2

    def test_missing_reference_loads_empty(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [{"article": "doc"}])
        records = load_jsonl(path, descriptor())
        assert records[0].reference == ""

    def test_duplicate_id_rejected(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [{"id": "x", "article": "a", "highlights": "r"},
             {"id": "x", "article": "b", "highlights": "r"}],
        )
        with pytest.raises(ParseError, match="duplicate"):
            load_jsonl(path, descriptor(id_field="id"))


def records(n: int, dataset_id: str = "ds") -> list[SampleRecord]:
    return [
        SampleRecord(sample_id=f"s{i:05d}", dataset_id=dataset_id, document=f"document {i}")
        for i in range(n)
    ]


class TestSplitMix64:
    def test_pinned_stream(self):
        # frozen outputs of the pinned recurrence for seed 0; any change here
        # silently breaks every golden sample file
        rng = SplitMix64(0)
        assert rng.next_u64() == 0x09AAB36CFDA2D1B3
        assert rng.next_u64() == 0x5B00C67197590451
        assert rng.next_u64() == 0x0EB2AFB57F7F9972

    def test_stream_is_pure_function_of_seed(self):
        a = [SplitMix64(42).next_u64() for _ in range(5)]
        b = [SplitMix64(42).next_u64() for _ in range(5)]
        assert a == b
        assert all(0 <= v < (1 << 64) for v in a)

    def test_bounded_draws_in_range(self):
        rng = SplitMix64(42)
        draws = [rng.next_below(7) for _ in range(1000)]
        assert set(draws) <= set(range(7))


class TestSampleTestSet:
    def test_saturation_returns_all_in_order(self):
        recs = records(50)
        assert sample_test_set(recs, 100, 42) == recs

    def test_deterministic(self):
        recs = records(500)
        assert sample_test_set(recs, 10, 42) == sample_test_set(recs, 10, 42)

    def test_golden_n2_seed42(self):
        recs = [
            SampleRecord(sample_id=f"r{i}", dataset_id="five", document=f"doc {i}")
            for i in range(5)
        ]
        golden = json.loads((FIXTURES / "golden_sample_n2_seed42.json").read_text())
        assert [r.sample_id for r in sample_test_set(recs, 2, 42)] == golden

    def test_seed_change_changes_sample(self):
        recs = records(1000)
        a = sample_test_set(recs, 50, 42)
        b = sample_test_set(recs, 50, 43)
        assert a != b

    @given(
        n_records=st.integers(1, 120),
        n=st.integers(0, 60),
        seed=st.integers(0, 2**63),
    )
    def test_subset_without_duplicates(self, n_records, n, seed):
        recs = records(n_records)
        sample = sample_test_set(recs, n, seed)
        assert len(sample) == min(n, n_records)
        ids = [r.sample_id for r in sample]
        assert len(set(ids)) == len(ids)
        assert set(sample) <= set(recs)


class TestPickExemplars:
    def make_train(self, n=10):
        return [
            SampleRecord(
                sample_id=f"t{i}",
                dataset_id="ds",
                document=f"train doc {i} " + "tok " * 20,
                reference=f"train ref {i}",
            )
            for i in range(n)
        ]

    def test_deterministic_choice(self):
        train = self.make_train()
        first = pick_exemplars(train, k=2, seed=7)
        second = pick_exemplars(train, k=2, seed=7)
        assert first == second
        assert len(first) == 2

    def test_insufficient_train_data(self):
        with pytest.raises(InsufficientTrainDataError):
            pick_exemplars(self.make_train(1), k=2)

    def test_truncation_with_marker(self):
        train = self.make_train()
        exemplars = pick_exemplars(train, k=2, seed=7, doc_token_cap=5)
        for ex in exemplars:
            assert ex.document.endswith("[truncated]")
            assert len(ex.document.split()) == 6  # 5 tokens + marker

    def test_truncate_tokens_under_cap_untouched(self):
        assert truncate_tokens("a b c", 5) == "a b c"

    def test_exemplars_disjoint_from_eval_sample(self):
        # same seed, disjoint splits: exemplar ids never appear in the sample
        train = self.make_train(20)
        eval_records = records(200, dataset_id="ds")
        sample = sample_test_set(eval_records, 50, seed=42)
        exemplar_docs = {e.document for e in pick_exemplars(train, k=2, seed=42)}
        assert all(r.document not in exemplar_docs for r in sample)


class TestDatasetStatistics:
    def test_hand_computed_toy(self):
        recs = [
            SampleRecord(sample_id="a", dataset_id="d",
                         document="a b c d e f", reference="a b x"),
            SampleRecord(sample_id="b", dataset_id="d",
                         document="p q r s", reference="p q"),
        ]
        stats = dataset_statistics(recs)
        assert stats.n_records == 2
        assert stats.doc_tokens == pytest.approx(5.0)
        assert stats.sum_tokens == pytest.approx(2.5)
        assert stats.compression == pytest.approx((6 / 3 + 4 / 2) / 2)
        # fragments: "a b x" vs doc -> frag ab (cov 2/3, dens 4/3); "p q" contained
        assert stats.coverage_pct == pytest.approx((2 / 3 + 1.0) / 2 * 100)
        assert stats.density == pytest.approx((4 / 3 + 2.0) / 2)

    def test_identity_summary(self):
        recs = [
            SampleRecord(sample_id="a", dataset_id="d",
                         document="one two three", reference="one two three")
        ]
        stats = dataset_statistics(recs)
        assert stats.compression == 1.0
        assert stats.coverage_pct == 100.0

    def test_empty_references_rejected(self):
        recs = [SampleRecord(sample_id="a", dataset_id="d", document="doc words")]
        with pytest.raises(EmptyInputError):
            dataset_statistics(recs)
