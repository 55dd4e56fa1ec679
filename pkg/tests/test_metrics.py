from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles

scipy_stats = pytest.importorskip("scipy.stats")
from reason_sum.judge import GEvalScores
from reason_sum.metrics import (
    EmptyDocumentError,
    EmptyRunError,
    EmptySummaryError,
    LengthMismatchError,
    MetricRow,
    SampleMetrics,
    ScoreImportError,
    TooFewPointsError,
    UnknownSampleError,
    ZeroVarianceError,
    abstractiveness,
    aggregate,
    compression_ratio,
    compute_sample_metrics,
    extractive_fragments,
    import_external_scores,
    pearson_fit,
    rouge_avg,
    rouge_l,
    rouge_n,
    student_t_sf2,
)

token = st.sampled_from(["a", "b", "c", "d", "e"])
token_lists = st.lists(token, min_size=1, max_size=30)


def text_of(tokens):
    return " ".join(tokens)


class TestRougeN:
    def test_hand_enumerated_unigrams(self):
        score = rouge_n("the cat sat", "the cat ate", 1)
        assert score.precision == pytest.approx(2 / 3)
        assert score.recall == pytest.approx(2 / 3)
        assert score.f1 == pytest.approx(2 / 3)

    def test_identity_bigrams(self):
        assert rouge_n("a b c", "a b c", 2).f1 == 1.0

    def test_disjoint(self):
        assert rouge_n("a b", "x y", 1).f1 == 0.0

    def test_rejects_other_n(self):
        with pytest.raises(ValueError):
            rouge_n("a", "a", 3)

    @given(cand=token_lists, ref=token_lists, n=st.sampled_from([1, 2]))
    def test_matches_brute_force(self, cand, ref, n):
        ours = rouge_n(text_of(cand), text_of(ref), n)
        p, r, f = oracles.brute_rouge_n(cand, ref, n)
        assert ours.precision == pytest.approx(p, abs=1e-12)
        assert ours.recall == pytest.approx(r, abs=1e-12)
        assert ours.f1 == pytest.approx(f, abs=1e-12)

    @given(cand=token_lists)
    def test_containment_gives_full_precision(self, cand):
        # reference holding every candidate token (as a multiset) forces P=1
        reference = text_of(cand + cand)
        assert rouge_n(text_of(cand), reference, 1).precision == pytest.approx(1.0)


class TestRougeL:
    def test_hand_lcs(self):
        score = rouge_l("a b c d", "a c b d")
        assert score.precision == pytest.approx(0.75)
        assert score.recall == pytest.approx(0.75)
        assert score.f1 == pytest.approx(0.75)

    def test_identity(self):
        assert rouge_l("x y z", "x y z").f1 == 1.0

    def test_empty_candidate(self):
        assert rouge_l("", "a b").f1 == 0.0

    @given(cand=token_lists, ref=token_lists)
    def test_matches_brute_force(self, cand, ref):
        ours = rouge_l(text_of(cand), text_of(ref))
        p, r, f = oracles.brute_rouge_l(cand, ref)
        assert ours.f1 == pytest.approx(f, abs=1e-12)


class TestRougeAvg:
    def test_identity_is_100(self):
        assert rouge_avg("same text here", "same text here") == pytest.approx(100.0)

    def test_disjoint_is_0(self):
        assert rouge_avg("a b c", "x y z") == pytest.approx(0.0)

    def test_hand_computed_mixture(self):
        assert rouge_avg("the cat sat", "the cat ate") == pytest.approx(61.1111, abs=1e-3)


class TestCompressionRatio:
    def test_identity(self):
        assert compression_ratio("a b c", "a b c") == 1.0

    def test_quarter(self):
        summary = "w x y z v"
        document = " ".join(f"t{i}" for i in range(20))
        assert compression_ratio(summary, document) == 0.25

    def test_empty_summary_is_zero(self):
        assert compression_ratio("", "a b c") == 0.0

    def test_empty_document_rejected(self):
        with pytest.raises(EmptyDocumentError):
            compression_ratio("a", "")


class TestAbstractiveness:
    def test_verbatim_span_is_zero(self):
        doc = "a b c d e f g"
        assert abstractiveness("b c d e", doc) == 0.0

    def test_fully_novel_is_one(self):
        assert abstractiveness("x y z", "a b c") == 1.0

    def test_hand_computed(self):
        value = abstractiveness("a b x", "a b c d")
        assert value == pytest.approx((1 / 3 + 1 / 2 + 1) / 3)

    def test_empty_summary_rejected(self):
        with pytest.raises(EmptySummaryError):
            abstractiveness("  ", "a b")

    @given(summary=token_lists, document=token_lists)
    def test_matches_brute_force(self, summary, document):
        ours = abstractiveness(text_of(summary), text_of(document))
        assert ours == pytest.approx(
            oracles.brute_abstractiveness(summary, document), abs=1e-12
        )

    @given(document=st.lists(token, min_size=3, max_size=30), data=st.data())
    def test_contiguous_span_of_three_plus_is_zero(self, document, data):
        start = data.draw(st.integers(0, len(document) - 3))
        end = data.draw(st.integers(start + 3, len(document)))
        span = document[start:end]
        assert abstractiveness(text_of(span), text_of(document)) == 0.0


class TestExtractiveFragments:
    def test_hand_run_greedy(self):
        coverage, density = extractive_fragments("a b c d e f", "a b x d e")
        assert coverage == pytest.approx(0.8)
        assert density == pytest.approx(1.6)

    def test_contiguous_containment(self):
        coverage, density = extractive_fragments("a b c d e f", "b c d")
        assert coverage == 1.0
        assert density == 3.0

    def test_disjoint(self):
        assert extractive_fragments("a b c", "x y z") == (0.0, 0.0)

    def test_empty_summary_rejected(self):
        with pytest.raises(EmptySummaryError):
            extractive_fragments("a b", "")

    @given(document=token_lists, summary=token_lists)
    def test_matches_brute_force(self, document, summary):
        ours = extractive_fragments(text_of(document), text_of(summary))
        ref = oracles.brute_fragments(document, summary)
        assert ours[0] == pytest.approx(ref[0], abs=1e-12)
        assert ours[1] == pytest.approx(ref[1], abs=1e-12)

    @given(document=token_lists, summary=token_lists)
    def test_density_at_least_coverage(self, document, summary):
        coverage, density = extractive_fragments(text_of(document), text_of(summary))
        assert 0.0 <= coverage <= 1.0
        assert density >= coverage - 1e-12


class TestPearsonFit:
    def test_perfect_anticorrelation(self):
        xs = [1.0, 2.0, 3.0, 4.0, 5.0]
        fit = pearson_fit(xs, [-x for x in xs])
        assert fit.r == pytest.approx(-1.0)
        assert fit.p_value == pytest.approx(0.0, abs=1e-12)
        assert fit.slope == pytest.approx(-1.0)

    def test_constant_side_rejected(self):
        with pytest.raises(ZeroVarianceError):
            pearson_fit([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            pearson_fit([1.0, 2.0], [1.0])

    def test_too_few_points(self):
        with pytest.raises(TooFewPointsError):
            pearson_fit([1.0, 2.0], [2.0, 1.0])

    @settings(deadline=None)
    @given(
        xs=st.lists(st.floats(-100, 100).map(lambda v: round(v, 6)), min_size=3, max_size=12),
        noise=st.data(),
    )
    def test_matches_brute_force_and_scipy(self, xs, noise):
        ys = [
            round(x * 0.5 + noise.draw(st.floats(-10, 10)), 6) for x in xs
        ]
        mx = sum(xs) / len(xs)
        my = sum(ys) / len(ys)
        # skip inputs where variance is so small the naive oracle itself is noise
        if sum((x - mx) ** 2 for x in xs) < 1e-9 or sum((y - my) ** 2 for y in ys) < 1e-9:
            return
        fit = pearson_fit(xs, ys)
        r, slope, intercept = oracles.brute_pearson(xs, ys)
        assert fit.r == pytest.approx(r, rel=1e-9, abs=1e-9)
        assert fit.slope == pytest.approx(slope, rel=1e-9, abs=1e-9)
        assert fit.intercept == pytest.approx(intercept, rel=1e-9, abs=1e-9)
        expected = scipy_stats.pearsonr(xs, ys)
        assert fit.r == pytest.approx(expected.statistic, rel=1e-9, abs=1e-9)
        # at |r| within a few ulps of 1 float rounding dominates both libraries
        if 1.0 - abs(fit.r) > 1e-12:
            assert fit.p_value == pytest.approx(expected.pvalue, rel=1e-6, abs=1e-9)

    @settings(deadline=None)
    @given(t=st.floats(-8, 8), df=st.integers(1, 40))
    def test_t_tail_matches_scipy(self, t, df):
        ours = student_t_sf2(t, df)
        assert ours == pytest.approx(2 * scipy_stats.t.sf(abs(t), df), abs=1e-9)


class TestImportExternalScores:
    def write_csv(self, tmp_path, rows):
        path = tmp_path / "scores.csv"
        path.write_text("sample_id,metric,value\n" + "\n".join(rows) + "\n")
        return path

    def test_basic_row(self, tmp_path):
        path = self.write_csv(tmp_path, ["s1,alignscore,0.72"])
        scores = import_external_scores(path, {"s1"})
        assert scores == {("s1", "alignscore"): 0.72}

    def test_duplicate_last_wins_with_warning(self, tmp_path):
        path = self.write_csv(tmp_path, ["s1,alignscore,0.1", "s1,alignscore,0.9"])
        with pytest.warns(UserWarning, match="duplicate"):
            scores = import_external_scores(path, {"s1"})
        assert scores[("s1", "alignscore")] == 0.9

    def test_out_of_range_warns_but_keeps(self, tmp_path):
        path = self.write_csv(tmp_path, ["s1,alignscore,72.5"])
        with pytest.warns(UserWarning, match="outside"):
            scores = import_external_scores(path, {"s1"})
        assert scores[("s1", "alignscore")] == 72.5

    def test_unknown_sample_rejected_with_rows(self, tmp_path):
        path = self.write_csv(tmp_path, ["s1,m,0.5", "ghost,m,0.5"])
        with pytest.raises(UnknownSampleError, match="3"):
            import_external_scores(path, {"s1"})

    def test_bad_value_is_parse_error(self, tmp_path):
        path = self.write_csv(tmp_path, ["s1,m,not_a_number"])
        with pytest.raises(ScoreImportError, match="row 2"):
            import_external_scores(path, {"s1"})

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,name,score\ns1,m,1\n")
        with pytest.raises(ScoreImportError, match="header"):
            import_external_scores(path)


def row(sample_id, dataset_id, strategy="vanilla", shots=0, effort="none", **metric_kwargs):
    metrics = SampleMetrics(**metric_kwargs)
    return MetricRow(
        sample_id=sample_id,
        dataset_id=dataset_id,
        strategy=strategy,
        shots=shots,
        reasoning_effort=effort,
        metrics=metrics,
    )


class TestAggregate:
    GROUPS = {"ds1": "short", "ds2": "long"}

    def make_rows(self):
        return [
            row("a", "ds1", rouge_avg=0.2, compression_ratio=0.1),
            row("b", "ds1", rouge_avg=0.4, compression_ratio=0.3),
            row("c", "ds2", rouge_avg=0.6, compression_ratio=0.5),
            row("d", "ds2", rouge_avg=0.8, compression_ratio=0.7),
        ]

    def test_hand_computed_means(self):
        table = aggregate(self.make_rows(), self.GROUPS)
        method = table.methods[0]
        assert table.value(method, ("dataset", "ds1"), "rouge_avg") == pytest.approx(0.3)
        assert table.value(method, ("dataset", "ds2"), "rouge_avg") == pytest.approx(0.7)
        assert table.value(method, ("group", "short"), "rouge_avg") == pytest.approx(0.3)
        assert table.value(method, ("avg", ""), "rouge_avg") == pytest.approx(0.5)
        assert table.value(method, ("avg", ""), "compression_ratio") == pytest.approx(0.4)

    def test_single_dataset_group_equals_dataset(self):
        rows = [r for r in self.make_rows() if r.dataset_id == "ds1"]
        table = aggregate(rows, self.GROUPS)
        method = table.methods[0]
        assert table.value(method, ("group", "short"), "rouge_avg") == table.value(
            method, ("dataset", "ds1"), "rouge_avg"
        )

    def test_permutation_invariance(self):
        rows = self.make_rows()
        table1 = aggregate(rows, self.GROUPS)
        table2 = aggregate(list(reversed(rows)), self.GROUPS)
        for key, value in table1.cells.items():
            assert table2.cells[key] == value

    def test_empty_run_rejected(self):
        with pytest.raises(EmptyRunError):
            aggregate([], {})

    def test_geval_overall_averages_dimensions(self):
        rows = [
            row("a", "ds1", geval=GEvalScores(5, 4, 3)),
            row("b", "ds1", geval=GEvalScores(4, 4, 5)),
        ]
        table = aggregate(rows, self.GROUPS)
        method = table.methods[0]
        assert table.value(method, ("avg", ""), "geval_completeness") == pytest.approx(4.5)
        assert table.value(method, ("avg", ""), "geval_overall") == pytest.approx(
            (4.5 + 4.0 + 4.0) / 3
        )

    def test_external_metrics_aggregated(self):
        rows = [
            row("a", "ds1", external={"bertscore": 0.8}),
            row("b", "ds1", external={"bertscore": 0.6}),
        ]
        table = aggregate(rows, self.GROUPS)
        assert table.value(table.methods[0], ("dataset", "ds1"), "bertscore") == pytest.approx(0.7)


class TestComputeSampleMetrics:
    def test_all_fields_with_reference(self):
        m = compute_sample_metrics("a b c d e f", "a b c", "a b x")
        assert m.rouge_avg == pytest.approx(
            (m.rouge1.f1 + m.rouge2.f1 + m.rougeL.f1) / 3
        )
        assert m.compression_ratio == pytest.approx(0.5)
        assert m.frag_coverage == pytest.approx(2 / 3)

    def test_no_reference_skips_rouge(self):
        m = compute_sample_metrics("a b c d", "", "a b")
        assert m.rouge1 is None and m.rouge_avg is None
        assert m.compression_ratio == pytest.approx(0.5)

    def test_round_trip(self):
        m = compute_sample_metrics("a b c d", "a b", "a b")
        m.external["bertscore"] = 0.9
        m.geval = GEvalScores(5, 5, 5)
        assert SampleMetrics.from_dict(m.to_dict()).to_dict() == m.to_dict()
