"""Lexical and statistical metrics.

ROUGE here is pinned to one reproducible flavor: F1, multiset n-gram
matching, the package's own whitespace tokenizer, no stemming, no bootstrap
intervals. Abstractiveness is the mean novel n-gram ratio over n = 1..3.
Extractive fragments follow the standard greedy longest-match decomposition.
The trade-off fit uses an exact Student-t p-value (continued-fraction
incomplete beta), which matters at small n.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .judge import GEvalScores
from .textproc import ngrams, tokenize


class MetricError(ValueError):
    pass


class EmptyDocumentError(MetricError):
    pass


class EmptySummaryError(MetricError):
    pass


class LengthMismatchError(MetricError):
    pass


class TooFewPointsError(MetricError):
    pass


class ZeroVarianceError(MetricError):
    pass


class ScoreImportError(MetricError):
    pass


class UnknownSampleError(MetricError):
    pass


class EmptyRunError(MetricError):
    pass


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "RougeScore":
        return cls(precision=d["precision"], recall=d["recall"], f1=d["f1"])


def _prf(match: float, n_cand: int, n_ref: int) -> RougeScore:
    if n_cand == 0 and n_ref == 0:
        return RougeScore(1.0, 1.0, 1.0)
    if n_cand == 0 or n_ref == 0:
        return RougeScore(0.0, 0.0, 0.0)
    p = match / n_cand
    r = match / n_ref
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return RougeScore(p, r, f)


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Multiset n-gram overlap F1 for n in {1, 2}."""
    if n not in (1, 2):
        raise ValueError("rouge_n supports n in {1, 2}")
    cand = ngrams(tokenize(candidate), n)
    ref = ngrams(tokenize(reference), n)
    match = sum((cand & ref).values())
    return _prf(match, sum(cand.values()), sum(ref.values()))


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """Token-level longest-common-subsequence F1."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    return _prf(_lcs_len(cand, ref), len(cand), len(ref))


def rouge_avg(candidate: str, reference: str) -> float:
    """Mean of the ROUGE-1/2/L F1 values on the 0..100 table scale."""
    scores = (
        rouge_n(candidate, reference, 1),
        rouge_n(candidate, reference, 2),
        rouge_l(candidate, reference),
    )
    return sum(s.f1 for s in scores) / 3 * 100.0


def compression_ratio(summary: str, document: str) -> float:
    """Summary tokens over document tokens (a fraction; reports show percent)."""
    doc_tokens = len(tokenize(document))
    if doc_tokens == 0:
        raise EmptyDocumentError("document has no tokens")
    return len(tokenize(summary)) / doc_tokens


def abstractiveness(summary: str, document: str) -> float:
    """Mean fraction of summary n-grams (n = 1..3) absent from the document.

    Counts summary n-gram occurrences against the document's n-gram set; the
    mean skips n values the summary is too short to produce.
    """
    sum_tokens = tokenize(summary)
    if not sum_tokens:
        raise EmptySummaryError("summary has no tokens")
    doc_tokens = tokenize(document)
    ratios = []
    for n in (1, 2, 3):
        grams = ngrams(sum_tokens, n)
        total = sum(grams.values())
        if total == 0:
            continue
        doc_set = set(ngrams(doc_tokens, n))
        novel = sum(count for gram, count in grams.items() if gram not in doc_set)
        ratios.append(novel / total)
    return sum(ratios) / len(ratios)


def extractive_fragments(document: str, summary: str) -> tuple[float, float]:
    """Greedy longest-match decomposition of the summary against the document.

    Returns (coverage, density): coverage is the covered-token fraction,
    density the mean squared fragment length per summary token.
    """
    sum_tokens = tokenize(summary)
    if not sum_tokens:
        raise EmptySummaryError("summary has no tokens")
    doc_tokens = tokenize(document)
    positions: dict[str, list[int]] = defaultdict(list)
    for j, tok in enumerate(doc_tokens):
        positions[tok].append(j)
    fragments: list[int] = []
    i = 0
    while i < len(sum_tokens):
        best = 0
        for j in positions.get(sum_tokens[i], ()):
            k = 0
            while (
                i + k < len(sum_tokens)
                and j + k < len(doc_tokens)
                and sum_tokens[i + k] == doc_tokens[j + k]
            ):
                k += 1
            if k > best:
                best = k
        if best > 0:
            fragments.append(best)
            i += best
        else:
            i += 1
    total = len(sum_tokens)
    coverage = sum(fragments) / total
    density = sum(f * f for f in fragments) / total
    return coverage, density


@dataclass(frozen=True)
class CorrelationFit:
    r: float
    p_value: float
    n: int
    slope: float
    intercept: float

    def to_dict(self) -> dict[str, float | int]:
        return {
            "r": self.r,
            "p_value": self.p_value,
            "n": self.n,
            "slope": self.slope,
            "intercept": self.intercept,
        }


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    max_iters = 300
    eps = 3e-15
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iters + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def _betai_cx(a: float, b: float, x: float, cx: float) -> float:
    """I_x(a, b) with the complement cx = 1 - x supplied exactly.

    Passing cx separately avoids the cancellation in 1 - x when x is within
    a few ulps of 1, which is exactly where the t-test needs precision.
    """
    if x <= 0.0:
        return 0.0
    if cx <= 0.0:
        return 1.0
    # trust whichever of x and 1-x is smaller; the other may have rounded
    ln_gamma = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    if x <= cx:
        ln_bt = ln_gamma + a * math.log(x) + b * math.log1p(-x)
    else:
        ln_bt = ln_gamma + a * math.log1p(-cx) + b * math.log(cx)
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, cx) / b


def _betai(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    return _betai_cx(a, b, x, 1.0 - x)


def student_t_sf2(t: float, df: int) -> float:
    """Two-tailed tail probability of Student's t with ``df`` degrees."""
    if df < 1:
        raise ValueError("df must be >= 1")
    tt = t * t
    if math.isinf(tt):
        return 0.0
    return _betai_cx(df / 2.0, 0.5, df / (df + tt), tt / (df + tt))


def pearson_fit(xs: Sequence[float], ys: Sequence[float]) -> CorrelationFit:
    """Pearson r with two-tailed t-test p-value and least-squares line."""
    if len(xs) != len(ys):
        raise LengthMismatchError(f"{len(xs)} xs vs {len(ys)} ys")
    n = len(xs)
    if n < 3:
        raise TooFewPointsError(f"need at least 3 points, got {n}")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVarianceError("constant input on one side")
    r = sxy / (math.sqrt(sxx) * math.sqrt(syy))  # separate roots: no underflow
    r = max(-1.0, min(1.0, r))
    slope = sxy / sxx
    intercept = my - slope * mx
    # 1 - r^2 as the residual fraction of variance: explicit residuals avoid
    # the cancellation of 1 - r*r when the fit is near-perfect
    sse = math.fsum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    if sse <= 0.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) * syy / sse)
        p = student_t_sf2(t, n - 2)
    return CorrelationFit(r=r, p_value=p, n=n, slope=slope, intercept=intercept)


EXTERNAL_CSV_HEADER = ("sample_id", "metric", "value")


def import_external_scores(
    path, known_sample_ids: set[str] | None = None
) -> dict[tuple[str, str], float]:
    """Read externally computed scores from a sample_id,metric,value CSV.

    Duplicate (sample, metric) rows keep the last value with a warning;
    values outside [0, 1] warn but are kept (metric ranges vary). Unknown
    sample ids are rejected with their row numbers.
    """
    out: dict[tuple[str, str], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScoreImportError("empty file") from None
        if tuple(h.strip() for h in header) != EXTERNAL_CSV_HEADER:
            raise ScoreImportError(
                f"header must be {','.join(EXTERNAL_CSV_HEADER)}, got {','.join(header)}"
            )
        unknown: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ScoreImportError(f"row {lineno}: expected 3 columns, got {len(row)}")
            sample_id, metric, raw = (cell.strip() for cell in row)
            if not sample_id or not metric:
                raise ScoreImportError(f"row {lineno}: empty sample_id or metric")
            try:
                value = float(raw)
            except ValueError:
                raise ScoreImportError(f"row {lineno}: value {raw!r} is not a number") from None
            if known_sample_ids is not None and sample_id not in known_sample_ids:
                unknown.append(lineno)
                continue
            key = (sample_id, metric)
            if key in out:
                warnings.warn(
                    f"duplicate score for {key} at row {lineno}; keeping the last value",
                    stacklevel=2,
                )
            if not 0.0 <= value <= 1.0:
                warnings.warn(
                    f"{metric} value {value} outside [0, 1] at row {lineno}; kept",
                    stacklevel=2,
                )
            out[key] = value
        if unknown:
            raise UnknownSampleError(
                "unknown sample_ids at rows: " + ", ".join(str(r) for r in unknown)
            )
    return out


@dataclass
class SampleMetrics:
    """Per-sample scores; reference-based fields are None without a reference."""

    rouge1: RougeScore | None = None
    rouge2: RougeScore | None = None
    rougeL: RougeScore | None = None
    rouge_avg: float | None = None  # mean of the three F1s, as a fraction
    compression_ratio: float = 0.0
    abstractiveness: float = 0.0
    frag_coverage: float = 0.0
    frag_density: float = 0.0
    external: dict[str, float] = field(default_factory=dict)
    geval: GEvalScores | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "rouge1": self.rouge1.to_dict() if self.rouge1 else None,
            "rouge2": self.rouge2.to_dict() if self.rouge2 else None,
            "rougeL": self.rougeL.to_dict() if self.rougeL else None,
            "rouge_avg": self.rouge_avg,
            "compression_ratio": self.compression_ratio,
            "abstractiveness": self.abstractiveness,
            "frag_coverage": self.frag_coverage,
            "frag_density": self.frag_density,
            "external": dict(self.external),
            "geval": self.geval.to_dict() if self.geval else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SampleMetrics":
        return cls(
            rouge1=RougeScore.from_dict(d["rouge1"]) if d.get("rouge1") else None,
            rouge2=RougeScore.from_dict(d["rouge2"]) if d.get("rouge2") else None,
            rougeL=RougeScore.from_dict(d["rougeL"]) if d.get("rougeL") else None,
            rouge_avg=d.get("rouge_avg"),
            compression_ratio=d.get("compression_ratio", 0.0),
            abstractiveness=d.get("abstractiveness", 0.0),
            frag_coverage=d.get("frag_coverage", 0.0),
            frag_density=d.get("frag_density", 0.0),
            external=dict(d.get("external", {})),
            geval=GEvalScores.from_dict(d["geval"]) if d.get("geval") else None,
        )


def compute_sample_metrics(document: str, reference: str, summary: str) -> SampleMetrics:
    """All lexical metrics for one generated summary."""
    coverage, density = extractive_fragments(document, summary)
    m = SampleMetrics(
        compression_ratio=compression_ratio(summary, document),
        abstractiveness=abstractiveness(summary, document),
        frag_coverage=coverage,
        frag_density=density,
    )
    if reference.strip():
        m.rouge1 = rouge_n(summary, reference, 1)
        m.rouge2 = rouge_n(summary, reference, 2)
        m.rougeL = rouge_l(summary, reference)
        m.rouge_avg = (m.rouge1.f1 + m.rouge2.f1 + m.rougeL.f1) / 3
    return m


@dataclass(frozen=True)
class MethodKey:
    """Identity of one table row: strategy, shot count, reasoning effort."""

    strategy: str
    shots: int
    reasoning_effort: str = "none"

    def label(self) -> str:
        name = self.strategy
        if self.reasoning_effort != "none":
            name += f"+{self.reasoning_effort}"
        return f"{name}/{self.shots}shot"


@dataclass
class MetricRow:
    """One scored cell of the experiment grid."""

    sample_id: str
    dataset_id: str
    strategy: str
    shots: int
    reasoning_effort: str
    metrics: SampleMetrics
    flags: tuple[str, ...] = ()

    @property
    def method(self) -> MethodKey:
        return MethodKey(self.strategy, self.shots, self.reasoning_effort)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "dataset_id": self.dataset_id,
            "strategy": self.strategy,
            "shots": self.shots,
            "reasoning_effort": self.reasoning_effort,
            "metrics": self.metrics.to_dict(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricRow":
        return cls(
            sample_id=d["sample_id"],
            dataset_id=d["dataset_id"],
            strategy=d["strategy"],
            shots=int(d["shots"]),
            reasoning_effort=d.get("reasoning_effort", "none"),
            metrics=SampleMetrics.from_dict(d["metrics"]),
            flags=tuple(d.get("flags", ())),
        )


def _flat_metrics(m: SampleMetrics) -> dict[str, float]:
    out: dict[str, float] = {
        "compression_ratio": m.compression_ratio,
        "abstractiveness": m.abstractiveness,
        "frag_coverage": m.frag_coverage,
        "frag_density": m.frag_density,
    }
    if m.rouge_avg is not None:
        out["rouge_avg"] = m.rouge_avg
    if m.geval is not None:
        out["geval_completeness"] = m.geval.completeness
        out["geval_conciseness"] = m.geval.conciseness
        out["geval_faithfulness"] = m.geval.faithfulness
    out.update(m.external)
    return out


GEVAL_DIMENSIONS = ("geval_completeness", "geval_conciseness", "geval_faithfulness")


@dataclass
class AggregateTable:
    """Unweighted per-sample means keyed by (method, scope, metric).

    Scopes are ("dataset", id), ("group", short|long|table) and ("avg", "").
    """

    methods: list[MethodKey]
    datasets: list[str]
    groups: list[str]
    metrics: list[str]
    cells: dict[tuple[MethodKey, tuple[str, str], str], float]

    def value(self, method: MethodKey, scope: tuple[str, str], metric: str) -> float | None:
        return self.cells.get((method, scope, metric))


def aggregate(rows: Iterable[MetricRow], group_of: Mapping[str, str]) -> AggregateTable:
    """Fold per-sample rows into per-dataset, per-group and overall means.

    Means are unweighted over samples. The composite geval overall score is
    the mean of the three per-dimension means.
    """
    rows = list(rows)
    if not rows:
        raise EmptyRunError("no metric rows to aggregate")
    sums: dict[tuple[MethodKey, tuple[str, str], str], list[float]] = defaultdict(list)
    methods: list[MethodKey] = []
    datasets: list[str] = []
    metric_names: list[str] = []
    groups: list[str] = []
    for row in rows:
        method = row.method
        if method not in methods:
            methods.append(method)
        if row.dataset_id not in datasets:
            datasets.append(row.dataset_id)
        group = group_of.get(row.dataset_id)
        if group and group not in groups:
            groups.append(group)
        scopes = [("dataset", row.dataset_id), ("avg", "")]
        if group:
            scopes.append(("group", group))
        for name, value in _flat_metrics(row.metrics).items():
            if name not in metric_names:
                metric_names.append(name)
            for scope in scopes:
                sums[(method, scope, name)].append(value)
    cells = {key: math.fsum(vals) / len(vals) for key, vals in sums.items()}
    # composite judge score: average the per-dimension means
    if all(any(k[2] == dim for k in cells) for dim in GEVAL_DIMENSIONS):
        scope_keys = {(m, s) for (m, s, _mn) in cells}
        for method, scope in scope_keys:
            dims = [cells.get((method, scope, d)) for d in GEVAL_DIMENSIONS]
            if all(d is not None for d in dims):
                cells[(method, scope, "geval_overall")] = math.fsum(dims) / 3
        if "geval_overall" not in metric_names:
            metric_names.append("geval_overall")
    return AggregateTable(
        methods=methods,
        datasets=datasets,
        groups=[g for g in ("short", "long", "table") if g in groups],
        metrics=metric_names,
        cells=cells,
    )
