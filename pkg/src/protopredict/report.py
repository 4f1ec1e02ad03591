"""Benchmark orchestration and report emission.

run_benchmark drives the full three-group comparison (plain model, model
with retrieval, recorded humans) over the benchmark cases for the cost and
performance tasks plus the usability keyword pipeline, then freezes every
raw sample, error list and statistic into a BenchmarkReport. Emitters turn
the report into the accuracy table, the ANOVA table and the six figure data
files; every emitted value is recomputable from the report's raw samples.

Serialized reports carry no wall-clock timestamps, so a mock-backed run is
byte-reproducible from (cases, sources, n, seed).

Conventions the tables use (the source publications leave these open, so
they are pinned here and documented in docs/formats.md):
  - single-query cell: statistic over every per-sample signed error, pooled
    across cases; per-case accuracy uses the per-case RMSE.
  - multiple-query cell: statistic over the 12 per-case crowd representatives
    (group_point_error); SD uses the per-case signed mean errors.
  - ANOVA observations are absolute errors (per sample for single, per case
    for multiple), three groups per test.
"""

from __future__ import annotations

import csv
import io
import json
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import usability as nlp
from .corpus import DesignCase, ProjectRecord, load_bundled_corpus, render_index_document
from .errors import (
    AggregationError,
    DegenerateStatisticsError,
    ParseError,
    ValidationError,
)
from .gateway import DesignBrief, LlmGateway, MockProfile, TaskTarget
from .predictor import (
    PredictionSample,
    PerformanceValue,
    parse_cost,
    parse_performance,
    parse_usability,
    predict_many,
)
from .retrieval import HashEmbedder, VectorIndex, index_corpus
from .statlab import (
    AnovaResult,
    TTestResult,
    accuracy_count,
    approximation_error,
    group_point_error,
    one_way_anova,
    rmse_percent,
    round_half_up,
    sample_mean,
    sample_sd,
    welch_t_test,
    within_band,
)

REPORT_SCHEMA = "protopredict/report-v1"
SOURCES_SCHEMA = "protopredict/sources-v1"

GROUPS = ("gpt", "gpt_rag", "human")
METRICS = ("cost", "performance")
MODES = ("single", "multiple")

GROUP_LABELS = {"gpt": "GPT", "gpt_rag": "GPT-RAG", "human": "Human"}

FIGURES = (
    "err_cost",
    "err_perf",
    "rmse_cost",
    "rmse_perf",
    "usability_hist",
    "summary_bars",
)

RECORD_HEADER = [
    "group",
    "case_id",
    "respondent_or_seed",
    "task",
    "raw_text",
    "parsed_value",
    "unit",
]

# Generic negatives mixed into mock usability pools next to the per-case
# ground-truth keywords, so flagged similarities spread below 100.
DEFAULT_DISTRACTORS = ("fragile", "noisy", "bulky", "slow", "costly", "complex")

DEFAULT_REFINE_TEXT = (
    "Add a short row of internal guide vanes near the outlet to straighten "
    "the flow. An airflow improvement of 10-15% can be expected."
)


@dataclass(frozen=True)
class GroupSource:
    """Where one group's predictions come from.

    Live sources query a backend per case (mock backends synthesize around
    the ground truth with the configured noise); recorded sources replay a
    prediction-record file. The human group is always recorded.
    """

    group: str
    mode: str
    backend: str = "mock"
    retrieval: bool = False
    noise_sd: float | None = None
    path: str | None = None

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValidationError(f"unknown group {self.group!r}, expected one of {GROUPS}")
        if self.mode not in ("live", "recorded"):
            raise ValidationError(f"mode must be 'live' or 'recorded', got {self.mode!r}")
        if self.group == "human" and self.mode != "recorded":
            raise ValidationError("the human group is always recorded, never live")
        if self.mode == "recorded" and not self.path:
            raise ValidationError(f"recorded source for {self.group!r} needs a path")
        if self.mode == "live" and self.backend == "mock" and self.noise_sd is None:
            raise ValidationError(f"live mock source for {self.group!r} needs noise_sd")

    @classmethod
    def from_dict(cls, raw: dict) -> "GroupSource":
        return cls(
            group=str(raw["group"]),
            mode=str(raw["mode"]),
            backend=str(raw.get("backend", "mock")),
            retrieval=bool(raw.get("retrieval", raw.get("group") == "gpt_rag")),
            noise_sd=float(raw["noise_sd"]) if raw.get("noise_sd") is not None else None,
            path=str(raw["path"]) if raw.get("path") is not None else None,
        )


def load_sources(path: str | Path) -> list[GroupSource]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != SOURCES_SCHEMA:
        raise ParseError(f"expected schema {SOURCES_SCHEMA!r}, found {doc.get('schema')!r}")
    base = Path(path).parent
    sources = []
    for raw in doc.get("sources", []):
        src = GroupSource.from_dict(raw)
        if src.path is not None and not Path(src.path).is_absolute():
            src = GroupSource(
                group=src.group,
                mode=src.mode,
                backend=src.backend,
                retrieval=src.retrieval,
                noise_sd=src.noise_sd,
                path=str(base / src.path),
            )
        sources.append(src)
    return sources


# --- recorded prediction files -------------------------------------------------


@dataclass(frozen=True)
class RecordedRow:
    group: str
    case_id: int
    respondent: str
    task: str
    raw_text: str
    parsed_value: float | None
    unit: str


def load_prediction_records(path: str | Path) -> list[RecordedRow]:
    """Read a prediction-record file (see docs/formats.md for the format)."""
    rows: list[RecordedRow] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != RECORD_HEADER:
            raise ParseError(
                f"prediction-record header must be {RECORD_HEADER}, found {reader.fieldnames}"
            )
        for lineno, raw in enumerate(reader, start=2):
            try:
                parsed = raw["parsed_value"].strip()
                rows.append(
                    RecordedRow(
                        group=raw["group"].strip(),
                        case_id=int(raw["case_id"]),
                        respondent=raw["respondent_or_seed"].strip(),
                        task=raw["task"].strip(),
                        raw_text=raw["raw_text"],
                        parsed_value=float(parsed) if parsed else None,
                        unit=raw["unit"].strip(),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad prediction record: {exc}", locus=f"line {lineno}") from exc
    return rows


def write_prediction_records(rows: Iterable[RecordedRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(RECORD_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.group,
                    r.case_id,
                    r.respondent,
                    r.task,
                    r.raw_text,
                    "" if r.parsed_value is None else repr(r.parsed_value),
                    r.unit,
                ]
            )


def _recorded_to_samples(
    rows: list[RecordedRow], case: DesignCase, task: str
) -> list[PredictionSample]:
    samples = []
    for i, row in enumerate(rows):
        sample = PredictionSample(raw_text=row.raw_text, meta={"call_index": i, "respondent": row.respondent})
        if task == "cost":
            sample.cost = row.parsed_value if row.parsed_value is not None else parse_cost(row.raw_text)
            sample.unparseable = sample.cost is None
        elif task == "performance":
            if row.parsed_value is not None:
                sample.performance = PerformanceValue(
                    value=row.parsed_value, unit=row.unit or case.ground_truth_performance.unit
                )
            else:
                sample.performance = parse_performance(
                    row.raw_text, case.ground_truth_performance.unit
                )
            sample.unparseable = sample.performance is None
        elif task == "usability":
            positives, issues, parseable = parse_usability(row.raw_text)
            sample.positives = positives
            sample.issues = issues
            sample.unparseable = not parseable
        samples.append(sample)
    return samples


# --- per-(group, case) statistics ---------------------------------------------


@dataclass
class GroupCaseStats:
    """Single- and multiple-query statistics for one group on one case."""

    rmse_single_pct: float
    mae_multi_pct: float
    mean_error_pct: float
    sd_pct: float | None
    within_band_single: bool
    within_band_multi: bool
    n: int

    def to_dict(self) -> dict:
        return {
            "rmse_single_pct": self.rmse_single_pct,
            "mae_multi_pct": self.mae_multi_pct,
            "mean_error_pct": self.mean_error_pct,
            "sd_pct": self.sd_pct,
            "within_band_single": self.within_band_single,
            "within_band_multi": self.within_band_multi,
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "GroupCaseStats":
        return cls(**raw)


def _case_stats(values: list[float], truth: float, band_pct: float) -> GroupCaseStats:
    errors = [approximation_error(v, truth) for v in values]
    rmse = rmse_percent(errors)
    mae = group_point_error(values, truth)
    return GroupCaseStats(
        rmse_single_pct=rmse,
        mae_multi_pct=mae,
        mean_error_pct=sample_mean(errors),
        sd_pct=sample_sd(errors) if len(errors) >= 2 else None,
        within_band_single=within_band(rmse, band_pct),
        within_band_multi=within_band(mae, band_pct),
        n=len(values),
    )


# --- the report ------------------------------------------------------------------


@dataclass
class BenchmarkReport:
    """Everything a benchmark run produced, keyed by group/case/task."""

    manifest: dict[str, Any]
    samples: dict[str, dict[str, dict[str, list[dict]]]] = field(default_factory=dict)
    errors: dict[str, dict[str, dict[str, list[float]]]] = field(default_factory=dict)
    stats: dict[str, dict[str, dict[str, dict]]] = field(default_factory=dict)
    anova: dict[str, dict[str, dict]] = field(default_factory=dict)
    usability: dict[str, Any] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    skipped: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "schema": REPORT_SCHEMA,
            "manifest": self.manifest,
            "samples": self.samples,
            "errors": self.errors,
            "stats": self.stats,
            "anova": self.anova,
            "usability": self.usability,
            "summary": self.summary,
            "skipped": self.skipped,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkReport":
        doc = json.loads(text)
        if doc.get("schema") != REPORT_SCHEMA:
            raise ParseError(f"expected schema {REPORT_SCHEMA!r}, found {doc.get('schema')!r}")
        return cls(
            manifest=doc.get("manifest", {}),
            samples=doc.get("samples", {}),
            errors=doc.get("errors", {}),
            stats=doc.get("stats", {}),
            anova=doc.get("anova", {}),
            usability=doc.get("usability", {}),
            summary=doc.get("summary", {}),
            skipped=doc.get("skipped", []),
        )

    @classmethod
    def load(cls, path: str | Path) -> "BenchmarkReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    @property
    def groups(self) -> list[str]:
        return list(self.manifest.get("groups", []))

    @property
    def case_ids(self) -> list[int]:
        return [int(c) for c in self.manifest.get("cases", [])]

    def run_id(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:12]


def _brief_for(case: DesignCase) -> DesignBrief:
    ctx = case.refined_context
    return DesignBrief(
        problem=ctx.problem,
        design_solution=ctx.design_solution,
        key_functions=ctx.key_functions,
        dimensions_and_weight=ctx.dimensions_and_weight,
        image_ref=case.image_ref,
    )


def _group_seed(run_seed: int, group: str, case_id: int, task: str) -> int:
    digest = hashlib.sha256(f"{run_seed}|{group}|{case_id}|{task}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _sample_to_dict(sample: PredictionSample) -> dict:
    out: dict[str, Any] = {"raw_text": sample.raw_text, "unparseable": sample.unparseable}
    if sample.cost is not None:
        out["cost"] = sample.cost
    if sample.performance is not None:
        out["performance"] = {"value": sample.performance.value, "unit": sample.performance.unit}
    if sample.positives or sample.issues:
        out["positives"] = sample.positives
        out["issues"] = sample.issues
    if "respondent" in sample.meta:
        out["respondent"] = sample.meta["respondent"]
    return out


def run_benchmark(
    cases: Sequence[DesignCase],
    sources: Sequence[GroupSource],
    n: int,
    seed: int,
    index: VectorIndex | None = None,
    corpus_records: Sequence[ProjectRecord] | None = None,
    k: int = 5,
    band_pct: float = 50.0,
    parallelism: int = 1,
    include_usability: bool = True,
    distractors: Sequence[str] = DEFAULT_DISTRACTORS,
) -> BenchmarkReport:
    """Collect n samples per (group, case, task) and compute every statistic.

    Live mock sources synthesize predictions around each case's ground truth
    at the source's noise level; recorded sources replay their file and must
    cover every case for cost and performance. Deterministic for fixed seed.
    """
    if not cases:
        raise ValidationError("run_benchmark needs at least one case")
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n!r}")
    groups_seen = [s.group for s in sources]
    if len(set(groups_seen)) != len(groups_seen):
        raise ValidationError("each group may appear in sources only once")

    if index is None and any(s.retrieval for s in sources):
        records = list(corpus_records) if corpus_records is not None else load_bundled_corpus()
        index = index_corpus(
            {r.id: render_index_document(r) for r in records},
            embedder=HashEmbedder(dim=64, seed=0),
        )

    report = BenchmarkReport(
        manifest={
            "schema_version": 1,
            "seed": seed,
            "n": n,
            "k": k,
            "band_pct": band_pct,
            "groups": [s.group for s in sources],
            "cases": [c.case_id for c in cases],
            "backends": {
                s.group: (s.backend if s.mode == "live" else "recorded") for s in sources
            },
            "retrieval": {s.group: s.retrieval for s in sources},
        }
    )

    collected: dict[tuple[str, int, str], list[PredictionSample]] = {}
    for source in sources:
        recorded = load_prediction_records(source.path) if source.mode == "recorded" else None
        for case in cases:
            tasks = list(METRICS) + (["usability"] if include_usability else [])
            for task in tasks:
                if source.mode == "recorded":
                    rows = [
                        r
                        for r in recorded
                        if r.group == source.group and r.case_id == case.case_id and r.task == task
                    ]
                    if not rows:
                        if task == "usability":
                            continue
                        raise ValidationError(
                            f"recorded file for group {source.group!r} is missing "
                            f"case {case.case_id} task {task!r}"
                        )
                    samples = _recorded_to_samples(rows, case, task)
                else:
                    profile = MockProfile(
                        cost=TaskTarget(float(case.ground_truth_cost), source.noise_sd or 0.0),
                        performance=TaskTarget(
                            case.ground_truth_performance.value, source.noise_sd or 0.0
                        ),
                        usability_pool=tuple(case.ground_truth_keywords) + tuple(distractors),
                        refine_text=DEFAULT_REFINE_TEXT,
                    )
                    gw = LlmGateway(profile=profile)
                    try:
                        agg = predict_many(
                            _brief_for(case),
                            task,
                            n,
                            seed=_group_seed(seed, source.group, case.case_id, task),
                            gateway=gw,
                            parallelism=parallelism,
                            index=index if source.retrieval else None,
                            k=k,
                            retrieve=source.retrieval,
                            expected_unit=(
                                case.ground_truth_performance.unit
                                if task == "performance"
                                else None
                            ),
                            backend=source.backend,
                        )
                    except AggregationError as exc:
                        report.skipped.append(
                            {
                                "group": source.group,
                                "case_id": case.case_id,
                                "task": task,
                                "reason": str(exc),
                            }
                        )
                        continue
                    samples = agg.samples
                collected[(source.group, case.case_id, task)] = samples
                report.samples.setdefault(source.group, {}).setdefault(
                    str(case.case_id), {}
                )[task] = [_sample_to_dict(s) for s in samples]

    truths = {c.case_id: c for c in cases}
    for (group, case_id, task), samples in sorted(collected.items()):
        if task == "usability":
            continue
        case = truths[case_id]
        truth = (
            float(case.ground_truth_cost)
            if task == "cost"
            else case.ground_truth_performance.value
        )
        if task == "cost":
            values = [s.cost for s in samples if s.cost is not None]
        else:
            values = [s.performance.value for s in samples if s.performance is not None]
        if not values:
            report.skipped.append(
                {
                    "group": group,
                    "case_id": case_id,
                    "task": task,
                    "reason": "no parseable samples",
                }
            )
            continue
        errors = [approximation_error(v, truth) for v in values]
        report.errors.setdefault(group, {}).setdefault(str(case_id), {})[task] = errors
        report.stats.setdefault(group, {}).setdefault(str(case_id), {})[task] = _case_stats(
            values, truth, band_pct
        ).to_dict()

    _compute_anova(report)
    if include_usability:
        _compute_usability(report, collected, truths)
    _compute_summary(report)
    return report


def _compute_anova(report: BenchmarkReport) -> None:
    for metric in METRICS:
        report.anova[metric] = {}
        for mode in MODES:
            observations: list[list[float]] = []
            for group in report.groups:
                group_obs: list[float] = []
                for case_id in report.case_ids:
                    case_errors = (
                        report.errors.get(group, {}).get(str(case_id), {}).get(metric)
                    )
                    stats = report.stats.get(group, {}).get(str(case_id), {}).get(metric)
                    if case_errors is None or stats is None:
                        continue
                    if mode == "single":
                        group_obs.extend(abs(e) for e in case_errors)
                    else:
                        group_obs.append(stats["mae_multi_pct"])
                if len(group_obs) >= 2:
                    observations.append(group_obs)
            if len(observations) < 2:
                report.anova[metric][mode] = {"degenerate": "fewer than two groups with data"}
                continue
            try:
                result = one_way_anova(observations)
            except (DegenerateStatisticsError, ValidationError) as exc:
                report.anova[metric][mode] = {"degenerate": str(exc)}
                continue
            report.anova[metric][mode] = {
                "f_stat": result.f_stat,
                "df_between": result.df_between,
                "df_within": result.df_within,
                "p_value": result.p_value,
            }


def _ai_usability_group(groups: Iterable[str]) -> str | None:
    groups = list(groups)
    if "gpt_rag" in groups:
        return "gpt_rag"
    if "gpt" in groups:
        return "gpt"
    return None


def _compute_usability(
    report: BenchmarkReport,
    collected: dict[tuple[str, int, str], list[PredictionSample]],
    truths: dict[int, DesignCase],
) -> None:
    stopwords = nlp.load_default_stopwords()
    lemma_lexicon = nlp.load_default_lemma_lexicon()
    vectors = nlp.load_default_word_vectors()
    groups_out: dict[str, Any] = {}
    flagged_by_group: dict[str, list[nlp.KeywordMatch]] = {}
    for group in report.groups:
        per_case: dict[str, list[dict]] = {}
        flagged: list[nlp.KeywordMatch] = []
        for case_id, case in truths.items():
            samples = collected.get((group, case_id, "usability"))
            if not samples or not case.ground_truth_keywords:
                continue
            texts = [t for s in samples for t in (*s.positives, *s.issues)]
            freq = nlp.lemma_frequencies(texts, stopwords, lemma_lexicon)
            if not freq:
                continue
            truth_lemmas = [
                nlp.lemmatize(k.lower(), lemma_lexicon) for k in case.ground_truth_keywords
            ]
            matches = nlp.match_keywords(freq, truth_lemmas, vectors)
            per_case[str(case_id)] = [
                {
                    "predicted_lemma": m.predicted_lemma,
                    "best_truth_lemma": m.best_truth_lemma,
                    "similarity": m.similarity,
                    "frequency": m.frequency,
                    "representative": m.representative,
                }
                for m in matches
            ]
            flagged.extend(m for m in matches if m.representative)
        if not per_case:
            continue
        histogram = nlp.similarity_distribution(flagged)
        groups_out[group] = {
            "per_case": per_case,
            "histogram": [[lo, count] for lo, count in histogram],
            "overall": nlp.overall_similarity(flagged),
        }
        flagged_by_group[group] = flagged
    report.usability = {"groups": groups_out}
    ai_group = _ai_usability_group(groups_out)
    report.usability["ai_group"] = ai_group
    ttest: dict[str, Any] | None = None
    if ai_group and "human" in groups_out:
        human_obs = [
            m.similarity for m in flagged_by_group["human"] for _ in range(m.frequency)
        ]
        ai_obs = [
            m.similarity for m in flagged_by_group[ai_group] for _ in range(m.frequency)
        ]
        try:
            result: TTestResult = welch_t_test(human_obs, ai_obs)
            ttest = {
                "t_stat": result.t_stat,
                "df": result.df,
                "p_value_two_sided": result.p_value_two_sided,
            }
        except (DegenerateStatisticsError, ValidationError) as exc:
            ttest = {"degenerate": str(exc)}
    report.usability["ttest"] = ttest


def _compute_summary(report: BenchmarkReport) -> None:
    accuracy: dict[str, dict[str, dict[str, dict[str, int]]]] = {}
    for metric in METRICS:
        accuracy[metric] = {}
        for group in report.groups:
            flags_single: list[bool] = []
            flags_multi: list[bool] = []
            for case_id in report.case_ids:
                stats = report.stats.get(group, {}).get(str(case_id), {}).get(metric)
                if stats is None:
                    continue
                flags_single.append(bool(stats["within_band_single"]))
                flags_multi.append(bool(stats["within_band_multi"]))
            if not flags_single:
                continue
            single = accuracy_count(flags_single)
            multi = accuracy_count(flags_multi)
            accuracy[metric][group] = {
                "single": {"hits": single.hits, "total": single.total},
                "multi": {"hits": multi.hits, "total": multi.total},
            }
    report.summary["accuracy"] = accuracy
    usability_groups = report.usability.get("groups", {})
    ai_group = report.usability.get("ai_group")
    overall: dict[str, float] = {}
    if ai_group and ai_group in usability_groups:
        overall["ai"] = usability_groups[ai_group]["overall"]
    if "human" in usability_groups:
        overall["human"] = usability_groups["human"]["overall"]
    report.summary["usability_overall"] = overall


# --- emitters --------------------------------------------------------------------


def _format_pct_cell(value: float) -> str:
    return f"{round_half_up(value)}%"


def _collect_pooled_errors(report: BenchmarkReport, group: str, metric: str) -> list[float]:
    pooled: list[float] = []
    for case_id in report.case_ids:
        errs = report.errors.get(group, {}).get(str(case_id), {}).get(metric)
        if errs:
            pooled.extend(errs)
    return pooled


def _collect_case_stats(report: BenchmarkReport, group: str, metric: str) -> list[dict]:
    out = []
    for case_id in report.case_ids:
        stats = report.stats.get(group, {}).get(str(case_id), {}).get(metric)
        if stats is not None:
            out.append(stats)
    return out


def _accuracy_from_counts(hits: int, total: int):
    """Rebuild an AccuracyCount from its stored (hits, total) pair."""
    return accuracy_count([True] * hits + [False] * (total - hits))


def _accuracy_cell(report: BenchmarkReport, group: str, metric: str, mode: str) -> str:
    entry = report.summary.get("accuracy", {}).get(metric, {}).get(group)
    if entry is None:
        raise ValidationError(f"report has no accuracy data for {group}/{metric}")
    bucket = entry["single"] if mode == "single" else entry["multi"]
    return str(_accuracy_from_counts(bucket["hits"], bucket["total"]))


def emit_accuracy_table(report: BenchmarkReport) -> str:
    """The 6x6 accuracy/precision table as CSV text."""
    for group in GROUPS:
        if group not in report.groups:
            raise ValidationError(f"report is incomplete: group {group!r} missing")
    columns = [
        ("gpt", "single"),
        ("gpt", "multiple"),
        ("gpt_rag", "single"),
        ("gpt_rag", "multiple"),
        ("human", "single"),
        ("human", "multiple"),
    ]
    header = [
        "Accuracy Metrics",
        "GPT Single Query",
        "GPT Multiple Query",
        "GPT-RAG Single Query",
        "GPT-RAG Multiple Query",
        "Human Individual",
        "Human Group",
    ]
    rows: list[list[str]] = []
    for metric, label in (("cost", "Cost"), ("performance", "Performance")):
        rmse_cells: list[str] = []
        acc_cells: list[str] = []
        sd_cells: list[str] = []
        for group, mode in columns:
            pooled = _collect_pooled_errors(report, group, metric)
            case_stats = _collect_case_stats(report, group, metric)
            if not pooled or not case_stats:
                raise ValidationError(f"report is incomplete for {group}/{metric}")
            if mode == "single":
                rmse_cells.append(_format_pct_cell(rmse_percent(pooled)))
                sd_cells.append(
                    _format_pct_cell(sample_sd(pooled)) if len(pooled) >= 2 else "n/a"
                )
            else:
                mae_series = [s["mae_multi_pct"] for s in case_stats]
                mean_series = [s["mean_error_pct"] for s in case_stats]
                rmse_cells.append(_format_pct_cell(rmse_percent(mae_series)))
                sd_cells.append(
                    _format_pct_cell(sample_sd(mean_series)) if len(mean_series) >= 2 else "n/a"
                )
            acc_cells.append(_accuracy_cell(report, group, metric, mode))
        rows.append([f"{label} - RMSE", *rmse_cells])
        rows.append([f"{label} - Average Accuracy", *acc_cells])
        rows.append([f"{label} S.D.", *sd_cells])
    return _to_csv([header, *rows])


def format_p_value(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def emit_anova_table(report: BenchmarkReport) -> str:
    """Four ANOVA rows (metric x query mode) with p-values and verdicts."""
    header = ["Metric", "Query Type", "p-value", "Significant (p < 0.05)"]
    rows = [header]
    for metric, label in (("cost", "Cost"), ("performance", "Performance")):
        for mode, mode_label in (("single", "Single"), ("multiple", "Multiple")):
            entry = report.anova.get(metric, {}).get(mode)
            if entry is None:
                raise ValidationError(f"report has no ANOVA result for {metric}/{mode}")
            if "degenerate" in entry:
                rows.append([label, mode_label, "degenerate", "-"])
                continue
            p = float(entry["p_value"])
            rows.append([label, mode_label, format_p_value(p), "Yes" if p < 0.05 else "No"])
    return _to_csv(rows)


def emit_figure_data(report: BenchmarkReport, figure: str) -> list[list[Any]]:
    """Delimited rows for one figure; see FIGURES for the valid ids."""
    if figure not in FIGURES:
        raise ValidationError(f"unknown figure {figure!r}, expected one of {FIGURES}")
    if figure in ("err_cost", "err_perf"):
        metric = "cost" if figure == "err_cost" else "performance"
        rows: list[list[Any]] = [["group", "case_id", "sample_index", "signed_error_pct"]]
        for group in report.groups:
            for case_id in report.case_ids:
                errs = report.errors.get(group, {}).get(str(case_id), {}).get(metric)
                if errs is None:
                    continue
                for i, e in enumerate(errs):
                    rows.append([group, case_id, i, e])
        if len(rows) == 1:
            raise ValidationError(f"report has no error data for figure {figure!r}")
        return rows
    if figure in ("rmse_cost", "rmse_perf"):
        metric = "cost" if figure == "rmse_cost" else "performance"
        rows = [["group", "case_id", "rmse_pct"]]
        for group in report.groups:
            for case_id in report.case_ids:
                stats = report.stats.get(group, {}).get(str(case_id), {}).get(metric)
                if stats is None:
                    continue
                rows.append([group, case_id, stats["rmse_single_pct"]])
        if len(rows) == 1:
            raise ValidationError(f"report has no stats for figure {figure!r}")
        return rows
    if figure == "usability_hist":
        groups = report.usability.get("groups", {})
        if not groups:
            raise ValidationError("report has no usability section")
        rows = [["group", "bin_lower", "frequency"]]
        for group in sorted(groups):
            for lo, count in groups[group]["histogram"]:
                rows.append([group, lo, count])
        return rows
    # summary_bars
    accuracy = report.summary.get("accuracy", {})
    usability_overall = report.summary.get("usability_overall", {})
    if not accuracy or not usability_overall:
        raise ValidationError("report summary is incomplete for summary_bars")
    rows = [["metric", "gpt_or_ai", "human"]]

    def _multi_pct(metric: str, group: str) -> int:
        entry = accuracy.get(metric, {}).get(group)
        if entry is None:
            raise ValidationError(f"summary lacks accuracy for {group}/{metric}")
        bucket = entry["multi"]
        return _accuracy_from_counts(bucket["hits"], bucket["total"]).percent

    for metric in METRICS:
        metric_groups = accuracy.get(metric, {})
        # Table-4 convention: the AI column is the plain model's multi-query
        # accuracy when present, the retrieval model's otherwise.
        ai_group = "gpt" if "gpt" in metric_groups else _ai_usability_group(metric_groups)
        if ai_group is None or "human" not in metric_groups:
            raise ValidationError(f"summary lacks accuracy groups for {metric}")
        rows.append([metric, _multi_pct(metric, ai_group), _multi_pct(metric, "human")])
    if "ai" not in usability_overall or "human" not in usability_overall:
        raise ValidationError("summary lacks usability overall scores")
    rows.append(
        [
            "usability",
            round_half_up(float(usability_overall["ai"])),
            round_half_up(float(usability_overall["human"])),
        ]
    )
    return rows


def _to_csv(rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def figure_csv(report: BenchmarkReport, figure: str) -> str:
    return _to_csv(emit_figure_data(report, figure))


FIGURE_FILENAMES = {
    "err_cost": "fig_err_cost.csv",
    "err_perf": "fig_err_perf.csv",
    "rmse_cost": "fig_rmse_cost.csv",
    "rmse_perf": "fig_rmse_perf.csv",
    "usability_hist": "fig_usability_hist.csv",
    "summary_bars": "fig_summary_bars.csv",
}


def write_report_files(report: BenchmarkReport, out_dir: str | Path) -> list[Path]:
    """Write report.json, both tables and all six figure files; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def _write(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    _write("report.json", report.to_json())
    _write("accuracy_table.csv", emit_accuracy_table(report))
    _write("anova_table.csv", emit_anova_table(report))
    for figure, filename in FIGURE_FILENAMES.items():
        _write(filename, figure_csv(report, figure))
    return written
