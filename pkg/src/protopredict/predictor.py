"""Single and repeated predictions, completion parsing, and aggregation.

Parsing never throws: a completion that yields no usable number or list is
kept verbatim and flagged unparseable, so every raw answer stays auditable.
Repeated querying derives one seed per call from the run seed, which makes
a mock-backed run a pure function of (brief, task, n, seed, profile, index).
"""

from __future__ import annotations

import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

from .errors import AggregationError, ValidationError
from .gateway import (
    CompletionParams,
    DesignBrief,
    ImageAttachment,
    LlmGateway,
    PromptBundle,
    assemble_costar_prompt,
)
from .retrieval import DEFAULT_TOP_K, VectorIndex, query_top_k
from .statlab import sample_mean, sample_sd

DEFAULT_PARALLELISM_CEILING = 8

_NUMBER = r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?"

_COST_PATTERNS = [
    re.compile(rf"\$\s*({_NUMBER})"),
    re.compile(rf"\b({_NUMBER})\s*USD\b", re.IGNORECASE),
    re.compile(rf"\bUSD\s*({_NUMBER})", re.IGNORECASE),
]

_TOTAL_RE = re.compile(r"\btotal\b", re.IGNORECASE)

_ITEM_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*(.+?)\s*$")
_POSITIVE_HEADER_RE = re.compile(r"positive|strength|pros\b", re.IGNORECASE)
_ISSUE_HEADER_RE = re.compile(r"issue|negative|concern|weakness|cons\b", re.IGNORECASE)


@dataclass(frozen=True)
class PerformanceValue:
    value: float
    unit: str


@dataclass
class PredictionSample:
    """One parsed completion. raw_text is always preserved verbatim."""

    raw_text: str
    cost: float | None = None
    performance: PerformanceValue | None = None
    positives: list[str] = field(default_factory=list)
    issues: list[str] = field(default_factory=list)
    unparseable: bool = False
    meta: dict[str, Any] = field(default_factory=dict)


@dataclass
class AggregatedPrediction:
    """n samples plus their crowd summary (means over parseable samples)."""

    n: int
    samples: list[PredictionSample]
    mean_cost: float | None = None
    sd_cost: float | None = None
    mean_performance: float | None = None
    sd_performance: float | None = None
    unparseable_count: int = 0
    evidence_doc_ids: list[str] = field(default_factory=list)


def _to_float(raw: str) -> float:
    return float(raw.replace(",", ""))


def parse_cost(text: str) -> float | None:
    """First currency-tagged number in the text; 'total'-anchored if present.

    Accepts $N, N USD and USD N with thousands separators and decimals.
    Returns None when no currency-tagged number exists.
    """
    matches: list[tuple[int, float]] = []
    for pattern in _COST_PATTERNS:
        for m in pattern.finditer(text):
            matches.append((m.start(), _to_float(m.group(1))))
    if not matches:
        return None
    matches.sort(key=lambda pair: pair[0])
    total = _TOTAL_RE.search(text)
    if total is not None:
        for pos, value in matches:
            if pos >= total.end():
                return value
    return matches[0][1]


def parse_performance(text: str, expected_unit: str) -> PerformanceValue | None:
    """First number immediately adjacent to the expected unit (one optional
    space, case-insensitive). No unit conversion is ever attempted."""
    if not expected_unit:
        raise ValidationError("expected_unit must be non-empty")
    pattern = re.compile(
        rf"({_NUMBER})\s?{re.escape(expected_unit)}(?![A-Za-z0-9])",
        re.IGNORECASE,
    )
    m = pattern.search(text)
    if m is None:
        return None
    return PerformanceValue(value=_to_float(m.group(1)), unit=expected_unit)


def _collect_items(lines: list[str], start: int) -> list[str]:
    items: list[str] = []
    for line in lines[start:]:
        m = _ITEM_RE.match(line)
        if m is None:
            if items:
                break
            if line.strip() == "":
                continue
            break
        items.append(m.group(1))
    return items


def parse_usability(text: str) -> tuple[list[str], list[str], bool]:
    """Split a usability answer into (positives, issues, parseable).

    Finds the positive/issue section headers the prompt demands and takes up
    to the first three listed items from each. When neither header is found
    the answer is unparseable and both lists are empty.
    """
    lines = text.splitlines()
    pos_idx = None
    issue_idx = None
    for i, line in enumerate(lines):
        if _ITEM_RE.match(line):
            continue
        if pos_idx is None and _POSITIVE_HEADER_RE.search(line):
            pos_idx = i
        elif issue_idx is None and _ISSUE_HEADER_RE.search(line):
            issue_idx = i
    if pos_idx is None and issue_idx is None:
        return [], [], False
    positives = _collect_items(lines, pos_idx + 1)[:3] if pos_idx is not None else []
    issues = _collect_items(lines, issue_idx + 1)[:3] if issue_idx is not None else []
    return positives, issues, True


def derive_call_seed(run_seed: int, call_index: int) -> int:
    """Stable per-call seed: first 8 bytes of sha256("<seed>:<index>")."""
    digest = hashlib.sha256(f"{run_seed}:{call_index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _parse_sample(sample: PredictionSample, task: str, expected_unit: str | None) -> None:
    if task == "cost":
        sample.cost = parse_cost(sample.raw_text)
        sample.unparseable = sample.cost is None
    elif task == "performance":
        sample.performance = parse_performance(sample.raw_text, expected_unit or "")
        sample.unparseable = sample.performance is None
    elif task == "usability":
        positives, issues, parseable = parse_usability(sample.raw_text)
        sample.positives = positives
        sample.issues = issues
        sample.unparseable = not parseable
    # refine: raw text is the product; nothing to parse here.


def predict_once(
    brief: DesignBrief,
    task: str,
    gateway: LlmGateway,
    params: CompletionParams | None = None,
    index: VectorIndex | None = None,
    k: int = DEFAULT_TOP_K,
    retrieve: bool = True,
    expected_unit: str | None = None,
    image: ImageAttachment | None = None,
) -> PredictionSample:
    """Retrieve evidence, assemble the prompt, complete, and parse by task.

    Gateway failures propagate as typed errors; a parse failure is not an
    error, it is a flagged sample.
    """
    params = params or CompletionParams()
    evidence = []
    if retrieve and index is not None and len(index) > 0:
        evidence = query_top_k(index, brief.query_text(), k)
    bundle: PromptBundle = assemble_costar_prompt(
        brief,
        evidence=evidence,
        task=task,
        expected_unit=expected_unit,
        image=image,
    )
    completion = gateway.complete(bundle, params)
    sample = PredictionSample(
        raw_text=completion.text,
        meta={
            "backend_id": completion.backend_id,
            "latency_ms": completion.latency_ms,
            "seed": completion.seed,
            "evidence": [
                {
                    "doc_id": h.chunk.doc_id,
                    "seq": h.chunk.seq,
                    "score": h.score,
                    "text": h.chunk.text,
                }
                for h in evidence
            ],
        },
    )
    _parse_sample(sample, task, expected_unit)
    return sample


def summarize_samples(samples: list[PredictionSample], task: str) -> AggregatedPrediction:
    """Aggregate parsed samples into the crowd-emulation estimate.

    Samples are ordered by call index first so aggregation is invariant to
    arrival order; means/SDs cover parseable samples only.
    """
    ordered = sorted(
        enumerate(samples), key=lambda pair: (pair[1].meta.get("call_index", pair[0]))
    )
    samples = [s for _, s in ordered]
    if not samples:
        raise AggregationError("cannot aggregate zero samples")
    agg = AggregatedPrediction(n=len(samples), samples=samples)
    agg.unparseable_count = sum(1 for s in samples if s.unparseable)
    if agg.unparseable_count == agg.n and task in ("cost", "performance", "usability"):
        raise AggregationError("no parseable samples")
    if task == "cost":
        values = [s.cost for s in samples if s.cost is not None]
        agg.mean_cost = sample_mean(values)
        agg.sd_cost = sample_sd(values) if len(values) >= 2 else None
    elif task == "performance":
        values = [s.performance.value for s in samples if s.performance is not None]
        agg.mean_performance = sample_mean(values)
        agg.sd_performance = sample_sd(values) if len(values) >= 2 else None
    seen: set[str] = set()
    for s in samples:
        for ev in s.meta.get("evidence", []):
            if ev["doc_id"] not in seen:
                seen.add(ev["doc_id"])
                agg.evidence_doc_ids.append(ev["doc_id"])
    return agg


def predict_many(
    brief: DesignBrief,
    task: str,
    n: int,
    seed: int,
    gateway: LlmGateway,
    parallelism: int = 1,
    index: VectorIndex | None = None,
    k: int = DEFAULT_TOP_K,
    retrieve: bool = True,
    expected_unit: str | None = None,
    image: ImageAttachment | None = None,
    temperature: float = 1.0,
    backend: str = "mock",
    max_output_units: int = 512,
) -> AggregatedPrediction:
    """Run n independent predictions and aggregate them.

    Per-call seeds come from derive_call_seed(seed, i); up to `parallelism`
    calls run concurrently and results are joined in call order.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n!r}")
    if parallelism < 1:
        raise ValidationError(f"parallelism must be >= 1, got {parallelism!r}")

    def run_one(i: int) -> PredictionSample:
        params = CompletionParams(
            temperature=temperature,
            seed=derive_call_seed(seed, i),
            max_output_units=max_output_units,
            backend=backend,
        )
        sample = predict_once(
            brief,
            task,
            gateway,
            params=params,
            index=index,
            k=k,
            retrieve=retrieve,
            expected_unit=expected_unit,
            image=image,
        )
        sample.meta["call_index"] = i
        return sample

    if parallelism == 1:
        samples = [run_one(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            samples = list(pool.map(run_one, range(n)))
    return summarize_samples(samples, task)


IMPROVEMENT_RANGE_RE = re.compile(
    rf"({_NUMBER})\s*(?:-|–|to)\s*({_NUMBER})\s*%"
)


def parse_improvement_ranges(text: str) -> list[str]:
    """Percent ranges like '10-15%' mentioned in a refinement suggestion."""
    return [f"{m.group(1)}-{m.group(2)}%" for m in IMPROVEMENT_RANGE_RE.finditer(text)]
