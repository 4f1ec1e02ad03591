"""Design-repository records and the ground-truth benchmark set.

Two file formats live here. A corpus file holds exported prior-prototype
records (the knowledge the retrieval index is built from); a benchmark file
holds design cases with refined context and the ground-truth cost,
performance and usability keywords the harness scores against. Both are
JSON under a schema tag; see docs/formats.md for worked examples.

Money is handled as Decimal and quantized to whole cents half-up at
presentation points, so BOM sums never pick up float drift.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation, ROUND_HALF_UP
from importlib import resources
from pathlib import Path
from typing import IO, Any, Union

from .errors import ParseError, ValidationError

CORPUS_SCHEMA = "protopredict/corpus-v1"
BENCH_SCHEMA = "protopredict/bench-v1"

CATEGORIES = ("circuits", "workshop", "craft", "other")

_CENT = Decimal("0.01")

Source = Union[str, bytes, Path, IO[str], IO[bytes]]


def _as_money(value: Any, what: str) -> Decimal:
    try:
        money = Decimal(str(value))
    except (InvalidOperation, TypeError) as exc:
        raise ValidationError(f"{what} is not a number: {value!r}") from exc
    if not money.is_finite():
        raise ValidationError(f"{what} must be finite, got {value!r}")
    return money


def money_to_cents(value: Decimal) -> Decimal:
    """Quantize to whole cents, rounding half-up."""
    return value.quantize(_CENT, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class BomLine:
    """One bill-of-materials line: an item, how much of it, and unit cost."""

    item: str
    quantity: float
    unit_cost: Decimal

    def validate(self) -> None:
        if not self.item:
            raise ValidationError("BOM line has an empty item name")
        if not (isinstance(self.quantity, (int, float)) and math.isfinite(self.quantity)):
            raise ValidationError(f"quantity must be a finite number, got {self.quantity!r}")
        if self.quantity <= 0:
            raise ValidationError(f"quantity must be > 0, got {self.quantity!r}")
        if self.unit_cost < 0:
            raise ValidationError(f"unit_cost must be >= 0, got {self.unit_cost}")

    @property
    def line_cost(self) -> Decimal:
        return Decimal(str(self.quantity)) * self.unit_cost


@dataclass(frozen=True)
class PerformanceNote:
    """A measured or expected quantity with its free-form unit."""

    metric_name: str
    value: float
    unit: str

    def validate(self) -> None:
        if not math.isfinite(self.value):
            raise ValidationError(f"performance value must be finite, got {self.value!r}")
        if not self.unit:
            raise ValidationError("performance unit must be non-empty")


@dataclass
class ProjectRecord:
    """One design-repository document: BOM, performance, feedback, steps."""

    id: str
    title: str
    category: str
    description: str = ""
    bom: list[BomLine] = field(default_factory=list)
    performance_notes: list[PerformanceNote] = field(default_factory=list)
    feedback: list[str] = field(default_factory=list)
    steps: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("record id must be non-empty")
        if self.category not in CATEGORIES:
            raise ValidationError(
                f"record {self.id!r}: category {self.category!r} not in {CATEGORIES}"
            )
        for line in self.bom:
            try:
                line.validate()
            except ValidationError as exc:
                raise ValidationError(f"record {self.id!r}: {exc}") from exc
        for note in self.performance_notes:
            try:
                note.validate()
            except ValidationError as exc:
                raise ValidationError(f"record {self.id!r}: {exc}") from exc


@dataclass(frozen=True)
class RefinedContext:
    """The decomposed 'context' of a brief: problem, solution, key functions."""

    problem: str
    design_solution: str
    key_functions: tuple[str, str, str]
    dimensions_and_weight: str | None = None

    def validate(self) -> None:
        if not self.problem or not self.design_solution:
            raise ValidationError("problem and design_solution must be non-empty")
        if len(self.key_functions) != 3 or not all(self.key_functions):
            raise ValidationError(
                f"exactly 3 non-empty key functions required, got {list(self.key_functions)!r}"
            )


@dataclass
class DesignCase:
    """One benchmark entry: refined context plus its ground truths."""

    case_id: int
    refined_context: RefinedContext
    ground_truth_cost: Decimal
    ground_truth_performance: PerformanceNote
    ground_truth_keywords: list[str] = field(default_factory=list)
    image_ref: str | None = None

    def validate(self) -> None:
        if self.case_id <= 0:
            raise ValidationError(f"case_id must be positive, got {self.case_id!r}")
        self.refined_context.validate()
        if self.ground_truth_cost <= 0:
            raise ValidationError(
                f"case {self.case_id}: ground_truth_cost must be > 0, got {self.ground_truth_cost}"
            )
        self.ground_truth_performance.validate()


# --- parsing ---------------------------------------------------------------


def _read_source(source: Source) -> str:
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8")
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _load_json(source: Source, expected_schema: str) -> dict:
    text = _read_source(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", locus=f"line {exc.lineno}") from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    schema = doc.get("schema")
    if schema != expected_schema:
        raise ParseError(f"expected schema {expected_schema!r}, found {schema!r}")
    return doc


def _record_from_dict(raw: dict, index: int) -> ProjectRecord:
    if not isinstance(raw, dict):
        raise ParseError(f"record {index} is not an object")
    try:
        bom = [
            BomLine(
                item=str(line["item"]),
                quantity=float(line["quantity"]),
                unit_cost=_as_money(line["unit_cost"], f"unit_cost of {line.get('item')!r}"),
            )
            for line in raw.get("bom", [])
        ]
        notes = [
            PerformanceNote(
                metric_name=str(n["metric_name"]),
                value=float(n["value"]),
                unit=str(n["unit"]),
            )
            for n in raw.get("performance_notes", [])
        ]
        record = ProjectRecord(
            id=str(raw["id"]),
            title=str(raw.get("title", "")),
            category=str(raw.get("category", "")),
            description=str(raw.get("description", "")),
            bom=bom,
            performance_notes=notes,
            feedback=[str(s) for s in raw.get("feedback", [])],
            steps=[str(s) for s in raw.get("steps", [])],
        )
    except KeyError as exc:
        raise ParseError(f"record {index}: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"record {index}: {exc}") from exc
    record.validate()
    return record


def parse_project_records(
    source: Source,
    strict: bool = True,
    issues: list[str] | None = None,
) -> list[ProjectRecord]:
    """Parse a corpus file into validated records.

    In strict mode any invalid record aborts the parse. In lenient mode
    invalid records (including duplicate ids) are skipped; a one-line
    description of each skip is appended to `issues` when a list is given.
    """
    doc = _load_json(source, CORPUS_SCHEMA)
    raw_records = doc.get("records")
    if not isinstance(raw_records, list):
        raise ParseError("corpus file must contain a 'records' array")
    records: list[ProjectRecord] = []
    seen: set[str] = set()
    for i, raw in enumerate(raw_records):
        try:
            record = _record_from_dict(raw, i)
            if record.id in seen:
                raise ValidationError(f"duplicate record id {record.id!r}")
        except (ParseError, ValidationError) as exc:
            if strict:
                raise
            if issues is not None:
                issues.append(f"record {i}: {exc}")
            continue
        seen.add(record.id)
        records.append(record)
    return records


def dump_project_records(records: list[ProjectRecord]) -> str:
    """Serialize records back to the corpus file format (round-trips parse)."""
    doc = {
        "schema": CORPUS_SCHEMA,
        "records": [
            {
                "id": r.id,
                "title": r.title,
                "category": r.category,
                "description": r.description,
                "bom": [
                    {"item": l.item, "quantity": l.quantity, "unit_cost": float(l.unit_cost)}
                    for l in r.bom
                ],
                "performance_notes": [
                    {"metric_name": n.metric_name, "value": n.value, "unit": n.unit}
                    for n in r.performance_notes
                ],
                "feedback": list(r.feedback),
                "steps": list(r.steps),
            }
            for r in records
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def total_cost(record: ProjectRecord) -> Decimal:
    """Sum of quantity x unit_cost over the BOM, rounded to cents half-up."""
    total = sum((line.line_cost for line in record.bom), Decimal("0"))
    return money_to_cents(total)


def render_index_document(record: ProjectRecord) -> str:
    """Canonical text the vector store ingests. Pure function of the record;
    sections appear in a fixed order and empty sections are omitted."""
    lines: list[str] = [f"TITLE: {record.title}", f"CATEGORY: {record.category}"]
    if record.description:
        lines.append("DESCRIPTION:")
        lines.append(record.description)
    if record.bom:
        lines.append("BILL OF MATERIALS:")
        for item in record.bom:
            cost = money_to_cents(item.line_cost)
            lines.append(
                f"- {item.item} | qty {item.quantity:g} | unit cost (USD) "
                f"{money_to_cents(item.unit_cost):.2f} | line cost (USD) {cost:.2f}"
            )
        lines.append(f"TOTAL COST (USD): {total_cost(record):.2f}")
    if record.performance_notes:
        lines.append("PERFORMANCE:")
        for note in record.performance_notes:
            lines.append(f"- {note.metric_name}: {note.value:g} {note.unit}")
    if record.feedback:
        lines.append("FEEDBACK:")
        for entry in record.feedback:
            lines.append(f"- {entry}")
    if record.steps:
        lines.append("STEPS:")
        for i, step in enumerate(record.steps, start=1):
            lines.append(f"{i}. {step}")
    return "\n".join(lines) + "\n"


# --- benchmark cases ---------------------------------------------------------


def _case_from_dict(raw: dict, index: int) -> DesignCase:
    if not isinstance(raw, dict):
        raise ParseError(f"case {index} is not an object")
    ctx_raw = raw.get("refined_context")
    if not isinstance(ctx_raw, dict):
        raise ValidationError(f"case {index}: missing refined_context")
    functions = ctx_raw.get("key_functions", [])
    if not isinstance(functions, list) or len(functions) != 3:
        raise ValidationError(
            f"case {index}: exactly 3 key_functions required, got {len(functions) if isinstance(functions, list) else functions!r}"
        )
    context = RefinedContext(
        problem=str(ctx_raw.get("problem", "")),
        design_solution=str(ctx_raw.get("design_solution", "")),
        key_functions=tuple(str(f) for f in functions),
        dimensions_and_weight=(
            str(ctx_raw["dimensions_and_weight"])
            if ctx_raw.get("dimensions_and_weight") is not None
            else None
        ),
    )
    if "ground_truth_cost" not in raw:
        raise ValidationError(f"case {index}: missing ground_truth_cost")
    perf_raw = raw.get("ground_truth_performance")
    if not isinstance(perf_raw, dict):
        raise ValidationError(f"case {index}: missing ground_truth_performance")
    case = DesignCase(
        case_id=int(raw.get("case_id", index + 1)),
        refined_context=context,
        ground_truth_cost=_as_money(raw["ground_truth_cost"], f"case {index} cost"),
        ground_truth_performance=PerformanceNote(
            metric_name=str(perf_raw.get("metric_name", "performance")),
            value=float(perf_raw["value"]),
            unit=str(perf_raw["unit"]),
        ),
        ground_truth_keywords=[str(k) for k in raw.get("ground_truth_keywords", [])],
        image_ref=str(raw["image_ref"]) if raw.get("image_ref") is not None else None,
    )
    case.validate()
    return case


def load_benchmark_cases(source: Source) -> list[DesignCase]:
    """Load a benchmark file; the bundled one yields the 12 ground-truth cases."""
    doc = _load_json(source, BENCH_SCHEMA)
    raw_cases = doc.get("cases")
    if not isinstance(raw_cases, list):
        raise ParseError("benchmark file must contain a 'cases' array")
    cases = [_case_from_dict(raw, i) for i, raw in enumerate(raw_cases)]
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate case_id in benchmark file")
    return cases


def case_to_dict(case: DesignCase) -> dict:
    """JSON-ready view of a case (used by the service and report files)."""
    return {
        "case_id": case.case_id,
        "refined_context": {
            "problem": case.refined_context.problem,
            "design_solution": case.refined_context.design_solution,
            "key_functions": list(case.refined_context.key_functions),
            "dimensions_and_weight": case.refined_context.dimensions_and_weight,
        },
        "image_ref": case.image_ref,
        "ground_truth_cost": float(case.ground_truth_cost),
        "ground_truth_performance": {
            "metric_name": case.ground_truth_performance.metric_name,
            "value": case.ground_truth_performance.value,
            "unit": case.ground_truth_performance.unit,
        },
        "ground_truth_keywords": list(case.ground_truth_keywords),
    }


# --- bundled data ------------------------------------------------------------


def bundled_data_path(name: str) -> Path:
    """Path of a data file shipped inside the package."""
    return Path(str(resources.files("protopredict").joinpath("data", name)))


def load_bundled_benchmark() -> list[DesignCase]:
    return load_benchmark_cases(bundled_data_path("bench_v1.json"))


def load_bundled_corpus(strict: bool = True) -> list[ProjectRecord]:
    return parse_project_records(bundled_data_path("sample_corpus.json"), strict=strict)
