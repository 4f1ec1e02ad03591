#!/usr/bin/env python3
"""Regenerate the bundled synthetic human prediction-record file.

The real survey data behind the benchmark is not published, so the repo
ships a clearly-synthetic stand-in: 30 respondents per case, cost and
performance drawn around ground truth with relative noise sd 1.0 (matching
the harness's recorded-human convention), usability answers sampled from
the case keywords plus generic distractors.

Deterministic: fixed seed, stable output. Run from the repo root:

    python scripts/make_synthetic_human.py
"""

from __future__ import annotations

import random
from pathlib import Path

from protopredict.corpus import load_bundled_benchmark
from protopredict.report import DEFAULT_DISTRACTORS, RecordedRow, write_prediction_records

SEED = 20240117
NOISE_SD = 1.0
RESPONDENTS = 30

OUT = Path(__file__).resolve().parent.parent / "src" / "protopredict" / "data" / "human_recorded.csv"


def draw_noise(rng: random.Random, sd: float) -> float:
    while True:
        eps = rng.gauss(0.0, sd)
        if eps > -0.9:
            return eps


def usability_answer(rng: random.Random, pool: list[str]) -> str:
    positives = rng.sample(pool, 3)
    issues = rng.sample(pool, 3)
    lines = ["Positive aspects:"]
    lines += [f"{i}. {kw}" for i, kw in enumerate(positives, start=1)]
    lines.append("Potential issues:")
    lines += [f"{i}. {kw}" for i, kw in enumerate(issues, start=1)]
    return "\n".join(lines)


def main() -> None:
    cases = load_bundled_benchmark()
    rng = random.Random(SEED)
    rows: list[RecordedRow] = []
    for case in cases:
        pool = list(case.ground_truth_keywords) + list(DEFAULT_DISTRACTORS)
        for respondent in range(1, RESPONDENTS + 1):
            cost = round(float(case.ground_truth_cost) * (1.0 + draw_noise(rng, NOISE_SD)), 2)
            rows.append(
                RecordedRow(
                    group="human",
                    case_id=case.case_id,
                    respondent=str(respondent),
                    task="cost",
                    raw_text=f"My estimate is around ${cost:,.2f} all in.",
                    parsed_value=cost,
                    unit="USD",
                )
            )
            perf_unit = case.ground_truth_performance.unit
            perf = round(
                case.ground_truth_performance.value * (1.0 + draw_noise(rng, NOISE_SD)), 3
            )
            rows.append(
                RecordedRow(
                    group="human",
                    case_id=case.case_id,
                    respondent=str(respondent),
                    task="performance",
                    raw_text=f"I would expect roughly {perf} {perf_unit}.",
                    parsed_value=perf,
                    unit=perf_unit,
                )
            )
            rows.append(
                RecordedRow(
                    group="human",
                    case_id=case.case_id,
                    respondent=str(respondent),
                    task="usability",
                    raw_text=usability_answer(rng, pool),
                    parsed_value=None,
                    unit="",
                )
            )
    write_prediction_records(rows, OUT)
    print(f"wrote {len(rows)} rows to {OUT}")


if __name__ == "__main__":
    main()
