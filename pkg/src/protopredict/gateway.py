"""Prompt assembly (COSTAR) and completion execution.

The gateway renders a brief plus retrieved evidence into a six-field COSTAR
prompt and runs it against either a remote OpenAI-compatible chat endpoint
or a deterministic mock. It returns completion text verbatim; parsing
numbers or lists out of completions is the predictor's job, never done here.

Template text is owned by this repo and versioned: golden tests pin the
render byte-for-byte, so any wording change must bump COSTAR_TEMPLATE_VERSION.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import httpx

from .errors import (
    AuthenticationError,
    BackendError,
    ProtocolError,
    TransportError,
    ValidationError,
)
from .retrieval import RetrievalHit

COSTAR_TEMPLATE_VERSION = "1"
MOCK_PROFILE_SCHEMA = "protopredict/mockprofile-v1"
BRIEF_SCHEMA = "protopredict/brief-v1"

TASKS = ("cost", "performance", "usability", "refine")

DEFAULT_STYLE = "concise technical"
DEFAULT_TONE = "neutral"
DEFAULT_AUDIENCE = "design engineer"

ENV_BASE_URL = "PROTOPREDICT_LLM_BASE_URL"
ENV_API_KEY = "PROTOPREDICT_LLM_API_KEY"

USABILITY_RESPONSE_FORMAT = (
    "List three positive aspects and then three potential issues of the design.\n"
    "Use exactly this layout:\n"
    "Positive aspects:\n1. ...\n2. ...\n3. ...\n"
    "Potential issues:\n1. ...\n2. ...\n3. ..."
)


@dataclass(frozen=True)
class DesignBrief:
    """The decomposed context a designer submits: problem, solution, exactly
    three key functions, optional dimensions/weight and an optional sketch."""

    problem: str
    design_solution: str
    key_functions: tuple[str, ...]
    dimensions_and_weight: str | None = None
    image_ref: str | None = None

    def __post_init__(self):
        if not self.problem or not self.design_solution:
            raise ValidationError("brief needs a non-empty problem and design_solution")
        if len(self.key_functions) != 3 or not all(self.key_functions):
            raise ValidationError(
                f"brief needs exactly 3 non-empty key functions, got {list(self.key_functions)!r}"
            )

    def query_text(self) -> str:
        parts = [self.problem, self.design_solution, *self.key_functions]
        if self.dimensions_and_weight:
            parts.append(self.dimensions_and_weight)
        return " ".join(parts)

    @classmethod
    def from_dict(cls, raw: dict) -> "DesignBrief":
        return cls(
            problem=str(raw.get("problem", "")),
            design_solution=str(raw.get("design_solution", "")),
            key_functions=tuple(str(f) for f in raw.get("key_functions", [])),
            dimensions_and_weight=(
                str(raw["dimensions_and_weight"])
                if raw.get("dimensions_and_weight") is not None
                else None
            ),
            image_ref=str(raw["image_ref"]) if raw.get("image_ref") is not None else None,
        )

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "design_solution": self.design_solution,
            "key_functions": list(self.key_functions),
            "dimensions_and_weight": self.dimensions_and_weight,
            "image_ref": self.image_ref,
        }


@dataclass(frozen=True)
class ImageAttachment:
    media_type: str
    data_b64: str


@dataclass(frozen=True)
class CostarFields:
    context: str
    objective: str
    style: str
    tone: str
    audience: str
    response_format: str


@dataclass(frozen=True)
class PromptBundle:
    costar: CostarFields
    evidence: tuple[RetrievalHit, ...]
    task: str
    image: ImageAttachment | None = None
    expected_unit: str | None = None


@dataclass(frozen=True)
class CompletionParams:
    temperature: float = 1.0
    seed: int | None = None
    max_output_units: int = 512
    backend: str = "mock"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature!r}")
        if self.backend not in ("mock", "remote"):
            raise ValidationError(f"backend must be 'mock' or 'remote', got {self.backend!r}")


@dataclass(frozen=True)
class Completion:
    text: str
    backend_id: str
    latency_ms: float
    seed: int | None


def _objective_for(task: str, expected_unit: str | None) -> str:
    if task == "cost":
        return (
            "Predict the total cost to prototype this design, in USD. "
            "State a single dollar amount."
        )
    if task == "performance":
        return (
            f"Predict the design's expected performance in {expected_unit}. "
            f"State a single number followed by the unit '{expected_unit}'."
        )
    if task == "usability":
        return (
            "Assess the design's likely usability: name its strongest aspects "
            "and the non-obvious issues a prototype would reveal."
        )
    return (
        "Suggest concrete modifications that would improve the design's "
        "performance, and state the expected improvement as a percent range."
    )


def _response_format_for(task: str, expected_unit: str | None) -> str:
    if task == "cost":
        return "One short paragraph ending with the estimated total cost in USD."
    if task == "performance":
        return (
            f"One short paragraph ending with the predicted value in {expected_unit}."
        )
    if task == "usability":
        return USABILITY_RESPONSE_FORMAT
    return (
        "A short list of modifications, then a single sentence stating the "
        "expected improvement as a percent range (for example 10-15%)."
    )


def assemble_costar_prompt(
    brief: DesignBrief,
    evidence: list[RetrievalHit] | tuple[RetrievalHit, ...] = (),
    task: str = "cost",
    expected_unit: str | None = None,
    image: ImageAttachment | None = None,
    style: str = DEFAULT_STYLE,
    tone: str = DEFAULT_TONE,
    audience: str = DEFAULT_AUDIENCE,
) -> PromptBundle:
    """Build the six COSTAR fields from a brief and retrieved evidence.

    Pure and total over valid inputs: identical arguments render identical
    bundles and message sequences.
    """
    if task not in TASKS:
        raise ValidationError(f"unknown task {task!r}, expected one of {TASKS}")
    if task == "performance" and not expected_unit:
        raise ValidationError("performance task requires expected_unit")
    dims = brief.dimensions_and_weight or "Not stated."
    context_lines = [
        f"Problem: {brief.problem}",
        f"Design solution: {brief.design_solution}",
        "Key functions:",
        f"1. {brief.key_functions[0]}",
        f"2. {brief.key_functions[1]}",
        f"3. {brief.key_functions[2]}",
        f"Dimensions and weight: {dims}",
    ]
    costar = CostarFields(
        context="\n".join(context_lines),
        objective=_objective_for(task, expected_unit),
        style=style,
        tone=tone,
        audience=audience,
        response_format=_response_format_for(task, expected_unit),
    )
    return PromptBundle(
        costar=costar,
        evidence=tuple(evidence),
        task=task,
        image=image,
        expected_unit=expected_unit,
    )


def render_user_text(bundle: PromptBundle) -> str:
    """The user-message text: all six COSTAR sections plus the evidence block."""
    c = bundle.costar
    lines = [
        "# Context",
        c.context,
        "",
        "# Objective",
        c.objective,
        "",
        "# Style",
        c.style,
        "",
        "# Tone",
        c.tone,
        "",
        "# Audience",
        c.audience,
        "",
        "# Response",
        c.response_format,
        "",
        "# Retrieved evidence",
    ]
    if bundle.evidence:
        for hit in bundle.evidence:
            lines.append(f"[doc {hit.chunk.doc_id} #{hit.chunk.seq}] {hit.chunk.text}")
    else:
        lines.append("No retrieved evidence available.")
    lines.append("")
    if bundle.image is not None:
        lines.append("A sketch of the design is attached.")
    else:
        lines.append("No image of the design is provided.")
    return "\n".join(lines) + "\n"


def render_messages(bundle: PromptBundle) -> list[dict[str, Any]]:
    """OpenAI-style message sequence: one system and one user message."""
    system = (
        "You evaluate conceptual design briefs against evidence from prior "
        "prototyping projects and answer exactly in the requested format."
    )
    user_text = render_user_text(bundle)
    if bundle.image is not None:
        content: Any = [
            {"type": "text", "text": user_text},
            {
                "type": "image_url",
                "image_url": {
                    "url": f"data:{bundle.image.media_type};base64,{bundle.image.data_b64}"
                },
            },
        ]
    else:
        content = user_text
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": content},
    ]


# --- mock backend -------------------------------------------------------------


@dataclass(frozen=True)
class TaskTarget:
    target: float
    noise_sd: float

    def __post_init__(self):
        if self.target <= 0:
            raise ValidationError(f"mock target must be > 0, got {self.target!r}")
        if self.noise_sd < 0:
            raise ValidationError(f"noise_sd must be >= 0, got {self.noise_sd!r}")


@dataclass(frozen=True)
class MockProfile:
    """What the mock backend should pretend to know, per task."""

    cost: TaskTarget | None = None
    performance: TaskTarget | None = None
    usability_pool: tuple[str, ...] = ()
    refine_text: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "MockProfile":
        schema = raw.get("schema")
        if schema is not None and schema != MOCK_PROFILE_SCHEMA:
            raise ValidationError(
                f"expected mock profile schema {MOCK_PROFILE_SCHEMA!r}, found {schema!r}"
            )
        cost = raw.get("cost")
        perf = raw.get("performance")
        usability = raw.get("usability") or {}
        refine = raw.get("refine") or {}
        return cls(
            cost=TaskTarget(float(cost["target"]), float(cost.get("noise_sd", 0.0)))
            if cost
            else None,
            performance=TaskTarget(float(perf["target"]), float(perf.get("noise_sd", 0.0)))
            if perf
            else None,
            usability_pool=tuple(str(k) for k in usability.get("pool", [])),
            refine_text=str(refine["text"]) if refine.get("text") else None,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "MockProfile":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _draw_relative_noise(rng: random.Random, noise_sd: float) -> float:
    # Truncated at -0.9 by rejection so mock predictions stay positive.
    while True:
        eps = rng.gauss(0.0, noise_sd)
        if eps > -0.9:
            return eps


def mock_complete(bundle: PromptBundle, seed: int, profile: MockProfile) -> str:
    """Deterministic stand-in completion: same (bundle, seed, profile), same text."""
    rng = random.Random(seed)
    if bundle.task == "cost":
        if profile.cost is None:
            raise ValidationError("mock profile has no cost settings")
        value = profile.cost.target * (1.0 + _draw_relative_noise(rng, profile.cost.noise_sd))
        return (
            "Judging by comparable projects, the estimated total cost is "
            f"${value:,.2f}."
        )
    if bundle.task == "performance":
        if profile.performance is None:
            raise ValidationError("mock profile has no performance settings")
        unit = bundle.expected_unit or "units"
        value = profile.performance.target * (
            1.0 + _draw_relative_noise(rng, profile.performance.noise_sd)
        )
        return f"The design should deliver about {value:,.2f} {unit} in practice."
    if bundle.task == "usability":
        if len(profile.usability_pool) < 3:
            raise ValidationError("mock profile needs a usability pool of >= 3 keywords")
        pool = list(profile.usability_pool)
        positives = rng.sample(pool, 3)
        issues = rng.sample(pool, 3)
        lines = ["Positive aspects:"]
        lines += [f"{i}. {kw}" for i, kw in enumerate(positives, start=1)]
        lines.append("Potential issues:")
        lines += [f"{i}. {kw}" for i, kw in enumerate(issues, start=1)]
        return "\n".join(lines)
    if bundle.task == "refine":
        if not profile.refine_text:
            raise ValidationError("mock profile has no refine text")
        return profile.refine_text
    raise ValidationError(f"unknown task {bundle.task!r}")


# --- rate limiting -------------------------------------------------------------


class TokenBucket:
    """Simple thread-safe token bucket; shared across concurrent callers."""

    def __init__(self, rate_per_sec: float, capacity: float | None = None):
        if rate_per_sec <= 0:
            raise ValidationError("rate_per_sec must be > 0")
        self.rate = rate_per_sec
        self.capacity = capacity if capacity is not None else rate_per_sec
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


# --- gateway -------------------------------------------------------------------


class LlmGateway:
    """One completion interface over two interchangeable backends.

    The remote path talks OpenAI-compatible chat completions over HTTPS and
    retries transient transport errors (3 attempts, exponential backoff);
    every other failure surfaces as a typed error, never as fabricated text.
    """

    def __init__(
        self,
        profile: MockProfile | None = None,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str = "gpt-4o",
        transport: httpx.BaseTransport | None = None,
        max_attempts: int = 3,
        backoff_base: float = 0.25,
        timeout: float = 60.0,
        rate_limiter: TokenBucket | None = None,
    ):
        self.profile = profile
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL) or "").rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY)
        self.model = model
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.rate_limiter = rate_limiter
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def complete(self, bundle: PromptBundle, params: CompletionParams) -> Completion:
        if self.rate_limiter is not None:
            self.rate_limiter.acquire()
        start = time.perf_counter()
        if params.backend == "mock":
            if self.profile is None:
                raise ValidationError("mock backend selected but no mock profile configured")
            text = mock_complete(bundle, params.seed or 0, self.profile)
            return Completion(
                text=text,
                backend_id="mock",
                latency_ms=(time.perf_counter() - start) * 1000.0,
                seed=params.seed,
            )
        text = self._complete_remote(bundle, params)
        return Completion(
            text=text,
            backend_id=f"remote:{self.model}",
            latency_ms=(time.perf_counter() - start) * 1000.0,
            seed=params.seed,
        )

    def _complete_remote(self, bundle: PromptBundle, params: CompletionParams) -> str:
        if not self.base_url:
            raise AuthenticationError(
                f"remote backend needs a base URL ({ENV_BASE_URL} or base_url=)"
            )
        if not self.api_key:
            raise AuthenticationError(
                f"remote backend needs an API key ({ENV_API_KEY} or api_key=)"
            )
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": render_messages(bundle),
            "temperature": params.temperature,
            "max_tokens": params.max_output_units,
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        response = self._post_with_retries(payload)
        if response.status_code in (401, 403):
            raise AuthenticationError(f"backend rejected credentials (HTTP {response.status_code})")
        if response.status_code >= 400:
            raise BackendError(f"backend returned HTTP {response.status_code}")
        try:
            data = response.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise ProtocolError("backend response is not valid JSON") from exc
        choices = data.get("choices")
        if not isinstance(choices, list) or not choices:
            raise ProtocolError("backend response is missing 'choices'")
        message = choices[0].get("message")
        if not isinstance(message, dict) or "content" not in message:
            raise ProtocolError("backend response is missing 'choices[0].message.content'")
        content = message["content"]
        if not isinstance(content, str):
            raise ProtocolError("backend returned non-text 'message.content'")
        return content

    def _post_with_retries(self, payload: dict) -> httpx.Response:
        url = f"{self.base_url}/v1/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_exc: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                return self._client.post(url, headers=headers, json=payload)
            except httpx.TransportError as exc:
                last_exc = exc
                if attempt + 1 < self.max_attempts:
                    time.sleep(self.backoff_base * (2**attempt))
        raise TransportError(
            f"backend unreachable after {self.max_attempts} attempts: {last_exc}"
        ) from last_exc


def load_brief(path: str | Path) -> DesignBrief:
    """Read a brief file ({"schema": "protopredict/brief-v1", ...fields})."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    schema = raw.get("schema")
    if schema is not None and schema != BRIEF_SCHEMA:
        raise ValidationError(f"expected brief schema {BRIEF_SCHEMA!r}, found {schema!r}")
    return DesignBrief.from_dict(raw)


def load_image_attachment(path: str | Path) -> ImageAttachment:
    """Read an image file into a base64 attachment; media type from suffix."""
    import base64

    p = Path(path)
    suffix = p.suffix.lower().lstrip(".") or "png"
    media = {"jpg": "jpeg"}.get(suffix, suffix)
    return ImageAttachment(
        media_type=f"image/{media}",
        data_b64=base64.b64encode(p.read_bytes()).decode("ascii"),
    )
