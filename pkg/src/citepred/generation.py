"""Generator plumbing: prompt construction, chat-completion calls with
retries, strict-JSON prediction parsing, and retrieval-noise injection.

Prompts follow a two-message shape: one system message that fixes the JSON
output schema, one user message carrying the query paper, the retrieved
context blocks, and (for placeholder prediction) the section texts. The
scripted mock endpoints at the bottom read those same prompts, which keeps
offline runs honest end to end.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .datasets import Task1Instance, Task2Instance
from .errors import (
    GenerationError,
    ParameterRejectedError,
    PredictionParseError,
    PredictionSchemaError,
    RateLimitError,
    TransportError,
    ValidationError,
)
from .metrics import normalize_title
from .ranking import RankedList
from .records import Corpus

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.1
DEFAULT_PRESENCE_PENALTY = 1.0
DEFAULT_MAX_TOKENS = 2048

_TASK1_SCHEMA = '{"titles": ["<paper title>", "..."], "reasoning": "<why>"}'
_TASK2_SCHEMA = (
    '{"placeholders": {"1": ["<paper title>", "..."], "2": ["..."]}, "reasoning": "<why>"}'
)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = DEFAULT_TEMPERATURE
    presence_penalty: float = DEFAULT_PRESENCE_PENALTY
    max_tokens: int = DEFAULT_MAX_TOKENS
    retrieval_depth: int = 5


@dataclass(frozen=True)
class PromptEnvelope:
    messages: tuple[tuple[str, str], ...]  # (role, content), system first
    params: GenerationParams

    @property
    def system(self) -> str:
        return self.messages[0][1]

    @property
    def user(self) -> str:
        return self.messages[1][1]


@dataclass
class GenerationOutput:
    predicted_titles: list[str]
    placeholder_candidates: dict[int, list[str]]
    reasoning: str
    raw: str

    def all_titles(self) -> list[str]:
        """Every distinct predicted title, in first-seen order."""
        seen: set[str] = set()
        out: list[str] = []
        for title in list(self.predicted_titles) + [
            t for ranked in self.placeholder_candidates.values() for t in ranked
        ]:
            key = normalize_title(title)
            if key not in seen:
                seen.add(key)
                out.append(title)
        return out

    def to_json(self) -> str:
        if self.placeholder_candidates:
            body = {
                "placeholders": {str(i): list(c) for i, c in self.placeholder_candidates.items()},
                "reasoning": self.reasoning,
            }
        else:
            body = {"titles": list(self.predicted_titles), "reasoning": self.reasoning}
        return json.dumps(body, ensure_ascii=False)


def _context_blocks(retrieved: RankedList, corpus: Corpus, R: int) -> str:
    if len(retrieved) < R:
        logger.warning("only %d retrieved results for requested R=%d", len(retrieved), R)
    blocks = []
    for i, (doc_id, _) in enumerate(retrieved.entries[:R], start=1):
        record = corpus.get(doc_id)
        if record is None:
            logger.warning("retrieved id %s not in corpus; skipping block", doc_id)
            continue
        blocks.append(f"[{i}] Title: {record.title}\n{record.level1_text}")
    return "\n\n".join(blocks)


def build_prompt(
    instance: Task1Instance | Task2Instance,
    retrieved: RankedList,
    corpus: Corpus,
    R: int,
) -> PromptEnvelope:
    """Deterministic two-message prompt for either task."""
    if R <= 0:
        raise ValidationError("R must be >= 1")
    task2 = isinstance(instance, Task2Instance)
    schema = _TASK2_SCHEMA if task2 else _TASK1_SCHEMA
    system = (
        "You are an academic citation prediction assistant. "
        + (
            "For every [ref]_i placeholder in the provided sections, predict a ranked "
            "list of paper titles that belong at that position."
            if task2
            else "Predict the ranked list of paper titles the given paper should cite."
        )
        + " Ground your predictions in the retrieved papers whenever they are relevant, "
        "and explain your reasoning. Respond with strict JSON only, following exactly "
        f"this schema: {schema}"
    )
    parts = [f"Title: {instance.title}", f"Abstract: {instance.abstract}"]
    context = _context_blocks(retrieved, corpus, R)
    parts.append("Retrieved papers:\n" + (context if context else "(none)"))
    if task2:
        sections = "\n\n".join(
            f"Section {i}:\n{section.text}" for i, section in enumerate(instance.sections, start=1)
        )
        parts.append("Sections with citation placeholders:\n" + sections)
    user = "\n\n".join(parts)
    params = GenerationParams(retrieval_depth=R)
    return PromptEnvelope(messages=(("system", system), ("user", user)), params=params)


# ---------------------------------------------------------------------------
# Endpoints and the generator call
# ---------------------------------------------------------------------------


class HttpChatEndpoint:
    """Chat-completion service speaking the common JSON wire shape."""

    def __init__(self, base_url: str, model: str, api_key: str | None = None,
                 timeout: float = 120.0):
        self.name = base_url
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    def send(self, payload: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(
                f"{self.base_url}/chat/completions", json=payload,
                headers=headers, timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code == 429:
            retry_after = response.headers.get("Retry-After")
            raise RateLimitError(retry_after=float(retry_after) if retry_after else None)
        if response.status_code == 400:
            body = response.text
            for param in ("presence_penalty", "temperature", "max_tokens"):
                if param in payload and param in body:
                    raise ParameterRejectedError(param, body[:200])
            raise TransportError(f"HTTP 400: {body[:200]}")
        if response.status_code >= 500:
            raise TransportError(f"HTTP {response.status_code}")
        if response.status_code != 200:
            raise GenerationError(f"HTTP {response.status_code}: {response.text[:200]}")
        return response.json()


def call_generator(
    envelope: PromptEnvelope,
    endpoint,
    *,
    model: str | None = None,
    max_retries: int = 4,
    backoff: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Send the envelope, honoring rate limits and dropping parameters the
    endpoint rejects; returns the first choice's message content verbatim."""
    payload = {
        "model": model or getattr(endpoint, "model", ""),
        "messages": [{"role": role, "content": content} for role, content in envelope.messages],
        "temperature": envelope.params.temperature,
        "presence_penalty": envelope.params.presence_penalty,
        "max_tokens": envelope.params.max_tokens,
    }
    attempt = 0
    while True:
        try:
            response = endpoint.send(payload)
            return response["choices"][0]["message"]["content"]
        except ParameterRejectedError as exc:
            if exc.param not in payload:
                raise GenerationError(f"endpoint rejected absent parameter {exc.param!r}") from exc
            logger.warning("endpoint rejected %s; retrying without it", exc.param)
            payload.pop(exc.param)
        except RateLimitError as exc:
            if attempt >= max_retries:
                raise GenerationError(f"rate limited after {max_retries} retries") from exc
            sleep(exc.retry_after if exc.retry_after is not None else backoff * 2 ** attempt)
            attempt += 1
        except TransportError as exc:
            if attempt >= max_retries:
                raise GenerationError(f"transport failure after {max_retries} retries: {exc}") from exc
            sleep(backoff * 2 ** attempt)
            attempt += 1
        except (KeyError, IndexError, TypeError) as exc:
            raise GenerationError(f"malformed endpoint response: {exc}") from exc


# ---------------------------------------------------------------------------
# Prediction parsing
# ---------------------------------------------------------------------------

_FENCED = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*\n(.*?)```", re.DOTALL)
_PLACEHOLDER_KEY = re.compile(r"^(?:\[ref\]_)?(\d+)$")


def _dedup_titles(titles: Iterable) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for title in titles:
        if not isinstance(title, str):
            continue
        key = normalize_title(title)
        if key and key not in seen:
            seen.add(key)
            out.append(title)
    return out


def parse_prediction(raw: str, task: int) -> GenerationOutput:
    """Parse a generator response: strict JSON first, then a single fenced
    code block containing JSON. Duplicate titles are dropped, keeping the
    first occurrence."""
    obj = None
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, TypeError):
        for match in _FENCED.finditer(raw or ""):
            try:
                obj = json.loads(match.group(1))
                break
            except json.JSONDecodeError:
                continue
    if obj is None:
        raise PredictionParseError("no parseable JSON in response", raw=raw)
    if not isinstance(obj, dict):
        raise PredictionSchemaError("top-level JSON value is not an object", raw=raw)
    reasoning = str(obj.get("reasoning", ""))

    if task == 1:
        titles = obj.get("titles")
        if not isinstance(titles, list):
            raise PredictionSchemaError("missing or non-list 'titles' field", raw=raw)
        return GenerationOutput(
            predicted_titles=_dedup_titles(titles),
            placeholder_candidates={},
            reasoning=reasoning,
            raw=raw,
        )

    placeholders = obj.get("placeholders")
    if not isinstance(placeholders, dict):
        raise PredictionSchemaError("missing or non-object 'placeholders' field", raw=raw)
    candidates: dict[int, list[str]] = {}
    for key, ranked in placeholders.items():
        match = _PLACEHOLDER_KEY.match(str(key).strip())
        if match is None:
            raise PredictionSchemaError(f"unparseable placeholder key {key!r}", raw=raw)
        if not isinstance(ranked, list):
            raise PredictionSchemaError(f"candidates for placeholder {key!r} are not a list", raw=raw)
        candidates[int(match.group(1))] = _dedup_titles(ranked)
    return GenerationOutput(
        predicted_titles=[],
        placeholder_candidates=candidates,
        reasoning=reasoning,
        raw=raw,
    )


# ---------------------------------------------------------------------------
# Noise injection
# ---------------------------------------------------------------------------


def inject_noise(
    retrieved: RankedList,
    ratio: float,
    corpus: Corpus,
    ground_truth: Iterable[str],
    seed: int,
) -> RankedList:
    """Replace the floor(ratio * n) lowest-ranked entries with papers drawn
    uniformly from the corpus that are neither already retrieved nor in the
    ground truth. Deterministic under the seed."""
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError("noise ratio must be in [0, 1]")
    n = len(retrieved)
    count = math.floor(ratio * n)
    if count == 0:
        return retrieved
    excluded = set(retrieved.ids()) | set(ground_truth)
    pool = sorted(doc_id for doc_id in corpus.ids() if doc_id not in excluded)
    if len(pool) < count:
        raise ValidationError(
            f"replacement pool too small: need {count}, have {len(pool)}"
        )
    replacements = random.Random(seed).sample(pool, count)
    entries = list(retrieved.entries)
    for offset, new_id in enumerate(replacements):
        position = n - count + offset
        entries[position] = (new_id, entries[position][1])
    return RankedList(entries=tuple(entries))


# ---------------------------------------------------------------------------
# Scripted mock endpoints (offline generators)
# ---------------------------------------------------------------------------

_TITLE_LINE = re.compile(r"^\[\d+\] Title: (.+)$", re.MULTILINE)
_PLACEHOLDER_TOKEN = re.compile(r"\[ref\]_(\d+)")


def _wrap(content: str) -> dict:
    return {"choices": [{"message": {"content": content}}]}


def _user_message(payload: dict) -> str:
    for message in payload.get("messages", []):
        if message.get("role") == "user":
            return message.get("content", "")
    return ""


def _context_titles(user: str) -> list[str]:
    return _TITLE_LINE.findall(user)


def _placeholder_indices(user: str) -> list[int]:
    marker = "Sections with citation placeholders:"
    scope = user[user.index(marker):] if marker in user else user
    return sorted({int(i) for i in _PLACEHOLDER_TOKEN.findall(scope)})


class ContextCopyingEndpoint:
    """Predicts exactly the retrieved context titles, in retrieval order."""

    name = "mock-copy"
    model = "mock-copy"

    def send(self, payload: dict) -> dict:
        user = _user_message(payload)
        titles = _context_titles(user)
        indices = _placeholder_indices(user)
        if indices:
            body = {
                "placeholders": {str(i): titles for i in indices},
                "reasoning": "copied retrieved context titles for every placeholder",
            }
        else:
            body = {"titles": titles, "reasoning": "copied retrieved context titles"}
        return _wrap(json.dumps(body))


class ContextIgnoringEndpoint:
    """Ignores the context and emits fabricated titles (all unverifiable)."""

    name = "mock-ignore"
    model = "mock-ignore"

    def __init__(self, count: int = 10):
        self.count = count

    def send(self, payload: dict) -> dict:
        user = _user_message(payload)
        titles = [f"Imaginary Survey of Unwritten Results Volume {i}" for i in range(1, self.count + 1)]
        indices = _placeholder_indices(user)
        if indices:
            body = {"placeholders": {str(i): titles for i in indices},
                    "reasoning": "made everything up"}
        else:
            body = {"titles": titles, "reasoning": "made everything up"}
        return _wrap(json.dumps(body))


class LengthDegradingEndpoint:
    """Copies context titles but degrades once the context exceeds a budget:
    every block past the budget pushes one junk title ahead of the real ones,
    so ranking quality peaks exactly at R = budget."""

    name = "mock-degrade"
    model = "mock-degrade"

    def __init__(self, budget: int = 8):
        self.budget = budget

    def send(self, payload: dict) -> dict:
        user = _user_message(payload)
        titles = _context_titles(user)
        overflow = max(0, len(titles) - self.budget)
        junk = [f"Padding Commentary on Overlong Context Part {i}" for i in range(1, overflow + 1)]
        predicted = junk + titles[: self.budget]
        indices = _placeholder_indices(user)
        if indices:
            body = {"placeholders": {str(i): predicted for i in indices},
                    "reasoning": f"context exceeded budget by {overflow} blocks"}
        else:
            body = {"titles": predicted, "reasoning": f"context exceeded budget by {overflow} blocks"}
        return _wrap(json.dumps(body))


class FlakyEndpoint:
    """Test double: raises scripted failures before delegating."""

    name = "mock-flaky"
    model = "mock-flaky"

    def __init__(self, failures: Sequence[Exception], inner=None):
        self.pending = list(failures)
        self.inner = inner or ContextCopyingEndpoint()
        self.calls = 0

    def send(self, payload: dict) -> dict:
        self.calls += 1
        if self.pending:
            raise self.pending.pop(0)
        return self.inner.send(payload)


MOCK_ENDPOINTS = {
    "mock-copy": ContextCopyingEndpoint,
    "mock-ignore": ContextIgnoringEndpoint,
    "mock-degrade": LengthDegradingEndpoint,
}


def resolve_endpoint(name: str, *, model: str = "", api_key: str | None = None):
    """Endpoint factory: mock names, 'mock-degrade:<budget>', or an http(s) URL."""
    if name.startswith("mock-degrade:"):
        return LengthDegradingEndpoint(budget=int(name.split(":", 1)[1]))
    if name in MOCK_ENDPOINTS:
        return MOCK_ENDPOINTS[name]()
    if name.startswith("http://") or name.startswith("https://"):
        return HttpChatEndpoint(base_url=name, model=model, api_key=api_key)
    raise ValidationError(f"unknown endpoint {name!r}")
