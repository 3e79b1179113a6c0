"""Chat-completion backend speaking the OpenAI-compatible HTTP protocol."""

from __future__ import annotations

import json
import logging
import os
import time
from typing import Any, Optional

import httpx

from ..core import Key, RankTask, ResponseCache
from .base import Oracle

log = logging.getLogger(__name__)

API_KEY_ENVS = ("LLMORDERBY_API_KEY", "OPENAI_API_KEY")
DEFAULT_BASE_URL = "https://api.openai.com/v1"

SYSTEM_PROMPT = (
    "You are a careful assistant that orders items for a database query. "
    "Think step by step in the reasoning field, then give the answer field."
)


class TransportError(RuntimeError):
    pass


def _direction_phrase(task: RankTask) -> str:
    if task.descending:
        return "descending order (items with the highest value for the criterion come first)"
    return "ascending order (items with the lowest value for the criterion come first)"


def _header(task: RankTask) -> str:
    lines = [f"Criterion: {task.criterion}"]
    if task.query:
        lines.append(f"Query: {task.query}")
    return "\n".join(lines)


def _items(keys) -> str:
    return "\n".join(f"[{i}] {k.text}" for i, k in enumerate(keys, 1))


def _schema(name: str, answer: dict) -> dict:
    return {
        "type": "json_schema",
        "json_schema": {
            "name": name,
            "strict": True,
            "schema": {
                "type": "object",
                "properties": {"reasoning": {"type": "string"}, **answer},
                "required": ["reasoning", *answer],
                "additionalProperties": False,
            },
        },
    }


SCORE_FORMAT = _schema("item_values", {"values": {"type": "array", "items": {"type": "number"}}})
COMPARE_FORMAT = _schema("pairwise_choice", {"answer": {"type": "string", "enum": ["A", "B"]}})
SORT_FORMAT = _schema("ranking", {"ranking": {"type": "array", "items": {"type": "integer"}}})


def score_prompt(keys, task: RankTask) -> str:
    return (
        f"{_header(task)}\n\n"
        f"For each of the {len(keys)} items below, estimate its value for the criterion. "
        f"Return exactly {len(keys)} numbers in the field 'values', in item order.\n\n"
        f"{_items(keys)}"
    )


def compare_prompt(a: Key, b: Key, task: RankTask) -> str:
    return (
        f"{_header(task)}\n\n"
        f"The items will be listed in {_direction_phrase(task)}. "
        "Which of the two items below should appear first? Answer 'A' or 'B'.\n\n"
        f"A: {a.text}\nB: {b.text}"
    )


def sort_prompt(keys, task: RankTask) -> str:
    return (
        f"{_header(task)}\n\n"
        f"Rank the {len(keys)} items below in {_direction_phrase(task)}. "
        "Return every item number exactly once in the field 'ranking', first item first.\n\n"
        f"{_items(keys)}"
    )


class LiveOracle(Oracle):
    """Structured-output chat-completion backend.

    The API key comes from ``LLMORDERBY_API_KEY`` or ``OPENAI_API_KEY``.
    Key text reaches the prompt; latent values never do.
    """

    kind = "live"
    retries = 1

    def __init__(
        self,
        model: str,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        temperature: float = 0.0,
        max_tokens: Optional[int] = None,
        timeout: float = 60.0,
        transport_retries: int = 3,
        cache: Optional[ResponseCache] = None,
        max_window: Optional[int] = None,
        verbose: bool = False,
        client: Optional[httpx.Client] = None,
    ):
        super().__init__(cache=cache, max_window=max_window)
        self.model = model
        self.base_url = (base_url or os.environ.get("OPENAI_BASE_URL") or DEFAULT_BASE_URL).rstrip("/")
        self.api_key = api_key or next((os.environ[e] for e in API_KEY_ENVS if os.environ.get(e)), None)
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.transport_retries = transport_retries
        self.verbose = verbose
        self._client = client or httpx.Client(timeout=timeout)

    def describe(self) -> dict:
        return {
            "model": self.model,
            "base_url": self.base_url,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def _post(self, prompt: str, response_format: dict) -> tuple[Optional[dict], dict]:
        """Send one chat request. Returns (parsed JSON answer or None, usage)."""
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.temperature,
            "response_format": response_format,
        }
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        if self.verbose:
            log.info("request body: %s", json.dumps(body, ensure_ascii=False))

        last_exc: Optional[Exception] = None
        for attempt in range(self.transport_retries):
            try:
                resp = self._client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_exc = exc
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_exc = TransportError(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:500]}")
                else:
                    break
            if attempt + 1 < self.transport_retries:
                time.sleep(min(2.0**attempt, 30.0))
        else:
            raise TransportError(f"chat endpoint unreachable after {self.transport_retries} tries: {last_exc}")

        data = resp.json()
        if self.verbose:
            log.info("response body: %s", json.dumps(data, ensure_ascii=False))
        raw_usage = data.get("usage") or {}
        usage = {
            "prompt_tokens": int(raw_usage.get("prompt_tokens", 0)),
            "completion_tokens": int(raw_usage.get("completion_tokens", 0)),
        }
        try:
            content = data["choices"][0]["message"]["content"]
            answer = json.loads(content)
        except (KeyError, IndexError, TypeError, ValueError):
            return None, usage
        return (answer if isinstance(answer, dict) else None), usage

    def _score(self, keys, task: RankTask, attempt: int, retry: int) -> dict:
        answer, usage = self._post(score_prompt(keys, task), SCORE_FORMAT)
        values = answer.get("values") if answer else None
        if not isinstance(values, list) or len(values) != len(keys):
            return {"result": {"invalid": True, "reason": "value count mismatch"}, "usage": usage}
        try:
            values = [float(v) for v in values]
        except (TypeError, ValueError):
            return {"result": {"invalid": True, "reason": "non-numeric value"}, "usage": usage}
        if any(v != v or v in (float("inf"), float("-inf")) for v in values):
            return {"result": {"invalid": True, "reason": "non-finite value"}, "usage": usage}
        return {"result": {"values": values}, "usage": usage}

    def _compare(self, a: Key, b: Key, task: RankTask, retry: int) -> dict:
        answer, usage = self._post(compare_prompt(a, b, task), COMPARE_FORMAT)
        choice = str(answer.get("answer", "")).strip().upper() if answer else ""
        winner = {"A": "first", "B": "second"}.get(choice)
        return {"result": {"winner": winner}, "usage": usage}

    def _sort(self, keys, task: RankTask, retry: int) -> dict:
        answer, usage = self._post(sort_prompt(keys, task), SORT_FORMAT)
        labels = answer.get("ranking") if answer else None
        ids = []
        if isinstance(labels, list):
            for lab in labels:
                try:
                    idx = int(lab) - 1
                except (TypeError, ValueError):
                    continue
                if 0 <= idx < len(keys):
                    ids.append(keys[idx].id)
        return {"result": {"ids": ids}, "usage": usage}

    def close(self) -> None:
        self._client.close()
