from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Optional, Sequence

from ..core import CacheUnavailable, Key, RankTask, ResponseCache, UsageMeter, canonical_json, request_digest

log = logging.getLogger(__name__)


class InvalidOutput(Exception):
    """The oracle answered, but not with a usable value list."""


class CompareOutcome(str, Enum):
    FIRST = "first"
    SECOND = "second"


@dataclass(frozen=True)
class BatchSortResult:
    permutation: tuple
    valid: bool


@dataclass(frozen=True)
class TokenCostModel:
    prompt_tokens_per_key: int = 30
    prompt_overhead: int = 60
    completion_tokens_per_key: int = 8

    def __post_init__(self) -> None:
        if min(self.prompt_tokens_per_key, self.prompt_overhead, self.completion_tokens_per_key) < 0:
            raise ValueError("token costs must be non-negative")

    def cost(self, n_keys: int) -> tuple[int, int]:
        return (
            self.prompt_overhead + n_keys * self.prompt_tokens_per_key,
            n_keys * self.completion_tokens_per_key,
        )


def repair_permutation(raw: Sequence[str], expected: Sequence[str]) -> list:
    """Coerce an oracle's id list into a permutation of ``expected``.

    Unknown ids are dropped, repeated ids keep their first occurrence and
    missing ids are appended in ``expected`` order.
    """
    allowed = set(expected)
    seen: set = set()
    out = []
    for x in raw:
        if x in allowed and x not in seen:
            seen.add(x)
            out.append(x)
    out.extend(x for x in expected if x not in seen)
    return out


def is_permutation(raw: Sequence[str], expected: Sequence[str]) -> bool:
    return len(raw) == len(expected) and set(raw) == set(expected) and len(set(raw)) == len(raw)


class Oracle:
    """Value, comparison and listwise-sort capabilities over one backend.

    Subclasses implement ``_score``, ``_compare`` and ``_sort``; each returns
    a payload ``{"result": ..., "usage": {"prompt_tokens", "completion_tokens"}}``.
    This class handles caching, metering and retries so both backends share
    identical accounting.

    Comparison and sort results are already oriented by ``task.direction``:
    ``FIRST`` means the first key belongs earlier in the output. Scores are
    raw values; callers orient them.
    """

    kind = "base"
    #: extra attempts on malformed output
    retries = 0

    def __init__(self, cache: Optional[ResponseCache] = None, max_window: Optional[int] = None):
        self.cache = cache
        self.max_window = max_window

    # identity of the backend configuration; part of every cache digest
    def describe(self) -> dict:
        return {}

    def _key_payload(self, key: Key) -> list:
        return [key.id, key.text]

    def _request(self, op: str, keys: Sequence[Key], task: RankTask, **params: Any) -> dict:
        return {
            "oracle": self.kind,
            "model": self.describe(),
            "op": op,
            "task": task.to_dict(),
            "keys": [self._key_payload(k) for k in keys],
            "params": params,
        }

    def _cached(self, request: dict, meter: Optional[UsageMeter], compute: Callable[[], dict]) -> dict:
        meter = meter if meter is not None else UsageMeter()
        cache = self.cache
        if cache is not None:
            digest = request_digest(request)
            hit = cache.lookup(digest)
            if hit is not None:
                payload = json.loads(hit)
                usage = payload.get("usage", {})
                meter.add(
                    cache_hits=1,
                    cached_tokens=usage.get("prompt_tokens", 0) + usage.get("completion_tokens", 0),
                )
                return payload
        payload = compute()
        usage = payload.get("usage", {})
        meter.add(
            calls=1,
            prompt_tokens=usage.get("prompt_tokens", 0),
            completion_tokens=usage.get("completion_tokens", 0),
        )
        if cache is not None:
            try:
                # a concurrent identical request may have landed first; keep its answer
                payload = json.loads(cache.store(digest, canonical_json(payload)))
            except CacheUnavailable as exc:
                log.warning("response cache unavailable, continuing uncached: %s", exc)
                self.cache = None
        return payload

    def score_batch(
        self, keys: Sequence[Key], task: RankTask, meter: Optional[UsageMeter] = None, attempt: int = 0
    ) -> list:
        """One value per key, in request order. Raises :class:`InvalidOutput`."""
        keys = list(keys)
        if not keys:
            raise ValueError("score_batch needs at least one key")
        reason = "no response"
        for retry in range(self.retries + 1):
            req = self._request("score", keys, task, attempt=attempt, retry=retry)
            payload = self._cached(req, meter, lambda: self._score(keys, task, attempt, retry))
            result = payload["result"]
            values = result.get("values")
            if values is not None and len(values) == len(keys):
                return [float(v) for v in values]
            reason = result.get("reason", f"expected {len(keys)} values")
        raise InvalidOutput(reason)

    def compare(self, a: Key, b: Key, task: RankTask, meter: Optional[UsageMeter] = None) -> CompareOutcome:
        if a.id == b.id:
            raise ValueError("cannot compare a key with itself")
        for retry in range(self.retries + 1):
            req = self._request("compare", [a, b], task, retry=retry)
            payload = self._cached(req, meter, lambda: self._compare(a, b, task, retry))
            winner = payload["result"].get("winner")
            if winner in ("first", "second"):
                return CompareOutcome(winner)
        log.warning("comparison %s vs %s failed; defaulting to first", a.id, b.id)
        return CompareOutcome.FIRST

    def sort_batch(
        self,
        keys: Sequence[Key],
        task: RankTask,
        meter: Optional[UsageMeter] = None,
        repair: bool = True,
    ) -> BatchSortResult:
        keys = list(keys)
        if not keys:
            raise ValueError("sort_batch needs at least one key")
        if self.max_window is not None and len(keys) > self.max_window:
            raise ValueError(f"window of {len(keys)} keys exceeds maximum {self.max_window}")
        expected = [k.id for k in keys]
        raw: list = []
        for retry in range(self.retries + 1):
            req = self._request("sort", keys, task, retry=retry)
            payload = self._cached(req, meter, lambda: self._sort(keys, task, retry))
            raw = list(payload["result"].get("ids") or [])
            if is_permutation(raw, expected):
                return BatchSortResult(tuple(raw), True)
        if not repair:
            raise InvalidOutput(f"sort response is not a permutation of {len(expected)} ids")
        return BatchSortResult(tuple(repair_permutation(raw, expected)), False)

    def _score(self, keys: list, task: RankTask, attempt: int, retry: int) -> dict:
        raise NotImplementedError

    def _compare(self, a: Key, b: Key, task: RankTask, retry: int) -> dict:
        raise NotImplementedError

    def _sort(self, keys: list, task: RankTask, retry: int) -> dict:
        raise NotImplementedError
