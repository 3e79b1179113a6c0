"""Domain types, usage metering and the client-side response cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

log = logging.getLogger(__name__)

CACHE_ENV = "LLMORDERBY_CACHE"


class Direction(str, Enum):
    ASCENDING = "ascending"
    DESCENDING = "descending"


@dataclass(frozen=True)
class Key:
    """One sortable item.

    ``latent`` is the hidden ground-truth value. Only the simulated oracle
    and evaluation may read it; live prompts see ``text`` alone.
    """

    id: str
    text: str
    latent: Optional[float] = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("key id must be a non-empty string")
        if not isinstance(self.text, str) or not self.text:
            raise ValueError(f"key {self.id!r} has empty text")


@dataclass(frozen=True)
class RankTask:
    criterion: str
    direction: Direction = Direction.ASCENDING
    query: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.criterion:
            raise ValueError("criterion must be non-empty")
        object.__setattr__(self, "direction", Direction(self.direction))

    @property
    def descending(self) -> bool:
        return self.direction is Direction.DESCENDING

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "direction": self.direction.value, "query": self.query}


@dataclass(frozen=True)
class Ranking:
    """Key ids in output order, first element first."""

    ordered_ids: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "ordered_ids", tuple(self.ordered_ids))

    def __len__(self) -> int:
        return len(self.ordered_ids)

    def __iter__(self):
        return iter(self.ordered_ids)

    def is_permutation_of(self, ids: Iterable[str]) -> bool:
        ids = list(ids)
        return len(self.ordered_ids) == len(ids) and set(self.ordered_ids) == set(ids) and len(
            set(self.ordered_ids)
        ) == len(ids)


def check_unique_ids(keys: Sequence[Key]) -> None:
    seen = set()
    for k in keys:
        if k.id in seen:
            raise ValueError(f"duplicate key id {k.id!r}")
        seen.add(k.id)


class UsageMeter:
    """Thread-safe oracle cost counters.

    ``calls`` counts oracle invocations that reached the backend; cache hits
    are tallied separately in ``cache_hits`` and ``cached_tokens``. Child
    meters created with :meth:`phase` forward every addition to their parent.
    """

    def __init__(self, name: str = "total", parent: Optional["UsageMeter"] = None):
        self.name = name
        self.parent = parent
        self.calls = 0
        self.prompt_tokens = 0
        self.completion_tokens = 0
        self.cache_hits = 0
        self.cached_tokens = 0
        self._phases: dict[str, UsageMeter] = {}
        self._lock = threading.Lock()

    def add(
        self,
        calls: int = 0,
        prompt_tokens: int = 0,
        completion_tokens: int = 0,
        cache_hits: int = 0,
        cached_tokens: int = 0,
    ) -> "UsageMeter":
        if min(calls, prompt_tokens, completion_tokens, cache_hits, cached_tokens) < 0:
            raise ValueError("usage increments must be non-negative")
        with self._lock:
            self.calls += calls
            self.prompt_tokens += prompt_tokens
            self.completion_tokens += completion_tokens
            self.cache_hits += cache_hits
            self.cached_tokens += cached_tokens
        if self.parent is not None:
            self.parent.add(calls, prompt_tokens, completion_tokens, cache_hits, cached_tokens)
        return self

    def phase(self, name: str) -> "UsageMeter":
        with self._lock:
            child = self._phases.get(name)
            if child is None:
                child = self._phases[name] = UsageMeter(name, parent=self)
            return child

    @property
    def tokens(self) -> int:
        """Tokens billed by the backend (cache hits excluded)."""
        return self.prompt_tokens + self.completion_tokens

    @property
    def logical_tokens(self) -> int:
        """Tokens the algorithm asked for, whether or not the cache served them."""
        return self.tokens + self.cached_tokens

    def snapshot(self) -> tuple:
        return (self.calls, self.prompt_tokens, self.completion_tokens)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "calls": self.calls,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "cache_hits": self.cache_hits,
            "cached_tokens": self.cached_tokens,
        }
        if self._phases:
            out["phases"] = {k: v.to_dict() for k, v in self._phases.items()}
        return out

    def __repr__(self) -> str:
        return (
            f"UsageMeter(calls={self.calls}, prompt_tokens={self.prompt_tokens}, "
            f"completion_tokens={self.completion_tokens}, cache_hits={self.cache_hits})"
        )


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def request_digest(request: Mapping[str, Any]) -> str:
    return hashlib.sha256(canonical_json(request).encode("utf-8")).hexdigest()


class CacheUnavailable(RuntimeError):
    pass


class ResponseCache:
    """Digest-keyed response store.

    With ``path`` set, entries are appended to a JSONL file and reloaded on
    open; otherwise the cache lives in memory only. Stored responses are
    never evicted.
    """

    def __init__(self, path: Optional[os.PathLike | str] = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    @classmethod
    def from_env(cls) -> Optional["ResponseCache"]:
        path = os.environ.get(CACHE_ENV)
        return cls(path) if path else None

    def _load(self) -> None:
        try:
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                        self._entries.setdefault(rec["digest"], rec["response"])
                    except (ValueError, KeyError):
                        # a torn final line from an interrupted append is skipped
                        log.warning("cache %s: skipping corrupt line %d", self.path, lineno)
        except OSError as exc:
            raise CacheUnavailable(str(exc)) from exc

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def lookup(self, digest: str) -> Optional[str]:
        return self._entries.get(digest)

    def store(self, digest: str, response: str) -> str:
        """Store ``response`` unless ``digest`` is already present.

        Returns the response now associated with the digest, which is the
        earlier one when another thread stored first.
        """
        with self._lock:
            existing = self._entries.get(digest)
            if existing is not None:
                return existing
            if self.path is not None:
                try:
                    self.path.parent.mkdir(parents=True, exist_ok=True)
                    with open(self.path, "a", encoding="utf-8") as fh:
                        fh.write(json.dumps({"digest": digest, "response": response}, ensure_ascii=False) + "\n")
                except OSError as exc:
                    raise CacheUnavailable(str(exc)) from exc
            self._entries[digest] = response
            return response

    def overlay(self) -> "CacheOverlay":
        return CacheOverlay(self)

    def items(self) -> list:
        with self._lock:
            return list(self._entries.items())

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            if self.path is not None and self.path.exists():
                self.path.unlink()


class CacheOverlay(ResponseCache):
    """Private write layer over a shared cache.

    Reads fall through to ``base``; writes stay local until :meth:`commit`.
    Lets concurrent jobs see the same starting cache state, so their call
    counts do not depend on scheduling.
    """

    def __init__(self, base: ResponseCache):
        super().__init__()
        self.base = base

    def lookup(self, digest: str) -> Optional[str]:
        hit = self._entries.get(digest)
        return hit if hit is not None else self.base.lookup(digest)

    def store(self, digest: str, response: str) -> str:
        existing = self.base.lookup(digest)
        if existing is not None:
            return existing
        return super().store(digest, response)

    def commit(self) -> None:
        for digest, response in self.items():
            self.base.store(digest, response)


@dataclass
class Dataset:
    """Keys plus optional ground truth for one ordering problem.

    ``truth`` maps key id to a grade where smaller means earlier in the
    correct output (ties allowed). ``qrels`` maps key id to a relevance grade.
    """

    keys: list
    task: RankTask
    truth: Optional[dict] = None
    qrels: Optional[dict] = None
    name: str = "default"
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        check_unique_ids(self.keys)
        # qrels may judge documents outside the candidate list; they still
        # count toward the ideal DCG
        if self.truth is not None:
            extra = set(self.truth) - {k.id for k in self.keys}
            if extra:
                raise ValueError(f"truth references unknown ids: {sorted(extra)[:5]}")

    @property
    def ids(self) -> list:
        return [k.id for k in self.keys]
