"""Physical implementations of the ORDER BY operator over an oracle.

Every entry point returns a :class:`~llmorderby.core.Ranking` that is a
permutation of its input, whatever the oracle answers.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

from .core import Key, RankTask, Ranking, UsageMeter, check_unique_ids
from .oracle import CompareOutcome, InvalidOutput, Oracle

log = logging.getLogger(__name__)

DEFAULT_THETA = 0.6


@dataclass(frozen=True)
class BatchSizeSearchConfig:
    theta: float = DEFAULT_THETA
    max_size: int = 64
    initial: int = 2

    def __post_init__(self) -> None:
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if not self.max_size >= self.initial >= 2:
            raise ValueError("need max_size >= initial >= 2")


@dataclass(frozen=True)
class MergeSortConfig:
    batch_size: int

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def buffer_half(self) -> int:
        return max(self.batch_size // 2, 1)


@dataclass(frozen=True)
class VoteConfig:
    votes: int = 1

    def __post_init__(self) -> None:
        if self.votes < 1:
            raise ValueError("votes must be >= 1")


def _map(fn: Callable, items: list, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _chunks(seq: Sequence, size: int) -> list:
    return [list(seq[i : i + size]) for i in range(0, len(seq), size)]


def _rank_by_values(keys: Sequence[Key], values: Sequence[Optional[float]], task: RankTask) -> Ranking:
    # unscored keys (None) go last; ties keep input order
    sign = -1.0 if task.descending else 1.0
    order = sorted(
        range(len(keys)),
        key=lambda i: (values[i] is None, 0.0 if values[i] is None else sign * values[i], i),
    )
    return Ranking(keys[i].id for i in order)


def _score_one(key: Key, task: RankTask, oracle: Oracle, meter: UsageMeter) -> Optional[float]:
    try:
        return oracle.score_batch([key], task, meter)[0]
    except InvalidOutput as exc:
        log.warning("key %s could not be scored (%s); placing it last", key.id, exc)
        return None


def sort_pointwise(
    keys: Sequence[Key], task: RankTask, oracle: Oracle, meter: Optional[UsageMeter] = None
) -> Ranking:
    """Score each key with its own oracle call, then sort by value."""
    keys = list(keys)
    check_unique_ids(keys)
    meter = meter if meter is not None else UsageMeter()
    values = [_score_one(k, task, oracle, meter) for k in keys]
    return _rank_by_values(keys, values, task)


def values_agree(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=0.0)


def determine_batch_size(
    keys: Sequence[Key],
    task: RankTask,
    oracle: Oracle,
    cfg: BatchSizeSearchConfig = BatchSizeSearchConfig(),
    meter: Optional[UsageMeter] = None,
    trace: Optional[list] = None,
) -> int:
    """Grow the batch size while split and combined batches agree.

    Starting from ``cfg.initial``, score the first ``m`` keys, the next
    ``m`` keys, and the first ``2m`` keys together. If the fraction of keys
    whose value is the same in both answers reaches ``cfg.theta`` the batch
    size doubles; otherwise, or on any invalid answer, the search stops.

    Each round's first batch is the previous round's combined batch, so a
    cached oracle spends ``1 + 2 * rounds`` backend calls in total.
    Per-round details are appended to ``trace`` when given.
    """
    keys = list(keys)
    if len(keys) < 2:
        raise ValueError("batch size search needs at least two keys")
    meter = meter if meter is not None else UsageMeter()
    m = cfg.initial
    while 2 * m < len(keys) and m < cfg.max_size:
        first, second = keys[:m], keys[m : 2 * m]
        try:
            v1 = oracle.score_batch(first, task, meter)
            v2 = oracle.score_batch(second, task, meter)
            v3 = oracle.score_batch(first + second, task, meter)
        except InvalidOutput:
            if trace is not None:
                trace.append({"m": m, "alpha": None, "invalid": True})
            break
        alpha = agreement(v1 + v2, v3)
        if trace is not None:
            trace.append({"m": m, "alpha": alpha, "invalid": False})
        if alpha >= cfg.theta:
            m *= 2
        else:
            return m
    return m


def agreement(v12: Sequence[float], v3: Sequence[float]) -> float:
    if len(v12) != len(v3):
        raise ValueError("agreement needs equal-length value lists")
    if not v12:
        return 1.0
    return sum(values_agree(a, b) for a, b in zip(v12, v3)) / len(v12)


def sort_external_pointwise(
    keys: Sequence[Key],
    task: RankTask,
    oracle: Oracle,
    m: int,
    meter: Optional[UsageMeter] = None,
    workers: int = 1,
) -> Ranking:
    """Score consecutive chunks of ``m`` keys per oracle call, then sort.

    A chunk that comes back invalid is retried once, then scored key by key.
    """
    if m < 1:
        raise ValueError("batch size must be >= 1")
    keys = list(keys)
    check_unique_ids(keys)
    meter = meter if meter is not None else UsageMeter()

    def score_chunk(chunk: list) -> list:
        for attempt in (0, 1):
            try:
                return oracle.score_batch(chunk, task, meter, attempt=attempt)
            except InvalidOutput:
                pass
        if len(chunk) == 1:
            log.warning("key %s could not be scored; placing it last", chunk[0].id)
            return [None]
        return [_score_one(k, task, oracle, meter) for k in chunk]

    values = [v for chunk_values in _map(score_chunk, _chunks(keys, m), workers) for v in chunk_values]
    return _rank_by_values(keys, values, task)


def _peer_rng(seed: int, key_id: str) -> random.Random:
    h = hashlib.sha256(f"{seed}\x00{key_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


def sort_quicksort_mv(
    keys: Sequence[Key],
    task: RankTask,
    oracle: Oracle,
    cfg: VoteConfig = VoteConfig(),
    rng_seed: int = 0,
    meter: Optional[UsageMeter] = None,
) -> Ranking:
    """First-element-pivot quicksort whose partition step takes a vote.

    Each key is compared with the pivot, then with up to ``votes - 1`` keys
    sampled from the partition opposite that first answer. Beating a peer
    counts as a vote for the "before pivot" side, losing as a vote for
    "after". Ties go to the pivot comparison.
    """
    keys = list(keys)
    check_unique_ids(keys)
    meter = meter if meter is not None else UsageMeter()
    extra = cfg.votes - 1
    out: list = []
    # explicit stack: recursion depth is linear on adversarial inputs
    stack: list = [("sort", keys)]
    while stack:
        op, payload = stack.pop()
        if op == "emit":
            out.append(payload.id)
            continue
        items = payload
        if len(items) <= 1:
            out.extend(k.id for k in items)
            continue
        pivot = items[0]
        before: list = []
        after: list = []
        for x in items[1:]:
            first_vote = oracle.compare(x, pivot, task, meter) is CompareOutcome.FIRST
            tally = 1 if first_vote else -1
            pool = after if first_vote else before
            n_peers = min(extra, len(pool))
            if n_peers:
                for y in _peer_rng(rng_seed, x.id).sample(pool, n_peers):
                    tally += 1 if oracle.compare(x, y, task, meter) is CompareOutcome.FIRST else -1
            if tally > 0 or (tally == 0 and first_vote):
                before.append(x)
            else:
                after.append(x)
        stack.append(("sort", after))
        stack.append(("emit", pivot))
        stack.append(("sort", before))
    return Ranking(out)


def sort_external_bubble(
    keys: Sequence[Key],
    task: RankTask,
    oracle: Oracle,
    m: int,
    max_passes: Optional[int] = None,
    meter: Optional[UsageMeter] = None,
) -> Ranking:
    """Sliding-window listwise sort.

    A pass slides a window of ``m`` keys from the tail of the list to the
    head in steps of ``m // 2``, reordering each window with one listwise
    call, so strong keys are carried forward. Passes repeat until one
    changes nothing or ``max_passes`` (default ``ceil(2N/m)``) is reached.
    """
    if m < 2:
        raise ValueError("window size must be >= 2")
    order = list(keys)
    check_unique_ids(order)
    meter = meter if meter is not None else UsageMeter()
    n = len(order)
    if n <= 1:
        return Ranking(k.id for k in order)
    if m >= n:
        return _sort_window(order, task, oracle, meter)

    stride = max(m // 2, 1)
    starts = list(range(n - m, 0, -stride)) + [0]
    if max_passes is None:
        max_passes = math.ceil(2 * n / m)
    for _ in range(max_passes):
        changed = False
        for st in starts:
            window = order[st : st + m]
            by_id = {k.id: k for k in window}
            new = [by_id[i] for i in oracle.sort_batch(window, task, meter).permutation]
            if new != window:
                changed = True
                order[st : st + m] = new
        if not changed:
            break
    return Ranking(k.id for k in order)


def _sort_window(keys: list, task: RankTask, oracle: Oracle, meter: UsageMeter) -> Ranking:
    return Ranking(oracle.sort_batch(keys, task, meter).permutation)


def two_way_merge(
    run1: Sequence[Key],
    run2: Sequence[Key],
    cfg: MergeSortConfig,
    task: RankTask,
    oracle: Oracle,
    meter: Optional[UsageMeter] = None,
) -> list:
    """Merge two ordered runs through listwise calls on a small buffer.

    Each round buffers up to ``h = cfg.buffer_half`` keys from the head of
    each run, has the oracle order the buffer, and emits its answer until
    every buffered key of one side has been emitted. Emitted keys leave
    their run; the rest stay for the next round. Once a run is empty, the
    other is appended as is.
    """
    meter = meter if meter is not None else UsageMeter()
    h = cfg.buffer_half
    rest1, rest2 = list(run1), list(run2)
    out: list = []
    while rest1 or rest2:
        if not rest1 or not rest2:
            out.extend(rest1 or rest2)
            break
        take1, take2 = rest1[:h], rest2[:h]
        buffer = take1 + take2
        by_id = {k.id: k for k in buffer}
        side1 = {k.id for k in take1}
        emitted: set = set()
        e1 = e2 = 0
        for kid in oracle.sort_batch(buffer, task, meter).permutation:
            out.append(by_id[kid])
            emitted.add(kid)
            if kid in side1:
                e1 += 1
            else:
                e2 += 1
            if e1 == len(take1) or e2 == len(take2):
                break
        # a noisy answer may emit a run's keys out of run order, so drop the
        # emitted keys rather than advancing a cursor by count
        rest1 = [k for k in take1 if k.id not in emitted] + rest1[len(take1) :]
        rest2 = [k for k in take2 if k.id not in emitted] + rest2[len(take2) :]
    return out


def sort_external_merge(
    keys: Sequence[Key],
    task: RankTask,
    oracle: Oracle,
    cfg: MergeSortConfig,
    meter: Optional[UsageMeter] = None,
    workers: int = 1,
) -> Ranking:
    """Listwise external merge sort.

    Phase one sorts consecutive chunks of ``cfg.batch_size`` keys into runs
    (optionally on ``workers`` threads). Phase two merges neighbouring runs
    with :func:`two_way_merge`, carrying an odd last run to the next round.
    Usage is recorded under the ``run_generation`` and ``merge`` phases.
    """
    keys = list(keys)
    check_unique_ids(keys)
    if not keys:
        return Ranking(())
    meter = meter if meter is not None else UsageMeter()
    gen_meter = meter.phase("run_generation")
    merge_meter = meter.phase("merge")

    def make_run(chunk: list) -> list:
        by_id = {k.id: k for k in chunk}
        return [by_id[i] for i in oracle.sort_batch(chunk, task, gen_meter).permutation]

    runs = _map(make_run, _chunks(keys, cfg.batch_size), workers)
    while len(runs) > 1:
        merged = []
        for i in range(0, len(runs), 2):
            if i + 1 < len(runs):
                merged.append(two_way_merge(runs[i], runs[i + 1], cfg, task, oracle, merge_meter))
            else:
                merged.append(runs[i])
        runs = merged
    return Ranking(k.id for k in runs[0])


# -- registry -----------------------------------------------------------------


def _run_pointwise(keys, task, oracle, meter, params):
    return sort_pointwise(keys, task, oracle, meter.phase("scoring")), {}


def _run_external_pointwise(keys, task, oracle, meter, params):
    info: dict[str, Any] = {}
    m = params.get("m")
    if m is None:
        trace: list = []
        if len(keys) >= 2:
            cfg = BatchSizeSearchConfig(
                theta=params.get("theta", DEFAULT_THETA), max_size=params.get("max_size", 64)
            )
            m = determine_batch_size(keys, task, oracle, cfg, meter.phase("batch_size_search"), trace)
        else:
            m = 1
        info["batch_size_trace"] = trace
    info["m"] = m
    ranking = sort_external_pointwise(keys, task, oracle, m, meter.phase("scoring"), params.get("workers", 1))
    return ranking, info


def _run_quicksort(keys, task, oracle, meter, params):
    cfg = VoteConfig(params.get("votes", 1))
    return sort_quicksort_mv(keys, task, oracle, cfg, params.get("rng_seed", 0), meter.phase("comparisons")), {}


def _run_external_bubble(keys, task, oracle, meter, params):
    ranking = sort_external_bubble(
        keys, task, oracle, params.get("m", 4), params.get("max_passes"), meter.phase("windows")
    )
    return ranking, {}


def _run_external_merge(keys, task, oracle, meter, params):
    cfg = MergeSortConfig(params.get("m", 4))
    return sort_external_merge(keys, task, oracle, cfg, meter, params.get("workers", 1)), {}


REGISTRY: dict[str, Callable] = {
    "pointwise": _run_pointwise,
    "external-pointwise": _run_external_pointwise,
    "quicksort": _run_quicksort,
    "external-bubble": _run_external_bubble,
    "external-merge": _run_external_merge,
}

PARAMS = {
    "pointwise": set(),
    "external-pointwise": {"m", "theta", "max_size", "workers"},
    "quicksort": {"votes", "rng_seed"},
    "external-bubble": {"m", "max_passes"},
    "external-merge": {"m", "workers"},
}


def run_algorithm(
    name: str,
    keys: Sequence[Key],
    task: RankTask,
    oracle: Oracle,
    meter: Optional[UsageMeter] = None,
    **params: Any,
) -> tuple[Ranking, dict]:
    """Run a registered algorithm by name; returns ``(ranking, info)``."""
    try:
        runner = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(REGISTRY)}") from None
    unknown = {k for k, v in params.items() if v is not None} - PARAMS[name]
    if unknown:
        raise ValueError(f"{name} does not accept parameters {sorted(unknown)}")
    params = {k: v for k, v in params.items() if v is not None}
    meter = meter if meter is not None else UsageMeter()
    return runner(list(keys), task, oracle, meter, params)
