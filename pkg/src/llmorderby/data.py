"""Dataset ingestion and synthetic datasets.

Key files are JSONL (``{"id", "text", "latent"?}`` per line) or CSV with a
header ``id,text[,latent]``. Run and qrels files use the usual TREC
whitespace-separated layouts.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from collections import defaultdict
from pathlib import Path
from typing import Optional

from .core import Dataset, Direction, Key, RankTask
from .eval import QrelEntry

log = logging.getLogger(__name__)


class DataFormatError(ValueError):
    def __init__(self, path, lineno: Optional[int], message: str):
        where = f"{path}:{lineno}" if lineno is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.lineno = lineno


def _latent(raw, path, lineno):
    if raw is None or raw == "":
        return None
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise DataFormatError(path, lineno, f"latent {raw!r} is not a number") from None


def _make_key(rec: dict, path, lineno: int, seen: set) -> Key:
    kid, text = rec.get("id"), rec.get("text")
    if kid is None or text is None:
        raise DataFormatError(path, lineno, "record needs 'id' and 'text'")
    kid = str(kid)
    if kid in seen:
        raise DataFormatError(path, lineno, f"duplicate id {kid!r}")
    seen.add(kid)
    try:
        return Key(kid, str(text), _latent(rec.get("latent"), path, lineno))
    except ValueError as exc:
        raise DataFormatError(path, lineno, str(exc)) from None


def load_keys(path, fmt: Optional[str] = None) -> list:
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    seen: set = set()
    keys = []
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except ValueError as exc:
                    raise DataFormatError(path, lineno, f"invalid JSON ({exc})") from None
                if not isinstance(rec, dict):
                    raise DataFormatError(path, lineno, "expected a JSON object")
                keys.append(_make_key(rec, path, lineno, seen))
    elif fmt == "csv":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            if "id" not in header or "text" not in header:
                raise DataFormatError(path, 1, f"CSV header must contain id and text, got {header}")
            for rec in reader:
                keys.append(_make_key(rec, path, reader.line_num, seen))
    else:
        raise ValueError(f"unknown key format {fmt!r}")
    return keys


def write_keys(keys, path, fmt: Optional[str] = None) -> None:
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "jsonl")
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for k in keys:
                rec = {"id": k.id, "text": k.text}
                if k.latent is not None:
                    rec["latent"] = k.latent
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "text", "latent"])
            for k in keys:
                w.writerow([k.id, k.text, "" if k.latent is None else repr(k.latent)])
    else:
        raise ValueError(f"unknown key format {fmt!r}")


def load_trec_run(path, depth: int = 100) -> dict:
    """Per-query candidate ids in rank order, truncated to ``depth``."""
    rows = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise DataFormatError(path, lineno, f"expected 6 columns, got {len(parts)}")
            qid, _, docid, rank, score, _tag = parts
            try:
                rank_i = int(rank)
                score_f = float(score)
            except ValueError:
                raise DataFormatError(path, lineno, "rank must be an integer and score a number") from None
            rows[qid].append((rank_i, -score_f, lineno, docid))
    out = {}
    for qid, items in rows.items():
        items.sort()
        out[qid] = [docid for *_, docid in items][:depth]
    return out


def load_qrels(path) -> list:
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise DataFormatError(path, lineno, f"expected 4 columns, got {len(parts)}")
            qid, _, docid, grade = parts
            try:
                rel = int(grade)
            except ValueError:
                raise DataFormatError(path, lineno, f"grade {grade!r} is not an integer") from None
            if (qid, docid) in seen:
                raise DataFormatError(path, lineno, f"duplicate judgement for ({qid}, {docid})")
            seen.add((qid, docid))
            if rel < 0:
                log.warning("%s:%d: negative grade %d clamped to 0", path, lineno, rel)
                rel = 0
            entries.append(QrelEntry(qid, docid, rel))
    return entries


def qrels_by_query(entries) -> dict:
    out: dict = defaultdict(dict)
    for e in entries:
        out[e.query_id][e.key_id] = e.relevance
    return dict(out)


def load_queries(path) -> dict:
    """Query texts from a ``qid<TAB>text`` file."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            qid, sep, text = line.partition("\t")
            if not sep:
                raise DataFormatError(path, lineno, "expected qid<TAB>text")
            out[qid] = text
    return out


def dataset_from_keys(keys, task: RankTask, name: str = "default") -> Dataset:
    truth = None
    if keys and all(k.latent is not None for k in keys):
        sign = -1.0 if task.descending else 1.0
        truth = {k.id: sign * k.latent for k in keys}
    return Dataset(list(keys), task, truth=truth, name=name)


def load_reranking(
    run_path,
    passages_path,
    qrels_path=None,
    queries_path=None,
    depth: int = 100,
    criterion: str = "relevance of the passage to the query",
    latent_from_qrels: bool = False,
) -> list:
    """One :class:`Dataset` per query of a pre-retrieved candidate run.

    Passage texts come from a key file. With ``latent_from_qrels`` each key's
    latent is its relevance grade, which lets the simulated oracle stand in
    for a reranker.
    """
    run = load_trec_run(run_path, depth)
    passages = {k.id: k for k in load_keys(passages_path)}
    qrels = qrels_by_query(load_qrels(qrels_path)) if qrels_path else {}
    queries = load_queries(queries_path) if queries_path else {}
    datasets = []
    for qid, docids in run.items():
        missing = [d for d in docids if d not in passages]
        if missing:
            raise ValueError(f"query {qid}: no passage text for {missing[:5]}")
        judged = qrels.get(qid, {})
        keys = []
        for d in docids:
            k = passages[d]
            if latent_from_qrels:
                k = Key(k.id, k.text, float(judged.get(d, 0)))
            keys.append(k)
        task = RankTask(criterion, Direction.DESCENDING, queries.get(qid))
        datasets.append(Dataset(keys, task, qrels=judged if qrels_path else None, name=qid))
    return datasets


DISTRIBUTIONS = ("distinct", "ties", "clustered")


def generate_synthetic(
    n: int,
    distribution: str = "distinct",
    seed: int = 0,
    tie_rate: float = 0.2,
    criterion: str = "order by player height",
    direction: Direction = Direction.ASCENDING,
) -> Dataset:
    """Synthetic entities with hidden values, shuffled, deterministic in ``seed``.

    ``distinct`` draws unique values; ``ties`` repeats the previous value in
    sorted order with probability ``tie_rate``; ``clustered`` draws around a
    handful of centres.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = random.Random(seed)
    if distribution == "distinct":
        values = [v / 100.0 for v in rng.sample(range(15000, 15000 + max(50 * n, 1)), n)]
    elif distribution == "ties":
        values = []
        current = 150.0
        for i in range(n):
            if i == 0 or rng.random() >= tie_rate:
                current += rng.randint(1, 100) / 100.0
            values.append(round(current, 2))
        rng.shuffle(values)
    elif distribution == "clustered":
        centres = [rng.uniform(160.0, 220.0) for _ in range(max(1, n // 20))]
        values = [round(rng.choice(centres) + rng.gauss(0.0, 1.0), 2) for _ in range(n)]
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    ids = list(range(n))
    rng.shuffle(ids)
    keys = [Key(f"k{ids[i]}", f"Player_{ids[i]}", values[i]) for i in range(n)]
    ds = dataset_from_keys(keys, RankTask(criterion, direction), name=f"synthetic-{distribution}-{seed}")
    ds.meta.update({"n": n, "distribution": distribution, "seed": seed})
    if distribution == "ties":
        ds.meta["tie_rate"] = tie_rate
    return ds
