import json
import logging
import statistics

import pytest

from llmorderby import Key
from llmorderby.data import (
    DataFormatError,
    generate_synthetic,
    load_keys,
    load_qrels,
    load_reranking,
    load_trec_run,
    write_keys,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_jsonl(tmp_path):
    p = write(tmp_path / "k.jsonl", '{"id": "a", "text": "A"}\n\n{"id": "b", "text": "B", "latent": 2.5}\n')
    keys = load_keys(p)
    assert [k.id for k in keys] == ["a", "b"]
    assert keys[0].latent is None and keys[1].latent == 2.5


def test_load_csv_and_missing_header(tmp_path):
    p = write(tmp_path / "k.csv", "id,text,latent\na,Alpha,1\nb,Beta,\n")
    keys = load_keys(p)
    assert keys == [Key("a", "Alpha", 1.0), Key("b", "Beta", None)]
    bad = write(tmp_path / "bad.csv", "name,text\na,Alpha\n")
    with pytest.raises(DataFormatError, match="header"):
        load_keys(bad)


def test_load_errors_carry_line_numbers(tmp_path):
    p = write(tmp_path / "k.jsonl", '{"id": "a", "text": "A"}\n{"id": "a", "text": "again"}\n')
    with pytest.raises(DataFormatError, match=r"k.jsonl:2: duplicate"):
        load_keys(p)
    p = write(tmp_path / "j.jsonl", '{"id": "a", "text": "A"}\nnot json\n')
    with pytest.raises(DataFormatError, match=r":2:"):
        load_keys(p)
    p = write(tmp_path / "c.csv", "id,text\na,A\na,B\n")
    with pytest.raises(DataFormatError, match=r":3: duplicate"):
        load_keys(p)


@pytest.mark.parametrize("suffix", [".jsonl", ".csv"])
def test_roundtrip(tmp_path, suffix):
    keys = generate_synthetic(25, "ties", seed=3).keys + [Key("x,1", 'quote "and" comma, ünïcode')]
    path = tmp_path / f"keys{suffix}"
    write_keys(keys, path)
    assert load_keys(path) == keys


def test_trec_run(tmp_path):
    p = write(
        tmp_path / "run.txt",
        "q1 Q0 d3 3 7.0 bm25\nq2 Q0 e1 1 9.0 bm25\nq1 Q0 d1 1 9.5 bm25\nq2 Q0 e2 2 8.0 bm25\nq1 Q0 d2 2 8.1 bm25\n",
    )
    run = load_trec_run(p)
    assert run == {"q1": ["d1", "d2", "d3"], "q2": ["e1", "e2"]}
    assert load_trec_run(p, depth=2)["q1"] == ["d1", "d2"]
    bad = write(tmp_path / "bad.txt", "q1 Q0 d1 1 9.0 bm25\nq1 d2 2 8.0\n")
    with pytest.raises(DataFormatError, match=":2:"):
        load_trec_run(bad)


def test_qrels(tmp_path, caplog):
    p = write(tmp_path / "qrels.txt", "q1 0 d7 3\nq1 0 d8 -1\n")
    with caplog.at_level(logging.WARNING):
        entries = load_qrels(p)
    assert (entries[0].query_id, entries[0].key_id, entries[0].relevance) == ("q1", "d7", 3)
    assert entries[1].relevance == 0 and "clamped" in caplog.text
    dup = write(tmp_path / "dup.txt", "q1 0 d7 3\nq1 0 d7 1\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        load_qrels(dup)


def test_load_reranking(tmp_path):
    run = write(tmp_path / "run.txt", "q1 Q0 p2 1 2.0 t\nq1 Q0 p1 2 1.0 t\nq2 Q0 p3 1 1.0 t\n")
    passages = write(
        tmp_path / "p.jsonl",
        "\n".join(json.dumps({"id": f"p{i}", "text": f"passage {i}"}) for i in range(1, 4)),
    )
    qrels = write(tmp_path / "qrels.txt", "q1 0 p1 2\nq1 0 p9 3\n")
    queries = write(tmp_path / "q.tsv", "q1\twhat is p\nq2\tother\n")
    ds = load_reranking(run, passages, qrels, queries, latent_from_qrels=True)
    assert [d.name for d in ds] == ["q1", "q2"]
    assert ds[0].ids == ["p2", "p1"] and ds[0].task.query == "what is p" and ds[0].task.descending
    assert [k.latent for k in ds[0].keys] == [0.0, 2.0]
    assert ds[0].qrels == {"p1": 2, "p9": 3} and ds[1].qrels == {}


def test_synthetic_basics():
    assert generate_synthetic(0).keys == []
    a, b = generate_synthetic(50, seed=4), generate_synthetic(50, seed=4)
    assert a.keys == b.keys and a.truth == b.truth
    assert a.keys != generate_synthetic(50, seed=5).keys
    assert len({k.latent for k in a.keys}) == 50
    assert all(str(k.latent) not in k.text for k in a.keys)
    assert set(a.truth) == set(a.ids)
    assert len(generate_synthetic(40, "clustered", seed=1).keys) == 40


def test_synthetic_tie_rate():
    rates = []
    for seed in range(40):
        ds = generate_synthetic(100, "ties", seed=seed, tie_rate=0.2)
        vals = sorted(k.latent for k in ds.keys)
        rates.append(sum(x == y for x, y in zip(vals, vals[1:])) / 99)
    assert statistics.mean(rates) == pytest.approx(0.2, abs=0.03)
