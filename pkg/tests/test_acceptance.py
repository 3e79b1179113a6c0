"""Acceptance suite.

Each test carries ``@pytest.mark.acceptance(n, label)``; the conftest hook
prints one PASS/FAIL line per criterion at the end of the session.
Run alone with ``pytest tests/test_acceptance.py``.
"""

import math
import random
import statistics
import time
from itertools import permutations

import numpy as np
import pytest

import llmorderby.algorithms as alg
from llmorderby import Key, RankTask, ResponseCache, SimulatedOracle, UsageMeter
from llmorderby.algorithms import (
    BatchSizeSearchConfig,
    MergeSortConfig,
    VoteConfig,
    determine_batch_size,
    run_algorithm,
    sort_external_merge,
    sort_external_pointwise,
    sort_pointwise,
    sort_quicksort_mv,
)
from llmorderby.data import generate_synthetic
from llmorderby.eval import SweepPoint, fit_log_linear, kendall_tau_b, ndcg_at_k
from llmorderby.oracle import ZERO_NOISE, NoiseModel

ASC = RankTask("order by height")

# (algorithm, params) pairs covering the five access paths
ZERO_NOISE_CONFIGS = [
    ("pointwise", {}),
    ("external-pointwise", {}),
    ("external-pointwise", {"m": 8}),
    ("quicksort", {"votes": 1}),
    ("quicksort", {"votes": 3}),
    ("external-bubble", {"m": 8}),
    ("external-merge", {"m": 8}),
]

SMALL_N_CONFIGS = [
    ("pointwise", {}),
    ("external-pointwise", {}),
    ("external-pointwise", {"m": 2}),
    ("quicksort", {"votes": 1}),
    ("quicksort", {"votes": 3}),
    ("external-bubble", {"m": 2}),
    ("external-bubble", {"m": 4}),
    ("external-merge", {"m": 1}),
    ("external-merge", {"m": 2}),
    ("external-merge", {"m": 4}),
]


def _keys(latents):
    return [Key(f"k{i}", f"item {i}", float(v)) for i, v in enumerate(latents)]


def _brute_force_sorted(keys):
    # the unique arrangement whose latents never decrease
    for cand in permutations(keys):
        if all(a.latent < b.latent for a, b in zip(cand, cand[1:])):
            return [k.id for k in cand]
    raise AssertionError("latents are not distinct")


@pytest.mark.acceptance(1, "zero-noise exactness, 5 algorithms x 20 shuffles, N=100, < 10 s")
def test_zero_noise_exactness():
    base = generate_synthetic(100, seed=7)
    assert len({k.latent for k in base.keys}) == 100
    start = time.perf_counter()
    worst = 1.0
    for seed in range(20):
        keys = list(base.keys)
        random.Random(seed).shuffle(keys)
        for name, params in ZERO_NOISE_CONFIGS:
            oracle = SimulatedOracle(ZERO_NOISE, cache=ResponseCache())
            ranking, _ = run_algorithm(name, keys, base.task, oracle, **params)
            tau = kendall_tau_b(ranking.ordered_ids, base.truth)
            worst = min(worst, tau)
            assert tau == 1.0, (name, params, seed, tau)
    elapsed = time.perf_counter() - start
    assert worst == 1.0
    assert elapsed < 10.0, elapsed


@pytest.mark.acceptance(2, "small-n equivalence with brute-force sort, all 873 orderings of n=1..6")
def test_small_n_equivalence():
    orderings = 0
    for n in range(1, 7):
        latents = random.Random(n).sample(range(1, 1000), n)
        keys = _keys(latents)
        expected = _brute_force_sorted(keys)
        for perm in permutations(keys):
            orderings += 1
            for name, params in SMALL_N_CONFIGS:
                ranking, _ = run_algorithm(name, list(perm), ASC, SimulatedOracle(), **params)
                assert list(ranking.ordered_ids) == expected, (name, params, [k.id for k in perm])
    assert orderings == 873


@pytest.mark.acceptance(3, "call-count contracts on N=100, exact")
def test_call_counts(monkeypatch):
    ds = generate_synthetic(100, seed=3)

    meter = UsageMeter()
    sort_pointwise(ds.keys, ds.task, SimulatedOracle(), meter=meter)
    assert meter.calls == 100

    meter = UsageMeter()
    sort_external_pointwise(ds.keys, ds.task, SimulatedOracle(), m=8, meter=meter)
    assert meter.calls == 13

    meter = UsageMeter()
    trace: list = []
    chosen = determine_batch_size(
        ds.keys, ds.task, SimulatedOracle(cache=ResponseCache()), BatchSizeSearchConfig(max_size=64), meter, trace
    )
    assert chosen == 64
    assert meter.calls == 1 + 2 * 5

    # every two-way merge stays within its buffer-call bound
    real_merge = alg.two_way_merge
    checked = []

    def watched(run1, run2, cfg, task, oracle, meter=None):
        local = UsageMeter()
        out = real_merge(run1, run2, cfg, task, oracle, local)
        if meter is not None:
            meter.add(local.calls, local.prompt_tokens, local.completion_tokens)
        if run1 and run2:
            bound = math.ceil((len(run1) + len(run2)) / cfg.buffer_half) + 1
            checked.append((local.calls, bound))
        return out

    monkeypatch.setattr(alg, "two_way_merge", watched)
    for m in (2, 4, 8, 16):
        for noise in (ZERO_NOISE, NoiseModel(perm_swap_rate=0.1, invalid_prob=0.1, seed=m)):
            sort_external_merge(ds.keys, ds.task, SimulatedOracle(noise), MergeSortConfig(m))
    assert checked
    assert all(calls <= bound for calls, bound in checked), [c for c in checked if c[0] > c[1]]


@pytest.mark.acceptance(4, "quicksort vote=3 mean tau-b >= vote=1, flip 0.1, N=100, 50 seeds, < 2 min")
def test_majority_vote_benefit():
    start = time.perf_counter()
    taus = {1: [], 3: []}
    for seed in range(50):
        ds = generate_synthetic(100, seed=seed)
        oracle = SimulatedOracle(NoiseModel(flip_prob=0.1, seed=seed))
        for votes in taus:
            ranking = sort_quicksort_mv(ds.keys, ds.task, oracle, VoteConfig(votes), rng_seed=seed)
            taus[votes].append(kendall_tau_b(ranking.ordered_ids, ds.truth))
    gain = statistics.mean(taus[3]) - statistics.mean(taus[1])
    print(f"mean tau-b vote=1 {statistics.mean(taus[1]):.4f} vote=3 {statistics.mean(taus[3]):.4f}")
    assert gain >= 0, gain
    assert time.perf_counter() - start < 120


@pytest.mark.acceptance(5, "batch-size search returns B* for B* in {4, 8, 16}, trace-verified")
@pytest.mark.parametrize("b_star", [4, 8, 16])
def test_batch_size_search(b_star):
    ds = generate_synthetic(100, seed=b_star)
    noise = NoiseModel(value_sigma=5.0, noise_free_batch=b_star, seed=11)
    cfg = BatchSizeSearchConfig(theta=0.6, max_size=64)
    trace: list = []
    chosen = determine_batch_size(ds.keys, ds.task, SimulatedOracle(noise, cache=ResponseCache()), cfg, trace=trace)
    assert chosen == b_star
    sizes = [t["m"] for t in trace]
    assert sizes == [2 ** i for i in range(1, len(sizes) + 1)]
    # the last probe splits B* keys off a combined batch of 2 * B*, which is noisy
    assert sizes[-1] == b_star
    assert all(t["alpha"] >= cfg.theta for t in trace[:-1])
    assert trace[-1]["alpha"] < cfg.theta


def _exhaustive_tau_b(pred, grade):
    pos = {k: i for i, k in enumerate(pred)}
    items = list(pred)
    conc = disc = tx = ty = 0
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            a, b = items[i], items[j]
            dx = pos[a] - pos[b]
            dy = grade[a] - grade[b]
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif (dx > 0) == (dy > 0):
                conc += 1
            else:
                disc += 1
    denom = math.sqrt((conc + disc + tx) * (conc + disc + ty))
    return (conc - disc) / denom if denom else float("nan")


@pytest.mark.acceptance(6, "tau-b exact vs exhaustive counting n<=6; nDCG@3 example within 1e-9")
def test_metric_oracles():
    for n in range(2, 7):
        ids = [f"d{i}" for i in range(n)]
        gradings = [{d: i for i, d in enumerate(ids)}, {d: i // 2 for i, d in enumerate(ids)}]
        for grade in gradings:
            for perm in permutations(ids):
                got, want = kendall_tau_b(list(perm), grade), _exhaustive_tau_b(perm, grade)
                assert got == want or (math.isnan(got) and math.isnan(want))
    rels = [0, 3, 2]
    qrels = {f"d{i}": r for i, r in enumerate(rels)}
    dcg = sum((2 ** r - 1) / math.log2(i + 2) for i, r in enumerate(rels))
    idcg = sum((2 ** r - 1) / math.log2(i + 2) for i, r in enumerate(sorted(rels, reverse=True)))
    got = ndcg_at_k(["d0", "d1", "d2"], qrels, k=3)
    assert abs(got - dcg / idcg) <= 1e-9
    assert abs(got - 0.6653) < 1e-4


@pytest.mark.acceptance(7, "log-linear fit recovers c0, c1 within 0.02 and r^2 > 0.95 (50 points, sd 0.01)")
def test_log_linear_recovery():
    rng = np.random.default_rng(2024)
    for c0, c1 in [(0.1, 0.05), (-0.3, 0.08), (0.5, 0.02)]:
        tokens = np.exp(rng.uniform(np.log(1e3), np.log(1e7), size=50))
        quality = c0 + c1 * np.log(tokens) + rng.normal(0.0, 0.01, size=50)
        fit = fit_log_linear([SweepPoint(float(t), float(q), f"p{i}") for i, (t, q) in enumerate(zip(tokens, quality))])
        assert abs(fit.intercept - c0) <= 0.02
        assert abs(fit.slope - c1) <= 0.02
        assert fit.r_squared > 0.95


@pytest.mark.acceptance(8, "external-merge mean tau-b m=16 <= m=8 with window-scaled swap noise, 20 seeds")
def test_degradation_trend():
    taus = {8: [], 16: []}
    for seed in range(20):
        ds = generate_synthetic(100, seed=seed)
        oracle = SimulatedOracle(NoiseModel(perm_swap_rate=0.05, swap_ref_size=8, seed=seed))
        for m in taus:
            ranking = sort_external_merge(ds.keys, ds.task, oracle, MergeSortConfig(m))
            taus[m].append(kendall_tau_b(ranking.ordered_ids, ds.truth))
    print(f"mean tau-b m=8 {statistics.mean(taus[8]):.4f} m=16 {statistics.mean(taus[16]):.4f}")
    assert statistics.mean(taus[16]) <= statistics.mean(taus[8])


@pytest.mark.acceptance(9, "1000 randomized fuzz trials (N<=64) yield valid permutations and terminate")
def test_permutation_safety_fuzz():
    rng = random.Random(99)
    names = list(alg.REGISTRY)
    for trial in range(1000):
        n = rng.randint(0, 64)
        dist = rng.choice(["distinct", "ties", "clustered"])
        ds = generate_synthetic(n, distribution=dist, seed=trial)
        noise = NoiseModel(
            flip_prob=rng.choice([0.0, 0.1, 0.3, 0.5]),
            value_sigma=rng.choice([0.0, 1.0, 10.0]),
            invalid_prob=rng.choice([0.0, 0.1, 0.5, 1.0]),
            perm_swap_rate=rng.choice([0.0, 0.1, 0.5]),
            seed=trial,
        )
        name = rng.choice(names)
        params: dict = {}
        if name == "external-pointwise" and rng.random() < 0.5:
            params["m"] = rng.choice([1, 2, 5, 8, 64])
        elif name == "external-bubble":
            params["m"] = rng.choice([2, 3, 4, 8, 16, 100])
        elif name == "external-merge":
            params["m"] = rng.choice([1, 2, 3, 4, 8, 16, 100])
        if name == "quicksort":
            params.update(votes=rng.choice([1, 2, 3, 5]), rng_seed=trial)
        oracle = SimulatedOracle(noise, cache=rng.choice([None, ResponseCache()]))
        ranking, _ = run_algorithm(name, ds.keys, ds.task, oracle, **params)
        assert ranking.is_permutation_of(ds.ids), (trial, name, params)
