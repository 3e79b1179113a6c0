"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from . import __version__, _kernels
from .algorithms import DEFAULT_THETA, PARAMS, REGISTRY, BatchSizeSearchConfig, determine_batch_size, run_algorithm
from .core import CACHE_ENV, Direction, RankTask, ResponseCache, UsageMeter
from .data import DISTRIBUTIONS, dataset_from_keys, generate_synthetic, load_keys, load_reranking, write_keys
from .eval import InsufficientData, SweepPoint, fit_log_linear, kendall_tau_b, ndcg_at_k
from .oracle import LiveOracle, NoiseModel, SimulatedOracle, TokenCostModel

log = logging.getLogger("llmorderby")


class UsageError(Exception):
    pass


# -- shared argument groups ---------------------------------------------------


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--data", help="key file (.jsonl or .csv)")
    g.add_argument("--criterion", default="order by the hidden attribute", help="ordering criterion text")
    g.add_argument("--direction", choices=[d.value for d in Direction], default="ascending")
    g.add_argument("--query", help="query text shown with every prompt")
    g.add_argument("--run", help="TREC run file of pre-retrieved candidates")
    g.add_argument("--passages", help="key file holding candidate texts (with --run)")
    g.add_argument("--qrels", help="TREC qrels file")
    g.add_argument("--queries", help="qid<TAB>text file (with --run)")
    g.add_argument("--depth", type=int, default=100, help="candidates per query (default 100)")
    g.add_argument(
        "--latent-from-qrels",
        action="store_true",
        help="use relevance grades as latent values so the simulated oracle can rerank",
    )


def _add_oracle_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("oracle")
    g.add_argument("--oracle", choices=["sim", "live"], default="sim")
    g.add_argument("--seed", type=int, default=0, help="noise seed and sampling seed")
    g.add_argument("--flip-prob", type=float, default=0.0)
    g.add_argument("--value-sigma", type=float, default=0.0)
    g.add_argument("--invalid-prob", type=float, default=0.0)
    g.add_argument("--swap-rate", type=float, default=0.0, help="adjacent swap rate in listwise answers")
    g.add_argument("--swap-ref-size", type=int, help="scale the swap rate by window size / this")
    g.add_argument("--noise-free-batch", type=int, default=0, help="score batches up to this size are noiseless")
    g.add_argument("--value-decimals", type=int, help="round simulated values")
    g.add_argument("--prompt-overhead", type=int, default=60)
    g.add_argument("--prompt-tokens-per-key", type=int, default=30)
    g.add_argument("--completion-tokens-per-key", type=int, default=8)
    g.add_argument("--model", default=os.environ.get("LLMORDERBY_MODEL", "gpt-4o-mini"))
    g.add_argument("--base-url", help="chat-completion base URL (live oracle)")
    g.add_argument("--temperature", type=float, default=0.0)
    g.add_argument("--max-window", type=int, help="largest listwise window the oracle accepts")
    g.add_argument("--verbose", action="store_true", help="log live request and response bodies")
    g.add_argument("--cache", default=os.environ.get(CACHE_ENV), help=f"response cache file (env {CACHE_ENV})")
    g.add_argument("--no-cache", action="store_true", help="disable the response cache")


def _add_algo_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("algorithm")
    g.add_argument("--m", type=int, help="batch / window size")
    g.add_argument("--votes", type=int, help="quicksort votes per partition decision")
    g.add_argument("--max-passes", type=int, help="external bubble pass limit")
    g.add_argument("--theta", type=float, help="batch-size agreement threshold")
    g.add_argument("--max-size", type=int, help="batch-size search limit")
    g.add_argument("--workers", type=int, help="parallel oracle calls where allowed")


# -- builders -------------------------------------------------------------------


def build_oracle(args) -> tuple:
    cache = None
    if not args.no_cache:
        cache = ResponseCache(args.cache) if args.cache else ResponseCache()
    if args.oracle == "sim":
        try:
            noise = NoiseModel(
                flip_prob=args.flip_prob,
                value_sigma=args.value_sigma,
                invalid_prob=args.invalid_prob,
                perm_swap_rate=args.swap_rate,
                seed=args.seed,
                swap_ref_size=args.swap_ref_size,
                noise_free_batch=args.noise_free_batch,
                value_decimals=args.value_decimals,
            )
            cost = TokenCostModel(args.prompt_tokens_per_key, args.prompt_overhead, args.completion_tokens_per_key)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        oracle = SimulatedOracle(noise, cost, cache=cache, max_window=args.max_window)
        desc = {"kind": "sim", **oracle.describe()}
    else:
        oracle = LiveOracle(
            args.model,
            base_url=args.base_url,
            temperature=args.temperature,
            cache=cache,
            max_window=args.max_window,
            verbose=args.verbose,
        )
        desc = {"kind": "live", **oracle.describe()}
    desc["cache"] = None if cache is None else (str(cache.path) if cache.path else "memory")
    return oracle, desc


def load_datasets(args) -> list:
    if args.data and args.run:
        raise UsageError("give either --data or --run, not both")
    if args.data:
        task = RankTask(args.criterion, Direction(args.direction), args.query)
        return [dataset_from_keys(load_keys(args.data), task, name=Path(args.data).stem)]
    if args.run:
        if not args.passages:
            raise UsageError("--run needs --passages")
        return load_reranking(
            args.run,
            args.passages,
            args.qrels,
            args.queries,
            depth=args.depth,
            latent_from_qrels=args.latent_from_qrels,
        )
    raise UsageError("no dataset: pass --data or --run/--passages")


def _check_latents(datasets, oracle_kind: str) -> None:
    if oracle_kind != "sim":
        return
    for ds in datasets:
        if any(k.latent is None for k in ds.keys):
            raise UsageError(
                f"dataset {ds.name}: the simulated oracle needs latent values "
                "(add a latent column or use --latent-from-qrels)"
            )


def _algo_params(args) -> dict:
    return {k: getattr(args, k) for k in ("m", "votes", "max_passes", "theta", "max_size", "workers")}


def _parse_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_grid_entry(entry: str) -> tuple:
    """``"external-merge:m=8"`` -> ``("external-merge", {"m": 8})``."""
    name, _, rest = entry.partition(":")
    name = name.strip()
    if name not in REGISTRY:
        raise UsageError(f"unknown algorithm {name!r} in grid entry {entry!r}")
    params = {}
    for part in filter(None, (s.strip() for s in rest.split(","))):
        k, eq, v = part.partition("=")
        if not eq:
            raise UsageError(f"bad parameter {part!r} in grid entry {entry!r}")
        params[k.strip().replace("-", "_")] = _parse_value(v.strip())
    unknown = set(params) - PARAMS[name]
    if unknown:
        raise UsageError(f"{name} does not accept {sorted(unknown)}")
    return name, params


def _sum_phases(per_query) -> dict:
    totals: dict = {}
    for q in per_query:
        for name, usage in q["usage"].get("phases", {}).items():
            acc = totals.setdefault(name, dict.fromkeys(usage, 0))
            for field, v in usage.items():
                if field != "phases":
                    acc[field] = acc.get(field, 0) + v
    return totals


def _sort_all(datasets, algo: str, params: dict, oracle, seed: int) -> tuple:
    meter = UsageMeter()
    per_query = []
    if algo == "quicksort":
        params = {"rng_seed": seed, **params}
    for ds in datasets:
        qmeter = UsageMeter(parent=meter)
        try:
            ranking, info = run_algorithm(algo, ds.keys, ds.task, oracle, qmeter, **params)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        per_query.append({"name": ds.name, "ranking": list(ranking), "usage": qmeter.to_dict(), "info": info})
    return per_query, meter


def _quality(ds, ranking, metric: str, k: int) -> float:
    if metric == "tau":
        if ds.truth is None:
            raise UsageError(f"dataset {ds.name} has no ground truth for tau (keys need latents)")
        return kendall_tau_b(ranking, ds.truth)
    if ds.qrels is None:
        raise UsageError(f"dataset {ds.name} has no qrels for ndcg")
    return ndcg_at_k(ranking, ds.qrels, k)


def _default_metric(datasets) -> str:
    return "ndcg" if all(ds.qrels is not None for ds in datasets) else "tau"


def _mean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def _dataset_echo(args) -> dict:
    fields = ("data", "criterion", "direction", "query", "run", "passages", "qrels", "queries", "depth")
    return {f: getattr(args, f) for f in fields} | {"latent_from_qrels": args.latent_from_qrels}


# -- commands ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    ds = generate_synthetic(args.n, args.distribution, args.seed, tie_rate=args.tie_rate)
    write_keys(ds.keys, args.out)
    print(f"wrote {len(ds.keys)} keys to {args.out}")
    return 0


def cmd_sort(args) -> int:
    datasets = load_datasets(args)
    oracle, oracle_desc = build_oracle(args)
    _check_latents(datasets, args.oracle)
    params = _algo_params(args)
    t0 = time.perf_counter()
    per_query, meter = _sort_all(datasets, args.algo, {k: v for k, v in params.items() if v is not None}, oracle, args.seed)
    wall = time.perf_counter() - t0
    doc = {
        "tool": "llmorderby",
        "version": __version__,
        "command": "sort",
        "algorithm": args.algo,
        "params": params,
        "seed": args.seed,
        "oracle": oracle_desc,
        "dataset": _dataset_echo(args),
        "queries": per_query,
        "usage": {**meter.to_dict(), "phases": _sum_phases(per_query)},
        "wall_time_s": round(wall, 6),
        "environment": {"python": platform.python_version(), "kernels": _kernels.BACKEND},
    }
    if args.out:
        _write_json(args.out, doc)
    print(
        f"{args.algo}: {sum(len(q['ranking']) for q in per_query)} keys, {len(per_query)} list(s), "
        f"{meter.calls} uncached calls, {meter.cache_hits} cache hits, {meter.tokens} tokens"
    )
    if not args.out:
        json.dump(doc, sys.stdout, indent=2, ensure_ascii=False)
        print()
    return 0


def cmd_eval(args) -> int:
    with open(args.result, encoding="utf-8") as fh:
        doc = json.load(fh)
    datasets = {ds.name: ds for ds in load_datasets(args)}
    metric = args.metric or _default_metric(datasets.values())
    rows = {}
    for q in doc["queries"]:
        ds = datasets.get(q["name"])
        if ds is None:
            raise RuntimeError(f"result list {q['name']!r} not found in the dataset")
        if sorted(q["ranking"]) != sorted(ds.ids):
            raise RuntimeError(f"result list {q['name']!r} does not match the dataset ids")
        rows[q["name"]] = _quality(ds, q["ranking"], metric, args.k)
    report = {"metric": metric, "k": args.k if metric == "ndcg" else None, "per_query": rows, "mean": _mean(rows.values())}
    label = f"ndcg@{args.k}" if metric == "ndcg" else "tau-b"
    if len(rows) > 1:
        for name, v in rows.items():
            print(f"{name}\t{label}\t{v:.4f}")
    print(f"mean\t{label}\t{report['mean']:.4f}")
    if args.out:
        _write_json(args.out, report)
    return 0


def cmd_sweep(args) -> int:
    grid = [parse_grid_entry(e) for e in args.config]
    if not grid:
        raise UsageError("sweep needs at least one --config")
    datasets = load_datasets(args)
    oracle, oracle_desc = build_oracle(args)
    _check_latents(datasets, args.oracle)
    metric = args.metric or _default_metric(datasets)
    excluded = {e.strip() for e in (args.exclude or "").split(",") if e.strip()}

    base_cache = oracle.cache

    def run_row(entry):
        name, params = entry
        row_oracle = copy.copy(oracle)
        row_oracle.cache = base_cache.overlay() if base_cache is not None else None
        label = name + ("" if not params else ":" + ",".join(f"{k}={v}" for k, v in params.items()))
        row = {"label": label, "algorithm": name, "tokens": "", "calls": "", "quality": "", "error": ""}
        try:
            per_query, meter = _sort_all(datasets, name, params, row_oracle, args.seed)
            q = _mean(_quality(ds, pq["ranking"], metric, args.k) for ds, pq in zip(datasets, per_query))
            row.update(tokens=meter.logical_tokens, calls=meter.calls, quality=q)
        except Exception as exc:  # one failed configuration must not end the sweep
            log.error("sweep row %s failed: %s", label, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
        return row, row_oracle.cache

    if args.parallel > 1:
        with ThreadPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(run_row, grid))
    else:
        results = [run_row(e) for e in grid]
    rows = [r for r, _ in results]
    for _, overlay in results:
        if overlay is not None:
            overlay.commit()

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["label", "algorithm", "tokens", "calls", "quality", "error"])
        w.writeheader()
        w.writerows(rows)

    points = [
        SweepPoint(r["tokens"], r["quality"], r["label"], r["calls"])
        for r in rows
        if not r["error"] and r["algorithm"] not in excluded and r["label"] not in excluded and r["tokens"]
    ]
    fit_doc = {"metric": metric, "excluded": sorted(excluded), "n_points": len(points), "oracle": oracle_desc}
    try:
        fit = fit_log_linear(points)
        fit_doc.update(intercept=fit.intercept, slope=fit.slope, r_squared=fit.r_squared)
        print(f"fit: quality = {fit.intercept:.4f} + {fit.slope:.4f} * ln(tokens)   r^2 = {fit.r_squared:.4f}")
    except InsufficientData as exc:
        fit_doc["error"] = str(exc)
        print(f"fit: not computed ({exc})")
    for r in rows:
        q = r["quality"]
        qs = "" if q == "" else f"{q:.4f}"
        print(f"{r['label']:<36} tokens={r['tokens']!s:<10} calls={r['calls']!s:<7} quality={qs} {r['error']}")
    if args.fit_out:
        _write_json(args.fit_out, fit_doc)
    if args.plot:
        _plot(rows, fit_doc, args.plot, metric)
    return 0


def _plot(rows, fit_doc, path, metric) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        import numpy as np
    except ImportError:
        log.warning("matplotlib is not installed; skipping --plot")
        return
    ok = [r for r in rows if not r["error"]]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter([r["tokens"] for r in ok], [r["quality"] for r in ok])
    for r in ok:
        ax.annotate(r["label"], (r["tokens"], r["quality"]), fontsize=7)
    if "slope" in fit_doc and ok:
        xs = np.geomspace(min(r["tokens"] for r in ok), max(r["tokens"] for r in ok), 100)
        ax.plot(xs, fit_doc["intercept"] + fit_doc["slope"] * np.log(xs), "--")
    ax.set_xscale("log")
    ax.set_xlabel("tokens")
    ax.set_ylabel("Kendall tau-b" if metric == "tau" else "nDCG")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_batch_size(args) -> int:
    datasets = load_datasets(args)
    oracle, _ = build_oracle(args)
    _check_latents(datasets, args.oracle)
    try:
        cfg = BatchSizeSearchConfig(theta=args.theta, max_size=args.max_size)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"theta = {cfg.theta}  max = {cfg.max_size}")
    for ds in datasets:
        if len(ds.keys) < 2:
            raise RuntimeError(f"dataset {ds.name} has {len(ds.keys)} key(s); need at least 2")
        meter = UsageMeter()
        trace: list = []
        m = determine_batch_size(ds.keys, ds.task, oracle, cfg, meter, trace)
        for t in trace:
            alpha = "invalid" if t["invalid"] else f"{t['alpha']:.4f}"
            print(f"{ds.name}\tm={t['m']}\talpha={alpha}")
        print(f"{ds.name}\tchosen m = {m}\tuncached calls = {meter.calls}\tcache hits = {meter.cache_hits}")
    return 0


def cmd_cache(args) -> int:
    if not args.cache:
        raise UsageError(f"no cache file given (use --cache or {CACHE_ENV})")
    cache = ResponseCache(args.cache)
    if args.action == "stats":
        size = Path(args.cache).stat().st_size if Path(args.cache).exists() else 0
        print(f"{args.cache}: {len(cache)} entries, {size} bytes")
    else:
        n = len(cache)
        cache.clear()
        print(f"cleared {n} entries from {args.cache}")
    return 0


# -- entry point ----------------------------------------------------------------------


def build_parser() -> tuple:
    parser = argparse.ArgumentParser(prog="llmorderby", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config-file", help="JSON file of flag defaults (flags still win)")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("generate", help="write a synthetic key file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--distribution", choices=DISTRIBUTIONS, default="distinct")
    p.add_argument("--tie-rate", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)
    subs["generate"] = p

    p = sub.add_parser("sort", help="order one dataset with one algorithm")
    _add_data_args(p)
    _add_oracle_args(p)
    p.add_argument("--algo", required=True, choices=sorted(REGISTRY))
    _add_algo_args(p)
    p.add_argument("--out", help="result document path (stdout when omitted)")
    p.set_defaults(func=cmd_sort)
    subs["sort"] = p

    p = sub.add_parser("eval", help="score a result document")
    p.add_argument("--result", required=True)
    _add_data_args(p)
    p.add_argument("--metric", choices=["tau", "ndcg"])
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    subs["eval"] = p

    p = sub.add_parser("sweep", help="cost-quality sweep over algorithm configurations")
    _add_data_args(p)
    _add_oracle_args(p)
    p.add_argument(
        "--config",
        action="append",
        default=[],
        help="grid entry such as external-merge:m=8 (repeatable)",
    )
    p.add_argument("--metric", choices=["tau", "ndcg"])
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--exclude", help="comma-separated algorithms or labels left out of the fit")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--fit-out", help="JSON file for the fitted coefficients")
    p.add_argument("--plot", help="PNG chart path (needs matplotlib)")
    p.set_defaults(func=cmd_sweep)
    subs["sweep"] = p

    p = sub.add_parser("batch-size", help="run the agreement-based batch size search")
    _add_data_args(p)
    _add_oracle_args(p)
    p.add_argument("--theta", type=float, default=DEFAULT_THETA)
    p.add_argument("--max-size", type=int, default=64)
    p.set_defaults(func=cmd_batch_size)
    subs["batch-size"] = p

    p = sub.add_parser("cache", help="inspect or clear the response cache")
    p.add_argument("action", choices=["stats", "clear"])
    p.add_argument("--cache", default=os.environ.get(CACHE_ENV))
    p.set_defaults(func=cmd_cache)
    subs["cache"] = p
    return parser, subs


def main(argv: Optional[list] = None) -> int:
    parser, subs = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if pre.config_file:
        try:
            with open(pre.config_file, encoding="utf-8") as fh:
                defaults = json.load(fh)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config file: {exc}")
        defaults = {k.replace("-", "_"): v for k, v in defaults.items()}
        for p in subs.values():
            p.set_defaults(**defaults)
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"llmorderby {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"llmorderby {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
