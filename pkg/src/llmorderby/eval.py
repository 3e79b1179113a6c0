"""Ranking quality metrics and the cost-quality fit."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .algorithms import agreement as _agreement
from .algorithms import values_agree


@dataclass(frozen=True)
class QrelEntry:
    query_id: str
    key_id: str
    relevance: int


@dataclass(frozen=True)
class SweepPoint:
    tokens: int
    quality: float
    label: str
    calls: int = 0

    def __post_init__(self) -> None:
        if self.tokens <= 0:
            raise ValueError("sweep point needs a positive token count")


@dataclass(frozen=True)
class LogLinearFit:
    intercept: float
    slope: float
    r_squared: float

    def predict(self, tokens):
        return self.intercept + self.slope * np.log(tokens)


class InsufficientData(ValueError):
    pass


def kendall_tau_b(predicted: Sequence[str], truth: Mapping[str, float]) -> float:
    """Tie-corrected Kendall tau between an output order and graded truth.

    ``truth`` maps each id to a grade; a smaller grade belongs earlier and
    equal grades are ties. Returns NaN when either side is entirely tied.
    """
    predicted = list(predicted)
    if len(set(predicted)) != len(predicted) or set(predicted) != set(truth):
        raise ValueError("predicted ranking must cover exactly the ids in truth")
    if len(predicted) < 2:
        return math.nan
    conc, disc, t_pred, t_truth, _ = _kernels.pair_counts(
        range(len(predicted)), [truth[i] for i in predicted]
    )
    denom = math.sqrt((conc + disc + t_pred) * (conc + disc + t_truth))
    if denom == 0:
        return math.nan
    return (conc - disc) / denom


def ndcg_at_k(predicted: Sequence[str], qrels: Mapping[str, int], k: int = 10) -> float:
    """nDCG@k with exponential gain ``2**rel - 1``.

    Unjudged ids count as relevance 0. The ideal ordering draws on every
    judged id in ``qrels``, retrieved or not. Returns 0 when no judged id is
    relevant.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    gains = [max(int(qrels.get(i, 0)), 0) for i in predicted]
    ideal = sorted((max(int(r), 0) for r in qrels.values()), reverse=True)
    idcg = _kernels.dcg(ideal, k)
    if idcg == 0:
        return 0.0
    return _kernels.dcg(gains, k) / idcg


def agreement_fraction(v12: Sequence[float], v3: Sequence[float], tol: float | None = None) -> float:
    """Fraction of positions whose values match.

    With ``tol`` given, values match when ``abs(a - b) <= tol``; otherwise the
    batch-size search rule applies (exact, or relative 1e-9 for reals).
    """
    if len(v12) != len(v3):
        raise ValueError("value lists must have equal length")
    if tol is None:
        return _agreement(v12, v3)
    if not v12:
        return 1.0
    return sum(abs(a - b) <= tol for a, b in zip(v12, v3)) / len(v12)


def fit_log_linear(points: Iterable[SweepPoint]) -> LogLinearFit:
    """Least-squares fit of ``quality = intercept + slope * ln(tokens)``."""
    pts = [p for p in points if not math.isnan(p.quality)]
    x = np.log(np.array([p.tokens for p in pts], dtype=float))
    y = np.array([p.quality for p in pts], dtype=float)
    if len(np.unique(x)) < 2:
        raise InsufficientData("need at least two distinct token counts")
    A = np.column_stack([np.ones_like(x), x])
    (intercept, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return LogLinearFit(float(intercept), float(slope), r2)


def truth_from_latents(keys, descending: bool = False) -> dict:
    """Grades for :func:`kendall_tau_b` from key latents (smaller = earlier)."""
    sign = -1.0 if descending else 1.0
    return {k.id: sign * k.latent for k in keys}


__all__ = [
    "InsufficientData",
    "LogLinearFit",
    "QrelEntry",
    "SweepPoint",
    "agreement_fraction",
    "fit_log_linear",
    "kendall_tau_b",
    "ndcg_at_k",
    "truth_from_latents",
    "values_agree",
]
