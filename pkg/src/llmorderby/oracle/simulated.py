from __future__ import annotations

import hashlib
import random
from dataclasses import asdict, dataclass
from typing import Optional

from ..core import Key, RankTask, ResponseCache, canonical_json
from .base import Oracle, TokenCostModel


@dataclass(frozen=True)
class NoiseModel:
    """Parameters of the simulated oracle.

    ``perm_swap_rate`` is the chance each adjacent pair of a listwise answer
    is transposed. With ``swap_ref_size`` set, that rate scales linearly with
    window size (``rate * n / swap_ref_size``, capped at 1), so larger
    windows are noisier. Value noise only applies to score batches larger
    than ``noise_free_batch``.
    """

    flip_prob: float = 0.0
    value_sigma: float = 0.0
    invalid_prob: float = 0.0
    perm_swap_rate: float = 0.0
    seed: int = 0
    swap_ref_size: Optional[int] = None
    noise_free_batch: int = 0
    value_decimals: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("flip_prob", "invalid_prob", "perm_swap_rate"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.value_sigma < 0:
            raise ValueError("value_sigma must be non-negative")
        if self.swap_ref_size is not None and self.swap_ref_size < 1:
            raise ValueError("swap_ref_size must be positive")
        if self.noise_free_batch < 0:
            raise ValueError("noise_free_batch must be non-negative")

    def swap_rate(self, n: int) -> float:
        if self.swap_ref_size is None:
            return self.perm_swap_rate
        return min(1.0, self.perm_swap_rate * n / self.swap_ref_size)


ZERO_NOISE = NoiseModel()


class SimulatedOracle(Oracle):
    """Deterministic noisy oracle driven by each key's ``latent`` value.

    Every random draw comes from a generator seeded by the noise seed and
    the call's arguments, so answers never depend on call order or thread
    interleaving. Comparator flips are keyed on the unordered id pair.
    """

    kind = "sim"

    def __init__(
        self,
        noise: NoiseModel = ZERO_NOISE,
        cost: TokenCostModel = TokenCostModel(),
        cache: Optional[ResponseCache] = None,
        max_window: Optional[int] = None,
    ):
        super().__init__(cache=cache, max_window=max_window)
        self.noise = noise
        self.cost = cost

    def describe(self) -> dict:
        return {"noise": asdict(self.noise), "cost": asdict(self.cost)}

    def _key_payload(self, key: Key) -> list:
        return [key.id, key.text, key.latent]

    def _rng(self, *parts) -> random.Random:
        h = hashlib.sha256(canonical_json([self.noise.seed, *parts]).encode("utf-8")).digest()
        return random.Random(int.from_bytes(h[:8], "big"))

    @staticmethod
    def _latents(keys) -> list:
        out = []
        for k in keys:
            if k.latent is None:
                raise ValueError(f"simulated oracle needs a latent value for key {k.id!r}")
            out.append(k.latent)
        return out

    def _usage(self, n: int) -> dict:
        p, c = self.cost.cost(n)
        return {"prompt_tokens": p, "completion_tokens": c}

    def _score(self, keys, task: RankTask, attempt: int, retry: int) -> dict:
        latents = self._latents(keys)
        nm = self.noise
        rng = self._rng("score", [k.id for k in keys], attempt, retry)
        usage = self._usage(len(keys))
        if nm.invalid_prob > 0 and rng.random() < nm.invalid_prob:
            return {"result": {"invalid": True, "reason": "simulated malformed output"}, "usage": usage}
        values = list(latents)
        if nm.value_sigma > 0 and len(keys) > nm.noise_free_batch:
            values = [v + rng.gauss(0.0, nm.value_sigma) for v in values]
        if nm.value_decimals is not None:
            values = [round(v, nm.value_decimals) for v in values]
        return {"result": {"values": values}, "usage": usage}

    def _compare(self, a: Key, b: Key, task: RankTask, retry: int) -> dict:
        la, lb = self._latents([a, b])
        if task.descending:
            a_first = la >= lb
        else:
            a_first = la <= lb
        rng = self._rng("compare", sorted([a.id, b.id]))
        if self.noise.flip_prob > 0 and rng.random() < self.noise.flip_prob:
            a_first = not a_first
        return {"result": {"winner": "first" if a_first else "second"}, "usage": self._usage(2)}

    def _sort(self, keys, task: RankTask, retry: int) -> dict:
        latents = self._latents(keys)
        sign = -1.0 if task.descending else 1.0
        order = sorted(range(len(keys)), key=lambda i: (sign * latents[i], i))
        ids = [keys[i].id for i in order]
        nm = self.noise
        rng = self._rng("sort", [k.id for k in keys], retry)
        rate = nm.swap_rate(len(ids))
        if rate > 0:
            for i in range(len(ids) - 1):
                if rng.random() < rate:
                    ids[i], ids[i + 1] = ids[i + 1], ids[i]
        if nm.invalid_prob > 0 and rng.random() < nm.invalid_prob:
            victim = rng.randrange(len(ids))
            if len(ids) > 1 and rng.random() < 0.5:
                other = rng.choice([j for j in range(len(ids)) if j != victim])
                ids[victim] = ids[other]
            else:
                del ids[victim]
        return {"result": {"ids": ids}, "usage": self._usage(len(keys))}
