from llmorderby import Key, RankTask, ResponseCache, SimulatedOracle
from llmorderby.oracle import NoiseModel

ASC = RankTask("order by height")
DESC = RankTask("order by height", direction="descending")


def make_keys(latents, prefix="k"):
    return [Key(f"{prefix}{i + 1}", f"item {i + 1}", float(v)) for i, v in enumerate(latents)]


def latent_order(keys, descending=False):
    sign = -1 if descending else 1
    return [k.id for _, k in sorted(enumerate(keys), key=lambda t: (sign * t[1].latent, t[0]))]


def noisy(**kw):
    return SimulatedOracle(NoiseModel(**kw), cache=ResponseCache())
