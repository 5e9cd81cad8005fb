import numpy as np
import pytest

from rttc.core import KnowledgeSample, normalize
from rttc.gateway import HashingEmbedder
from rttc.kb import KnowledgeBase


def make_sample(i: int, domain: str, raw_vector) -> KnowledgeSample:
    return KnowledgeSample(
        sample_id=f"s{i:08d}",
        prompt=f"prompt {i}",
        completion=f"completion {i}",
        domain=domain,
        embedding=normalize(raw_vector),
    )


def random_base(n: int, dim: int, seed: int, domains=("coding", "math", "medical")):
    rng = np.random.default_rng(seed)
    kb = KnowledgeBase(dim=dim)
    raws = rng.standard_normal((n, dim))
    for i in range(n):
        kb.add_sample(make_sample(i, domains[i % len(domains)], raws[i]))
    return kb


@pytest.fixture
def embedder():
    return HashingEmbedder(dim=64)
