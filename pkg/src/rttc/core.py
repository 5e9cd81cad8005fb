"""Shared domain types and the inner-product similarity primitive.

Every embedding in the system is unit-normalized at construction so that
inner-product similarity is bounded in [-1, 1] and the cache reuse
threshold has a scale-free meaning regardless of the embedder behind it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from rttc.errors import DimMismatch, ZeroVector

DEFAULT_DIM = 64

_UNIT_TOL = 1e-9


class Strategy(str, Enum):
    NO_ADAPTATION = "NoAdaptation"
    RAG = "Rag"
    TTT = "Ttt"


class ProducedBy(str, Enum):
    DIRECT = "Direct"
    RAG = "Rag"
    TTT = "Ttt"


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    domain_hint: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("query id must be non-empty")
        if not self.text:
            raise ValueError("query text must be non-empty")

    def to_json_dict(self) -> dict:
        d = {"id": self.id, "text": self.text}
        if self.domain_hint is not None:
            d["domain_hint"] = self.domain_hint
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "Query":
        return cls(id=d["id"], text=d["text"], domain_hint=d.get("domain_hint"))


@dataclass(frozen=True)
class Embedding:
    """Fixed-dimension dense unit vector."""

    values: tuple[float, ...]
    dim: int

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise DimMismatch(f"got {len(self.values)} values for dim {self.dim}")
        norm = math.sqrt(math.fsum(v * v for v in self.values))
        if not all(math.isfinite(v) for v in self.values):
            raise ZeroVector("embedding entries must be finite")
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ZeroVector(f"embedding must be unit-normalized, norm={norm!r}")

    def to_json_list(self) -> list[float]:
        return list(self.values)

    @classmethod
    def from_json_list(cls, values: Sequence[float]) -> "Embedding":
        return normalize(values)


def normalize(raw: Sequence[float]) -> Embedding:
    """Scale a raw vector to unit L2 norm, preserving direction."""
    vals = [float(v) for v in raw]
    if not vals:
        raise ZeroVector("cannot normalize an empty vector")
    if not all(math.isfinite(v) for v in vals):
        raise ZeroVector("cannot normalize a vector with non-finite entries")
    norm = math.sqrt(math.fsum(v * v for v in vals))
    if norm == 0.0:
        raise ZeroVector("cannot normalize the zero vector")
    return Embedding(values=tuple(v / norm for v in vals), dim=len(vals))


def inner_product(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise DimMismatch(f"dims differ: {a.dim} vs {b.dim}")
    return math.fsum(x * y for x, y in zip(a.values, b.values))


@dataclass(frozen=True)
class KnowledgeSample:
    sample_id: str
    prompt: str
    completion: str
    domain: str
    embedding: Embedding

    def __post_init__(self):
        if not self.domain:
            raise ValueError("sample domain must be non-empty")

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "prompt": self.prompt,
            "completion": self.completion,
            "domain": self.domain,
            "embedding": self.embedding.to_json_list(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "KnowledgeSample":
        return cls(
            sample_id=d["sample_id"],
            prompt=d["prompt"],
            completion=d["completion"],
            domain=d["domain"],
            embedding=Embedding.from_json_list(d["embedding"]),
        )


@dataclass(frozen=True)
class RetrievedSet:
    """Ordered top-k retrieval result: (sample, similarity) pairs."""

    samples: tuple[tuple[KnowledgeSample, float], ...]
    k_requested: int

    def __post_init__(self):
        sims = [s for _, s in self.samples]
        if any(a < b for a, b in zip(sims, sims[1:])):
            raise ValueError("similarities must be sorted non-increasing")
        ids = [s.sample_id for s, _ in self.samples]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate sample_id in retrieved set")
        if len(self.samples) > self.k_requested:
            raise ValueError("more samples than requested")

    def __len__(self) -> int:
        return len(self.samples)

    def sample_ids(self) -> list[str]:
        return [s.sample_id for s, _ in self.samples]

    def domains(self) -> list[str]:
        return [s.domain for s, _ in self.samples]

    def to_json_dict(self) -> dict:
        return {
            "samples": [
                {**s.to_json_dict(), "similarity": sim} for s, sim in self.samples
            ],
            "k_requested": self.k_requested,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RetrievedSet":
        pairs = []
        for entry in d["samples"]:
            sim = entry["similarity"]
            sample = KnowledgeSample.from_json_dict(
                {k: v for k, v in entry.items() if k != "similarity"}
            )
            pairs.append((sample, float(sim)))
        return cls(samples=tuple(pairs), k_requested=int(d["k_requested"]))


@dataclass(frozen=True)
class Response:
    text: str
    produced_by: ProducedBy
    adapter_digest: Optional[str] = None

    def __post_init__(self):
        has_digest = self.adapter_digest is not None
        if has_digest != (self.produced_by is ProducedBy.TTT):
            raise ValueError("adapter_digest present exactly when produced_by is Ttt")

    def to_json_dict(self) -> dict:
        return {
            "text": self.text,
            "produced_by": self.produced_by.value,
            "adapter_digest": self.adapter_digest,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Response":
        return cls(
            text=d["text"],
            produced_by=ProducedBy(d["produced_by"]),
            adapter_digest=d.get("adapter_digest"),
        )


@dataclass(frozen=True, order=True)
class RewardScore:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("reward score must be finite")


def dumps_canonical(obj: dict) -> str:
    """Stable JSON encoding used for digests and on-disk artifacts."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
