"""Model capabilities: generator, scorer, embedder, trainer.

Two families of implementations share one interface: deterministic
simulated backends (pure functions of their inputs, used by tests and the
default CLI configuration) and a remote client speaking the JSON wire
protocol served by any conforming model server.

The simulated generator emits structured text
``[<produced_by>|<adapter_digest>] answer(<query excerpt>)`` so that
provenance can be asserted without a real model.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Optional

import httpx

from rttc.core import (
    DEFAULT_DIM,
    Embedding,
    ProducedBy,
    Query,
    Response,
    RetrievedSet,
    RewardScore,
    normalize,
)
from rttc.errors import (
    BackendUnavailable,
    EmptySampleSet,
    EmptyText,
    NonFiniteReward,
)

AUGMENTATION_MARKER = "### Example"
QUERY_MARKER = "### Query\n"

_EXCERPT_LEN = 40


@dataclass(frozen=True)
class TrainHyper:
    """Fine-tuning hyperparameters, carried as opaque metadata."""

    epochs: int = 2
    learning_rate: float = 5e-5
    batch_size: int = 1
    lora_rank: int = 32
    lora_alpha: int = 16
    target_layers: tuple[str, ...] = (
        "q_proj",
        "k_proj",
        "v_proj",
        "up_proj",
        "down_proj",
    )

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.lora_rank, self.lora_alpha) < 1:
            raise ValueError("integer hyperparameters must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")

    def to_json_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "lora_rank": self.lora_rank,
            "lora_alpha": self.lora_alpha,
            "target_layers": list(self.target_layers),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainHyper":
        kwargs = dict(d)
        if "target_layers" in kwargs:
            kwargs["target_layers"] = tuple(kwargs["target_layers"])
        return cls(**kwargs)


@dataclass(frozen=True)
class AdapterState:
    """Identifier-level stand-in for a trained adapter (no weights here)."""

    digest: str
    trained_on: tuple[str, ...]
    hyper: TrainHyper

    def to_json_dict(self) -> dict:
        return {
            "digest": self.digest,
            "trained_on": list(self.trained_on),
            "hyper": self.hyper.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AdapterState":
        return cls(
            digest=d["digest"],
            trained_on=tuple(d["trained_on"]),
            hyper=TrainHyper.from_json_dict(d["hyper"]),
        )


@dataclass(frozen=True)
class ModelHandle:
    base_id: str = "sim-base"
    adapter: Optional[AdapterState] = None

    def with_adapter(self, adapter: AdapterState) -> "ModelHandle":
        return ModelHandle(base_id=self.base_id, adapter=adapter)


@dataclass
class RewardScript:
    """Branch-forcing test instrument: (query_id, produced_by) -> reward."""

    table: dict[tuple[str, ProducedBy], float] = field(default_factory=dict)
    default: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.default):
            raise ValueError("script default must be finite")


def adapter_digest(sample_ids: list[str], hyper: TrainHyper) -> str:
    """Stable content digest over the sorted training set and hyperparameters."""
    h = hashlib.sha256()
    for sid in sorted(sample_ids):
        h.update(sid.encode("utf-8"))
        h.update(b"\x00")
    h.update(repr(hyper.to_json_dict()).encode("utf-8"))
    return h.hexdigest()


def _tokenize(text: str) -> list[str]:
    return [t for t in re.split(r"[^0-9a-z]+", text.lower()) if t]


def _token_slot(token: str, dim: int) -> tuple[int, float]:
    h = hashlib.sha256(token.encode("utf-8")).digest()
    bucket = int.from_bytes(h[:8], "big") % dim
    sign = 1.0 if h[8] & 1 else -1.0
    return bucket, sign


class HashingEmbedder:
    """Signed feature-hashing of lowercase tokens into ``dim`` buckets."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim

    def embed(self, text: str) -> Embedding:
        if not text:
            raise EmptyText("cannot embed empty text")
        raw = [0.0] * self.dim
        for token in _tokenize(text):
            bucket, sign = _token_slot(token, self.dim)
            raw[bucket] += sign
        if all(v == 0.0 for v in raw):
            # tokens cancelled (or none survived splitting): fall back to a
            # single bucket keyed by the whole text so embed stays total
            bucket, _ = _token_slot(text, self.dim)
            raw[bucket] = 1.0
        return normalize(raw)


def _excerpt(context: str) -> str:
    if QUERY_MARKER in context:
        context = context.rsplit(QUERY_MARKER, 1)[1]
    return context[:_EXCERPT_LEN]


class SimulatedGenerator:
    """Deterministic generator that encodes provenance in its output text."""

    def generate(self, handle: ModelHandle, context: str) -> Response:
        if not context:
            raise ValueError("context must be non-empty")
        if handle.adapter is not None:
            digest = handle.adapter.digest
            return Response(
                text=f"[Ttt|{digest}] answer({_excerpt(context)})",
                produced_by=ProducedBy.TTT,
                adapter_digest=digest,
            )
        if context.startswith(AUGMENTATION_MARKER):
            return Response(
                text=f"[Rag] answer({_excerpt(context)})",
                produced_by=ProducedBy.RAG,
            )
        return Response(
            text=f"[Direct] answer({_excerpt(context)})",
            produced_by=ProducedBy.DIRECT,
        )


class ScriptedScorer:
    """Scorer backed by a RewardScript lookup table."""

    def __init__(self, script: RewardScript):
        self.script = script

    def score(self, query: Query, response: Response) -> RewardScore:
        value = self.script.table.get(
            (query.id, response.produced_by), self.script.default
        )
        return RewardScore(value=float(value))


class HashScorer:
    """Deterministic content-hash scorer mapping (query, response) to [0, 10)."""

    def score(self, query: Query, response: Response) -> RewardScore:
        h = hashlib.sha256()
        h.update(query.text.encode("utf-8"))
        h.update(b"\x00")
        h.update(response.text.encode("utf-8"))
        value = int.from_bytes(h.digest()[:8], "big") / 2**64 * 10.0
        return RewardScore(value=value)


class SimulatedTrainer:
    """Digest-producing trainer; no weights are computed in this component."""

    def train(
        self, base: ModelHandle, samples: RetrievedSet, hyper: TrainHyper
    ) -> AdapterState:
        if len(samples) == 0:
            raise EmptySampleSet("cannot train on an empty sample set")
        if base.adapter is not None:
            raise ValueError("training always starts from the unadapted base model")
        ids = samples.sample_ids()
        return AdapterState(
            digest=adapter_digest(ids, hyper),
            trained_on=tuple(sorted(ids)),
            hyper=hyper,
        )


class RemoteModelClient:
    """HTTP client for the model wire protocol (generate/score/embed/train)."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout)

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{self.base_url}{path}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(
                f"{self.base_url}{path}: HTTP {resp.status_code}: {resp.text}"
            )
        return resp.json()

    def generate(self, handle: ModelHandle, context: str) -> Response:
        body = self._post(
            "/generate",
            {
                "base_id": handle.base_id,
                "adapter_digest": handle.adapter.digest if handle.adapter else None,
                "context": context,
            },
        )
        produced_by = ProducedBy(body["produced_by"])
        return Response(
            text=body["text"],
            produced_by=produced_by,
            adapter_digest=(
                handle.adapter.digest if produced_by is ProducedBy.TTT else None
            ),
        )

    def score(self, query: Query, response: Response) -> RewardScore:
        body = self._post(
            "/score", {"query": query.text, "response": response.text}
        )
        value = float(body["value"])
        if not math.isfinite(value):
            raise NonFiniteReward(f"backend returned non-finite reward {value!r}")
        return RewardScore(value=value)

    def embed(self, text: str) -> Embedding:
        if not text:
            raise EmptyText("cannot embed empty text")
        body = self._post("/embed", {"text": text})
        return normalize(body["embedding"])

    def train(
        self, base: ModelHandle, samples: RetrievedSet, hyper: TrainHyper
    ) -> AdapterState:
        if len(samples) == 0:
            raise EmptySampleSet("cannot train on an empty sample set")
        body = self._post(
            "/train",
            {
                "base_id": base.base_id,
                "samples": [
                    {"prompt": s.prompt, "completion": s.completion}
                    for s, _ in samples.samples
                ],
                "hyper": hyper.to_json_dict(),
            },
        )
        ids = samples.sample_ids()
        return AdapterState(
            digest=body["adapter_digest"],
            trained_on=tuple(sorted(ids)),
            hyper=hyper,
        )

    def close(self) -> None:
        self._client.close()
