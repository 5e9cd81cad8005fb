"""Query-State Caching: similarity-gated reuse of retrieval results and
trained adapters, with per-cache LFU eviction under a fixed budget.

A hit requires the nearest cached key's inner product with the query
embedding to strictly exceed the reuse threshold. Each cache keeps its own
key set, so a hit always lands on an entry whose value is still present
(evicting a key removes it from consideration entirely).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Generic, Optional, TypeVar

from rttc.core import Embedding, RetrievedSet, inner_product
from rttc.errors import EmptyInput, EmptySampleSet
from rttc.gateway import AdapterState

V = TypeVar("V")

DEFAULT_TAU_E = 0.5
DEFAULT_BUDGET = 8


@dataclass(frozen=True)
class QscConfig:
    tau_e: float = DEFAULT_TAU_E
    budget: int = DEFAULT_BUDGET
    metric: str = "inner_product"
    eviction: str = "lfu"

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.metric != "inner_product":
            raise ValueError(f"unsupported similarity metric {self.metric!r}")
        if self.eviction != "lfu":
            raise ValueError(f"unsupported eviction policy {self.eviction!r}")


@dataclass
class CacheEntry(Generic[V]):
    key: Embedding
    value: V
    freq: int
    last_touch: int


class Cache(Generic[V]):
    """One plane of the query-state cache (either retrieval sets or adapters)."""

    def __init__(self, config: QscConfig, clock: Callable[[], int]):
        self.config = config
        self._clock = clock
        self.entries: list[CacheEntry[V]] = []

    def __len__(self) -> int:
        return len(self.entries)

    def nearest(self, e_t: Embedding) -> Optional[tuple[CacheEntry[V], float]]:
        """Entry maximizing similarity to e_t; ties go to the older entry."""
        best: Optional[tuple[CacheEntry[V], float]] = None
        for entry in self.entries:
            sim = inner_product(entry.key, e_t)
            if best is None or sim > best[1] or (
                sim == best[1] and entry.last_touch < best[0].last_touch
            ):
                best = (entry, sim)
        return best

    def evict(self) -> list[Embedding]:
        """Remove the single entry with minimal (freq, last_touch)."""
        if len(self.entries) < self.config.budget:
            raise ValueError("evict requires the cache to be at budget")
        victim = min(self.entries, key=lambda e: (e.freq, e.last_touch))
        self.entries.remove(victim)
        return [victim.key]

    def lookup(self, e_t: Embedding) -> Optional[V]:
        """Return the cached value on a hit (strictly above tau_e), else None."""
        found = self.nearest(e_t)
        if found is not None and found[1] > self.config.tau_e:
            entry, _ = found
            entry.freq += 1
            entry.last_touch = self._clock()
            return entry.value
        return None

    def insert(self, key: Embedding, value: V) -> None:
        if len(self.entries) >= self.config.budget:
            self.evict()
        self.entries.append(
            CacheEntry(key=key, value=value, freq=1, last_touch=self._clock())
        )


class QscState:
    """Both cache planes plus the shared monotonic tick."""

    def __init__(self, config: QscConfig = QscConfig()):
        self.config = config
        self._tick = 0
        self.rag_cache: Cache[RetrievedSet] = Cache(config, self._next_tick)
        self.ttt_cache: Cache[AdapterState] = Cache(config, self._next_tick)

    def _next_tick(self) -> int:
        self._tick += 1
        return self._tick

    def lookup_or_retrieve(
        self, e_t: Embedding, k: int, retriever: Callable[[Embedding, int], RetrievedSet]
    ) -> tuple[RetrievedSet, bool]:
        if k < 1:
            raise ValueError("k must be >= 1")
        cached = self.rag_cache.lookup(e_t)
        if cached is not None:
            return cached, True
        fresh = retriever(e_t, k)
        self.rag_cache.insert(e_t, fresh)
        return fresh, False

    def lookup_or_train(
        self,
        e_t: Embedding,
        s: RetrievedSet,
        trainer: Callable[[RetrievedSet], AdapterState],
    ) -> tuple[AdapterState, bool]:
        if len(s) == 0:
            raise EmptySampleSet("cannot train on an empty sample set")
        cached = self.ttt_cache.lookup(e_t)
        if cached is not None:
            return cached, True
        adapter = trainer(s)
        self.ttt_cache.insert(e_t, adapter)
        return adapter, False

    # -- persistence -------------------------------------------------------

    def to_json_dict(self) -> dict:
        def dump_entries(cache: Cache, dump_value) -> list[dict]:
            return [
                {
                    "embedding": e.key.to_json_list(),
                    "value": dump_value(e.value),
                    "freq": e.freq,
                    "last_touch": e.last_touch,
                }
                for e in cache.entries
            ]

        return {
            "config": {
                "tau_e": self.config.tau_e,
                "budget": self.config.budget,
                "metric": self.config.metric,
                "eviction": self.config.eviction,
            },
            "tick": self._tick,
            "rag_cache": dump_entries(self.rag_cache, lambda v: v.to_json_dict()),
            "ttt_cache": dump_entries(self.ttt_cache, lambda v: v.to_json_dict()),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "QscState":
        state = cls(QscConfig(**d["config"]))
        state._tick = int(d["tick"])
        for raw in d["rag_cache"]:
            state.rag_cache.entries.append(
                CacheEntry(
                    key=Embedding.from_json_list(raw["embedding"]),
                    value=RetrievedSet.from_json_dict(raw["value"]),
                    freq=int(raw["freq"]),
                    last_touch=int(raw["last_touch"]),
                )
            )
        for raw in d["ttt_cache"]:
            state.ttt_cache.entries.append(
                CacheEntry(
                    key=Embedding.from_json_list(raw["embedding"]),
                    value=AdapterState.from_json_dict(raw["value"]),
                    freq=int(raw["freq"]),
                    last_touch=int(raw["last_touch"]),
                )
            )
        return state

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "QscState":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cache_utilization(outcomes) -> dict[str, Optional[float]]:
    """Hit fraction per cache plane among stage-entering queries.

    A plane never entered by any query reports None rather than 0.
    """
    if not outcomes:
        raise EmptyInput("no outcomes to aggregate")
    rag_entered = rag_hits = 0
    ttt_entered = ttt_hits = 0
    for o in outcomes:
        if o.entered_rag_stage():
            rag_entered += 1
            if o.cache_flags.get("rag_hit"):
                rag_hits += 1
        if o.entered_ttt_stage():
            ttt_entered += 1
            if o.cache_flags.get("ttt_hit"):
                ttt_hits += 1
    return {
        "rag": rag_hits / rag_entered if rag_entered else None,
        "ttt": ttt_hits / ttt_entered if ttt_entered else None,
    }
