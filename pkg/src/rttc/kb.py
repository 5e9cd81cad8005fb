"""Multi-domain knowledge base: ingestion, exact top-k retrieval, persistence.

Retrieval is exact flat search over the full sample matrix. Ties in
similarity are broken by insertion order (lower internal index wins), which
makes results deterministic and gives the k < k' containment property.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from rttc.core import Embedding, KnowledgeSample, RetrievedSet
from rttc.errors import DimMismatch, EmptyLog, IoError, MalformedRecord

SAMPLES_FILE = "samples.jsonl"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class RetrievalLogEntry:
    query_id: str
    k: int
    returned_domains: tuple[str, ...]
    timestamp: int

    def __post_init__(self):
        if len(self.returned_domains) > self.k:
            raise ValueError("more returned domains than requested k")


class KnowledgeBase:
    """In-memory flat index over knowledge samples.

    Ingestion is exclusive; retrieval reads an immutable snapshot matrix
    swapped in atomically after each ingest batch.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._samples: list[KnowledgeSample] = []
        self._matrix = np.zeros((0, dim), dtype=np.float64)
        self._domain_counts: dict[str, int] = {}
        self._log: list[RetrievalLogEntry] = []
        self._tick = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._samples)

    @property
    def domain_counts(self) -> dict[str, int]:
        return dict(self._domain_counts)

    @property
    def samples(self) -> list[KnowledgeSample]:
        return list(self._samples)

    @property
    def retrieval_log(self) -> list[RetrievalLogEntry]:
        return list(self._log)

    def add_sample(self, sample: KnowledgeSample) -> None:
        if sample.embedding.dim != self.dim:
            raise DimMismatch(
                f"sample dim {sample.embedding.dim} != base dim {self.dim}"
            )
        with self._lock:
            self._samples.append(sample)
            self._domain_counts[sample.domain] = (
                self._domain_counts.get(sample.domain, 0) + 1
            )
            self._matrix = np.vstack(
                [self._matrix, np.asarray(sample.embedding.values, dtype=np.float64)]
            )

    def ingest(self, records: Iterable[tuple[str, str, str]], embedder) -> int:
        """Embed and append (prompt, completion, domain) records.

        Only the prompt is embedded; retrieval matches queries against
        prompts. Returns the number of records ingested.
        """
        staged = []
        for prompt, completion, domain in records:
            if not prompt or not domain:
                raise MalformedRecord(
                    f"record with empty prompt or domain: {(prompt, domain)!r}"
                )
            staged.append((prompt, completion, domain))
        count = 0
        for prompt, completion, domain in staged:
            emb = embedder.embed(prompt)
            if emb.dim != self.dim:
                raise DimMismatch(f"embedder dim {emb.dim} != base dim {self.dim}")
            sample = KnowledgeSample(
                sample_id=f"s{len(self._samples):08d}",
                prompt=prompt,
                completion=completion,
                domain=domain,
                embedding=emb,
            )
            self.add_sample(sample)
            count += 1
        return count

    def retrieve_top_k(
        self, e: Embedding, k: int, query_id: str = ""
    ) -> RetrievedSet:
        """Exact top-k by inner product, ties broken by insertion order."""
        if k < 0:
            raise ValueError("k must be >= 0")
        if e.dim != self.dim:
            raise DimMismatch(f"query dim {e.dim} != base dim {self.dim}")
        with self._lock:
            matrix = self._matrix
            samples = self._samples
        n = len(samples)
        take = min(k, n)
        if take == 0:
            result = RetrievedSet(samples=(), k_requested=k)
        else:
            sims = matrix @ np.asarray(e.values, dtype=np.float64)
            # lexsort: primary key -sims, secondary key index
            order = np.lexsort((np.arange(n), -sims))[:take]
            result = RetrievedSet(
                samples=tuple((samples[i], float(sims[i])) for i in order),
                k_requested=k,
            )
        with self._lock:
            self._tick += 1
            self._log.append(
                RetrievalLogEntry(
                    query_id=query_id,
                    k=k,
                    returned_domains=tuple(result.domains()),
                    timestamp=self._tick,
                )
            )
        return result

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = []
        for s in self._samples:
            lines.append(json.dumps(s.to_json_dict(), sort_keys=True))
        payload = ("\n".join(lines) + "\n") if lines else ""
        digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
        (out / SAMPLES_FILE).write_text(payload, encoding="utf-8")
        manifest = {
            "dim": self.dim,
            "total": len(self._samples),
            "domains": self._domain_counts,
            "content_digest": digest,
        }
        (out / MANIFEST_FILE).write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, base_dir: str | Path) -> "KnowledgeBase":
        base = Path(base_dir)
        manifest_path = base / MANIFEST_FILE
        samples_path = base / SAMPLES_FILE
        if not manifest_path.exists() or not samples_path.exists():
            raise IoError(f"knowledge base directory incomplete: {base}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        payload = samples_path.read_text(encoding="utf-8")
        digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
        if digest != manifest.get("content_digest"):
            raise IoError(f"knowledge base content digest mismatch in {base}")
        kb = cls(dim=int(manifest["dim"]))
        for line in payload.splitlines():
            if not line.strip():
                continue
            kb.add_sample(KnowledgeSample.from_json_dict(json.loads(line)))
        if len(kb) != int(manifest["total"]):
            raise IoError("knowledge base sample count disagrees with manifest")
        return kb


def domain_distribution(log: list[RetrievalLogEntry]) -> dict[str, float]:
    """Fraction of returned samples per domain, over the whole log."""
    if not log:
        raise EmptyLog("retrieval log is empty")
    counts: dict[str, int] = {}
    total = 0
    for entry in log:
        for d in entry.returned_domains:
            counts[d] = counts.get(d, 0) + 1
            total += 1
    if total == 0:
        raise EmptyLog("retrieval log contains no returned samples")
    return {d: c / total for d, c in sorted(counts.items())}
