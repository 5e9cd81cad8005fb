"""HTTP retrieval service over a loaded knowledge base.

Endpoints: POST /retrieve, POST /ingest (JSONL body), GET /stats. Requests
are answered against the base's current snapshot; malformed input maps to
HTTP 400 with a structured error body.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from rttc.core import Embedding, normalize
from rttc.errors import DimMismatch, MalformedRecord, RttcError, ZeroVector
from rttc.gateway import HashingEmbedder
from rttc.kb import KnowledgeBase


def create_app(kb: KnowledgeBase, embedder=None) -> FastAPI:
    embedder = embedder or HashingEmbedder(dim=kb.dim)
    app = FastAPI(title="rttc-kb")

    def error(status: int, kind: str, detail: str) -> JSONResponse:
        return JSONResponse(
            status_code=status, content={"error": kind, "detail": detail}
        )

    @app.post("/retrieve")
    async def retrieve(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            return error(400, "MalformedRequest", str(exc))
        try:
            raw = body["embedding"]
            k = int(body["k"])
            if len(raw) != kb.dim:
                raise DimMismatch(f"embedding dim {len(raw)} != base dim {kb.dim}")
            e = normalize(raw)
            result = kb.retrieve_top_k(e, k, query_id=str(body.get("query_id", "")))
        except (KeyError, TypeError, ValueError) as exc:
            return error(400, "MalformedRequest", str(exc))
        except (DimMismatch, ZeroVector) as exc:
            return error(400, type(exc).__name__, str(exc))
        return {
            "samples": [
                {
                    "sample_id": s.sample_id,
                    "prompt": s.prompt,
                    "completion": s.completion,
                    "domain": s.domain,
                    "similarity": sim,
                }
                for s, sim in result.samples
            ],
            "k_requested": result.k_requested,
        }

    @app.post("/ingest")
    async def ingest(request: Request):
        payload = (await request.body()).decode("utf-8")
        records = []
        try:
            for line in payload.splitlines():
                if not line.strip():
                    continue
                d = json.loads(line)
                records.append((d["prompt"], d.get("completion", ""), d["domain"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            return error(400, "MalformedRequest", str(exc))
        try:
            count = kb.ingest(records, embedder)
        except (MalformedRecord, DimMismatch) as exc:
            return error(400, type(exc).__name__, str(exc))
        return {"ingested": count}

    @app.get("/stats")
    async def stats():
        return {"total": len(kb), "dim": kb.dim, "domains": kb.domain_counts}

    @app.get("/domain-distribution")
    async def domains():
        try:
            from rttc.kb import domain_distribution

            return domain_distribution(kb.retrieval_log)
        except RttcError as exc:
            return error(400, type(exc).__name__, str(exc))

    return app


class RemoteRetriever:
    """Client-side retriever speaking the /retrieve wire format."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        import httpx

        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout)

    def __call__(self, e: Embedding, k: int, query_id: str = ""):
        import httpx

        from rttc.core import KnowledgeSample, RetrievedSet
        from rttc.errors import BackendUnavailable

        try:
            resp = self._client.post(
                "/retrieve",
                json={"embedding": e.to_json_list(), "k": k, "query_id": query_id},
            )
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"{self.base_url}/retrieve: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(
                f"{self.base_url}/retrieve: HTTP {resp.status_code}: {resp.text}"
            )
        body = resp.json()
        # the wire format omits sample embeddings; rebuild them with the
        # shared embedder (samples are embedded by prompt on the server too)
        embedder = HashingEmbedder(dim=e.dim)
        samples = tuple(
            (
                KnowledgeSample(
                    sample_id=entry["sample_id"],
                    prompt=entry["prompt"],
                    completion=entry["completion"],
                    domain=entry["domain"],
                    embedding=embedder.embed(entry["prompt"] or entry["sample_id"]),
                ),
                float(entry["similarity"]),
            )
            for entry in body["samples"]
        )
        return RetrievedSet(samples=samples, k_requested=int(body["k_requested"]))

    def close(self) -> None:
        self._client.close()


def serve(base_dir: str, bind: str = "127.0.0.1:8080") -> None:
    """Blocking server entrypoint used by the CLI."""
    import uvicorn

    kb = KnowledgeBase.load(base_dir)
    host, _, port = bind.partition(":")
    app = create_app(kb)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="warning")
