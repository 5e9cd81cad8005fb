"""Simulated backend served over the model wire protocol.

Gives remote clients the same deterministic behavior as the in-process
simulated capabilities, and doubles as the reference implementation for
protocol conformance testing of real model servers.

The /train digest here is content-based (sorted (prompt, completion)
pairs plus hyperparameters) because sample ids do not cross the wire.
"""

from __future__ import annotations

import hashlib
import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from rttc.core import DEFAULT_DIM, ProducedBy, Query, Response
from rttc.errors import EmptyText, ZeroVector
from rttc.gateway import (
    AUGMENTATION_MARKER,
    HashScorer,
    HashingEmbedder,
    _excerpt,
)


def wire_train_digest(samples: list[dict], hyper: dict) -> str:
    h = hashlib.sha256()
    pairs = sorted((s["prompt"], s.get("completion", "")) for s in samples)
    h.update(json.dumps(pairs, sort_keys=True).encode("utf-8"))
    h.update(json.dumps(hyper, sort_keys=True).encode("utf-8"))
    return h.hexdigest()


def create_app(dim: int = DEFAULT_DIM) -> FastAPI:
    app = FastAPI(title="rttc-model-sim")
    embedder = HashingEmbedder(dim=dim)
    scorer = HashScorer()

    def error(status: int, kind: str, detail: str) -> JSONResponse:
        return JSONResponse(
            status_code=status, content={"error": kind, "detail": detail}
        )

    async def parse(request: Request):
        try:
            return await request.json()
        except json.JSONDecodeError:
            return None

    @app.post("/generate")
    async def generate(request: Request):
        body = await parse(request)
        if body is None or "context" not in body:
            return error(400, "MalformedRequest", "expected {base_id, adapter_digest, context}")
        context = body["context"]
        if not context:
            return error(400, "MalformedRequest", "context must be non-empty")
        digest = body.get("adapter_digest")
        if digest:
            text = f"[Ttt|{digest}] answer({_excerpt(context)})"
            produced_by = ProducedBy.TTT
        elif context.startswith(AUGMENTATION_MARKER):
            text = f"[Rag] answer({_excerpt(context)})"
            produced_by = ProducedBy.RAG
        else:
            text = f"[Direct] answer({_excerpt(context)})"
            produced_by = ProducedBy.DIRECT
        return {"text": text, "produced_by": produced_by.value}

    @app.post("/score")
    async def score(request: Request):
        body = await parse(request)
        if body is None or "query" not in body or "response" not in body:
            return error(400, "MalformedRequest", "expected {query, response}")
        q = Query(id="wire", text=body["query"] or " ")
        r = Response(text=body["response"], produced_by=ProducedBy.DIRECT)
        return {"value": scorer.score(q, r).value}

    @app.post("/embed")
    async def embed(request: Request):
        body = await parse(request)
        if body is None or "text" not in body:
            return error(400, "MalformedRequest", "expected {text}")
        try:
            e = embedder.embed(body["text"])
        except (EmptyText, ZeroVector) as exc:
            return error(400, type(exc).__name__, str(exc))
        return {"embedding": e.to_json_list()}

    @app.post("/train")
    async def train(request: Request):
        body = await parse(request)
        if body is None or "samples" not in body:
            return error(400, "MalformedRequest", "expected {base_id, samples, hyper}")
        samples = body["samples"]
        if not samples:
            return error(400, "EmptySampleSet", "samples must be non-empty")
        return {
            "adapter_digest": wire_train_digest(samples, body.get("hyper", {}))
        }

    @app.get("/health")
    async def health():
        return {"ok": True, "models": {"backend": "simulated", "dim": dim}}

    return app


def serve(bind: str = "127.0.0.1:8081", dim: int = DEFAULT_DIM) -> None:
    import uvicorn

    host, _, port = bind.partition(":")
    uvicorn.run(
        create_app(dim=dim),
        host=host or "127.0.0.1",
        port=int(port or 8081),
        log_level="warning",
    )
