"""Run configuration: parsing, validation, and dependency wiring.

The config file is JSON with sections ``pipeline``, ``qsc``, ``cost``,
``backends`` plus ``seed`` and ``out_dir``. Unknown keys anywhere are
rejected so typos fail loudly. Defaults reproduce the reference
hyperparameters (tau_r=2.0, tau_e=0.5, budget=8, k=4, epochs=2,
lr=5e-5, batch=1, rank=32, alpha=16).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from rttc.core import DEFAULT_DIM, ProducedBy, Query
from rttc.cost import CostParams
from rttc.errors import ConfigError, IoError
from rttc.gateway import (
    HashScorer,
    HashingEmbedder,
    RemoteModelClient,
    RewardScript,
    ScriptedScorer,
    SimulatedGenerator,
    SimulatedTrainer,
    TrainHyper,
)
from rttc.pipeline import PipelineConfig, PipelineDeps, PipelineMode
from rttc.qsc import QscConfig, QscState


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class BackendsConfig:
    kb_mode: str = "embedded"  # embedded | remote | none
    kb_base: Optional[str] = None
    kb_url: Optional[str] = None
    model_mode: str = "simulated"  # simulated | remote
    model_url: Optional[str] = None
    dim: int = DEFAULT_DIM
    reward_script: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = PipelineConfig()
    qsc: QscConfig = QscConfig()
    cost: CostParams = CostParams(c0=1.0, c_ret=1.0, c_rag=2.0, c_ttt=5.0, c_rew=0.5)
    backends: BackendsConfig = BackendsConfig()
    seed: int = 0
    out_dir: Optional[str] = None


def parse_run_config(raw: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(
        raw, {"pipeline", "qsc", "cost", "backends", "seed", "out_dir"}, "config"
    )
    try:
        p = dict(raw.get("pipeline", {}))
        _check_keys(
            p,
            {"tau_r", "k", "mode", "hyper", "qsc_enabled", "score_against_augmented"},
            "pipeline",
        )
        hyper = TrainHyper.from_json_dict(p.pop("hyper")) if "hyper" in p else TrainHyper()
        mode = PipelineMode(p.pop("mode", "Sequential"))
        pipeline = PipelineConfig(
            tau_r=float(p.get("tau_r", 2.0)),
            k=int(p.get("k", 4)),
            mode=mode,
            hyper=hyper,
            qsc_enabled=bool(p.get("qsc_enabled", False)),
            score_against_augmented=bool(p.get("score_against_augmented", False)),
        )

        q = dict(raw.get("qsc", {}))
        _check_keys(q, {"tau_e", "budget", "metric", "eviction"}, "qsc")
        qsc = QscConfig(
            tau_e=float(q.get("tau_e", 0.5)),
            budget=int(q.get("budget", 8)),
            metric=q.get("metric", "inner_product"),
            eviction=q.get("eviction", "lfu"),
        )

        c = dict(raw.get("cost", {}))
        _check_keys(c, {"c0", "c_ret", "c_rag", "c_ttt", "c_rew"}, "cost")
        defaults = {"c0": 1.0, "c_ret": 1.0, "c_rag": 2.0, "c_ttt": 5.0, "c_rew": 0.5}
        defaults.update({k: float(v) for k, v in c.items()})
        cost = CostParams(**defaults)

        b = dict(raw.get("backends", {}))
        _check_keys(b, {"kb", "model"}, "backends")
        kb = dict(b.get("kb", {}))
        _check_keys(kb, {"mode", "base", "url"}, "backends.kb")
        model = dict(b.get("model", {}))
        _check_keys(model, {"mode", "url", "dim", "reward_script"}, "backends.model")
        kb_base = kb.get("base")
        if kb_base is not None and not Path(kb_base).is_absolute():
            kb_base = str(base_dir / kb_base)
        script = model.get("reward_script")
        if script is not None and not Path(script).is_absolute():
            script = str(base_dir / script)
        backends = BackendsConfig(
            kb_mode=kb.get("mode", "embedded" if kb_base else "none"),
            kb_base=kb_base,
            kb_url=kb.get("url"),
            model_mode=model.get("mode", "simulated"),
            model_url=model.get("url"),
            dim=int(model.get("dim", DEFAULT_DIM)),
            reward_script=script,
        )
        if backends.kb_mode not in ("embedded", "remote", "none"):
            raise ConfigError(f"unknown kb mode {backends.kb_mode!r}")
        if backends.kb_mode == "embedded" and not backends.kb_base:
            raise ConfigError("embedded kb requires backends.kb.base")
        if backends.kb_mode == "remote" and not backends.kb_url:
            raise ConfigError("remote kb requires backends.kb.url")
        if backends.model_mode not in ("simulated", "remote"):
            raise ConfigError(f"unknown model mode {backends.model_mode!r}")
        if backends.model_mode == "remote" and not backends.model_url:
            raise ConfigError("remote model requires backends.model.url")

        return RunConfig(
            pipeline=pipeline,
            qsc=qsc,
            cost=cost,
            backends=backends,
            seed=int(raw.get("seed", 0)),
            out_dir=raw.get("out_dir"),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_run_config(raw, base_dir=path.parent)


def load_reward_script(path: str | Path) -> RewardScript:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read reward script {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"reward script {path} is not valid JSON: {exc}") from exc
    table = {}
    for key, value in raw.get("table", {}).items():
        qid, _, produced = key.rpartition("|")
        if not qid:
            raise ConfigError(f"script key {key!r} must look like '<query_id>|<ProducedBy>'")
        table[(qid, ProducedBy(produced))] = float(value)
    return RewardScript(table=table, default=float(raw.get("default", 1.0)))


def load_queries(path: str | Path) -> list[Query]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read queries {path}: {exc}") from exc
    queries = []
    seen = set()
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            q = Query.from_json_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"{path}:{i}: bad query record: {exc}") from exc
        if q.id in seen:
            raise ConfigError(f"{path}:{i}: duplicate query id {q.id!r}")
        seen.add(q.id)
        queries.append(q)
    return queries


def build_deps(config: RunConfig, qsc_state: Optional[QscState] = None) -> PipelineDeps:
    """Wire backends into PipelineDeps per the configured modes."""
    b = config.backends
    if b.model_mode == "remote":
        client = RemoteModelClient(b.model_url)
        generator = scorer = embedder = trainer = client
    else:
        generator = SimulatedGenerator()
        if b.reward_script:
            scorer = ScriptedScorer(load_reward_script(b.reward_script))
        else:
            scorer = HashScorer()
        embedder = HashingEmbedder(dim=b.dim)
        trainer = SimulatedTrainer()

    if b.kb_mode == "remote":
        from rttc.kb_service import RemoteRetriever

        retriever = RemoteRetriever(b.kb_url)
    elif b.kb_mode == "embedded":
        from rttc.kb import KnowledgeBase

        kb = KnowledgeBase.load(b.kb_base)
        retriever = lambda e, k, query_id="": kb.retrieve_top_k(e, k, query_id)
    else:
        def retriever(e, k, query_id=""):
            from rttc.errors import EmptyRetrieval

            raise EmptyRetrieval("no knowledge base configured")

    if config.pipeline.qsc_enabled and qsc_state is None:
        qsc_state = QscState(config.qsc)
    return PipelineDeps(
        generator=generator,
        scorer=scorer,
        embedder=embedder,
        retriever=retriever,
        trainer=trainer,
        qsc=qsc_state,
    )
