"""Reward-gated routing: sequential pipeline and the joint variant.

Sequential: score the base response; if it clears the threshold, return it
(1 score call). Otherwise retrieve, run RAG, and score it (2 calls); if RAG
does not beat the base reward, train on the same retrieved set and return
the adapted response unscored.

Joint: same gate, but both adapted responses are produced from the same
retrieved set and both scored (3 calls on the adapted path); the higher
reward wins, ties going to RAG because it is the cheaper branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from rttc.core import (
    ProducedBy,
    Query,
    Response,
    RetrievedSet,
    Strategy,
)
from rttc.cost import CostEvent, Stage
from rttc.errors import EmptyInput, EmptyRetrieval, RttcError
from rttc.gateway import AUGMENTATION_MARKER, ModelHandle, TrainHyper
from rttc.qsc import QscState

DEFAULT_TAU_R = 2.0
DEFAULT_K = 4
RETRIEVAL_SIZES = (1, 2, 4, 8, 16)


class PipelineMode(str, Enum):
    SEQUENTIAL = "Sequential"
    JOINT = "Joint"


@dataclass(frozen=True)
class PipelineConfig:
    tau_r: float = DEFAULT_TAU_R
    k: int = DEFAULT_K
    mode: PipelineMode = PipelineMode.SEQUENTIAL
    hyper: TrainHyper = TrainHyper()
    qsc_enabled: bool = False
    # score the RAG response against the augmented prompt instead of the
    # original query (off by default)
    score_against_augmented: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class PipelineDeps:
    """Capabilities the pipeline routes through.

    ``retriever`` is a callable (embedding, k, query_id) -> RetrievedSet so
    that both an embedded knowledge base and a remote client fit.
    """

    generator: object
    scorer: object
    embedder: object
    retriever: Callable[..., RetrievedSet]
    trainer: object
    base: ModelHandle = field(default_factory=ModelHandle)
    qsc: Optional[QscState] = None


@dataclass(frozen=True)
class RoutingOutcome:
    query_id: str
    strategy: Strategy
    final: Response
    rewards: dict[str, float]
    cost_events: tuple[CostEvent, ...]
    cache_flags: dict[str, bool]
    retrieved_domains: tuple[str, ...] = ()
    mode: PipelineMode = PipelineMode.SEQUENTIAL

    def entered_rag_stage(self) -> bool:
        return self.strategy is not Strategy.NO_ADAPTATION

    def entered_ttt_stage(self) -> bool:
        if self.mode is PipelineMode.JOINT:
            return self.entered_rag_stage()
        return self.strategy is Strategy.TTT

    def score_calls(self) -> int:
        return sum(
            1 for e in self.cost_events if e.stage is Stage.REWARD_EVAL
        )

    def to_json_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "strategy": self.strategy.value,
            "final": self.final.to_json_dict(),
            "rewards": self.rewards,
            "cost_events": [e.to_json_dict() for e in self.cost_events],
            "cache_flags": self.cache_flags,
            "retrieved_domains": list(self.retrieved_domains),
            "mode": self.mode.value,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RoutingOutcome":
        return cls(
            query_id=d["query_id"],
            strategy=Strategy(d["strategy"]),
            final=Response.from_json_dict(d["final"]),
            rewards=dict(d["rewards"]),
            cost_events=tuple(
                CostEvent.from_json_dict(e) for e in d["cost_events"]
            ),
            cache_flags=dict(d["cache_flags"]),
            retrieved_domains=tuple(d.get("retrieved_domains", ())),
            mode=PipelineMode(d.get("mode", "Sequential")),
        )


def augment_context(s: RetrievedSet, x: Query) -> str:
    """Render retrieved samples ahead of the query using the fixed template.

    The leading marker line doubles as the simulated generator's RAG
    provenance signal.
    """
    if len(s) == 0:
        raise EmptyRetrieval("cannot augment with an empty retrieved set")
    blocks = [
        f"{AUGMENTATION_MARKER}\nQ: {sample.prompt}\nA: {sample.completion}\n"
        for sample, _ in s.samples
    ]
    return "".join(blocks) + f"### Query\n{x.text}"


def _obtain_samples(x: Query, e, cfg: PipelineConfig, deps: PipelineDeps):
    """Retrieved set for the adapted path, through the cache when enabled."""
    if cfg.qsc_enabled and deps.qsc is not None:
        s, hit = deps.qsc.lookup_or_retrieve(
            e, cfg.k, lambda emb, k: deps.retriever(emb, k, x.id)
        )
    else:
        s, hit = deps.retriever(e, cfg.k, x.id), False
    if len(s) == 0:
        raise EmptyRetrieval(f"retrieval returned no samples for query {x.id!r}")
    return s, hit


def _obtain_adapter(e, s: RetrievedSet, cfg: PipelineConfig, deps: PipelineDeps):
    if cfg.qsc_enabled and deps.qsc is not None:
        return deps.qsc.lookup_or_train(
            e, s, lambda samples: deps.trainer.train(deps.base, samples, cfg.hyper)
        )
    return deps.trainer.train(deps.base, s, cfg.hyper), False


def _scoring_query(x: Query, context: str, cfg: PipelineConfig) -> Query:
    if cfg.score_against_augmented:
        return Query(id=x.id, text=context, domain_hint=x.domain_hint)
    return x


def run_sequential(x: Query, cfg: PipelineConfig, deps: PipelineDeps) -> RoutingOutcome:
    if cfg.mode is not PipelineMode.SEQUENTIAL:
        raise ValueError("config mode must be Sequential")
    events: list[CostEvent] = []
    flags: dict[str, bool] = {}

    y0 = deps.generator.generate(deps.base, x.text)
    events.append(CostEvent(query_id=x.id, stage=Stage.BASE_INFER))
    r0 = deps.scorer.score(x, y0).value
    events.append(CostEvent(query_id=x.id, stage=Stage.REWARD_EVAL))
    if r0 >= cfg.tau_r:
        return RoutingOutcome(
            query_id=x.id,
            strategy=Strategy.NO_ADAPTATION,
            final=y0,
            rewards={"r0": r0},
            cost_events=tuple(events),
            cache_flags=flags,
        )

    e = deps.embedder.embed(x.text)
    s, rag_hit = _obtain_samples(x, e, cfg, deps)
    if rag_hit:
        flags["rag_hit"] = True
    else:
        events.append(CostEvent(query_id=x.id, stage=Stage.RETRIEVE))
    context = augment_context(s, x)
    y_rag = deps.generator.generate(deps.base, context)
    events.append(CostEvent(query_id=x.id, stage=Stage.RAG_INFER))
    r_rag = deps.scorer.score(_scoring_query(x, context, cfg), y_rag).value
    events.append(CostEvent(query_id=x.id, stage=Stage.REWARD_EVAL))
    if r_rag > r0:
        return RoutingOutcome(
            query_id=x.id,
            strategy=Strategy.RAG,
            final=y_rag,
            rewards={"r0": r0, "r_rag": r_rag},
            cost_events=tuple(events),
            cache_flags=flags,
            retrieved_domains=tuple(s.domains()),
        )

    adapter, ttt_hit = _obtain_adapter(e, s, cfg, deps)
    if ttt_hit:
        flags["ttt_hit"] = True
    else:
        events.append(CostEvent(query_id=x.id, stage=Stage.TTT_TRAIN))
    y_ttt = deps.generator.generate(deps.base.with_adapter(adapter), x.text)
    return RoutingOutcome(
        query_id=x.id,
        strategy=Strategy.TTT,
        final=y_ttt,
        rewards={"r0": r0, "r_rag": r_rag},
        cost_events=tuple(events),
        cache_flags=flags,
        retrieved_domains=tuple(s.domains()),
    )


def run_joint(x: Query, cfg: PipelineConfig, deps: PipelineDeps) -> RoutingOutcome:
    if cfg.mode is not PipelineMode.JOINT:
        raise ValueError("config mode must be Joint")
    events: list[CostEvent] = []
    flags: dict[str, bool] = {}

    y0 = deps.generator.generate(deps.base, x.text)
    events.append(CostEvent(query_id=x.id, stage=Stage.BASE_INFER))
    r0 = deps.scorer.score(x, y0).value
    events.append(CostEvent(query_id=x.id, stage=Stage.REWARD_EVAL))
    if r0 >= cfg.tau_r:
        return RoutingOutcome(
            query_id=x.id,
            strategy=Strategy.NO_ADAPTATION,
            final=y0,
            rewards={"r0": r0},
            cost_events=tuple(events),
            cache_flags=flags,
            mode=PipelineMode.JOINT,
        )

    e = deps.embedder.embed(x.text)
    s, rag_hit = _obtain_samples(x, e, cfg, deps)
    if rag_hit:
        flags["rag_hit"] = True
    else:
        events.append(CostEvent(query_id=x.id, stage=Stage.RETRIEVE))
    context = augment_context(s, x)
    y_rag = deps.generator.generate(deps.base, context)
    events.append(CostEvent(query_id=x.id, stage=Stage.RAG_INFER))

    adapter, ttt_hit = _obtain_adapter(e, s, cfg, deps)
    if ttt_hit:
        flags["ttt_hit"] = True
    else:
        events.append(CostEvent(query_id=x.id, stage=Stage.TTT_TRAIN))
    y_ttt = deps.generator.generate(deps.base.with_adapter(adapter), x.text)

    r_rag = deps.scorer.score(_scoring_query(x, context, cfg), y_rag).value
    events.append(CostEvent(query_id=x.id, stage=Stage.REWARD_EVAL))
    r_ttt = deps.scorer.score(x, y_ttt).value
    events.append(CostEvent(query_id=x.id, stage=Stage.REWARD_EVAL))

    # max selection; ties go to the cheaper RAG branch
    if r_ttt > r_rag:
        strategy, final = Strategy.TTT, y_ttt
    else:
        strategy, final = Strategy.RAG, y_rag
    return RoutingOutcome(
        query_id=x.id,
        strategy=strategy,
        final=final,
        rewards={"r0": r0, "r_rag": r_rag, "r_ttt": r_ttt},
        cost_events=tuple(events),
        cache_flags=flags,
        retrieved_domains=tuple(s.domains()),
        mode=PipelineMode.JOINT,
    )


def run_query(x: Query, cfg: PipelineConfig, deps: PipelineDeps) -> RoutingOutcome:
    if cfg.mode is PipelineMode.JOINT:
        return run_joint(x, cfg, deps)
    return run_sequential(x, cfg, deps)


@dataclass(frozen=True)
class QueryError:
    query_id: str
    error: str

    def to_json_dict(self) -> dict:
        return {"query_id": self.query_id, "error": self.error}


def run_stream(
    queries: list[Query], cfg: PipelineConfig, deps: PipelineDeps
) -> tuple[list[RoutingOutcome], list[QueryError]]:
    """Process queries in order; per-query errors are recorded, not raised."""
    if not queries:
        raise EmptyInput("empty query stream")
    outcomes: list[RoutingOutcome] = []
    errors: list[QueryError] = []
    for x in queries:
        try:
            outcomes.append(run_query(x, cfg, deps))
        except RttcError as exc:
            errors.append(
                QueryError(query_id=x.id, error=f"{type(exc).__name__}: {exc}")
            )
    return outcomes, errors


def strategy_distribution(outcomes: list[RoutingOutcome]) -> dict[Strategy, float]:
    if not outcomes:
        raise EmptyInput("no outcomes to aggregate")
    counts = {s: 0 for s in Strategy}
    for o in outcomes:
        counts[o.strategy] += 1
    return {s: c / len(outcomes) for s, c in counts.items()}


def sweep_threshold(
    queries: list[Query],
    taus: list[float],
    cfg: PipelineConfig,
    make_deps: Callable[[], PipelineDeps],
    cost_params=None,
) -> list[dict]:
    """One run per threshold, everything else (scripts, config) fixed.

    ``make_deps`` builds fresh dependencies per row so cache state does not
    leak between thresholds.
    """
    from rttc.cost import accumulate

    if not taus:
        raise EmptyInput("no thresholds to sweep")
    if sorted(taus) != list(taus):
        raise ValueError("taus must be sorted ascending")
    rows = []
    for tau in taus:
        row_cfg = PipelineConfig(
            tau_r=tau,
            k=cfg.k,
            mode=cfg.mode,
            hyper=cfg.hyper,
            qsc_enabled=cfg.qsc_enabled,
            score_against_augmented=cfg.score_against_augmented,
        )
        outcomes, errors = run_stream(queries, row_cfg, make_deps())
        row = {
            "tau": tau,
            "distribution": {
                s.value: f for s, f in strategy_distribution(outcomes).items()
            },
            "error_count": len(errors),
        }
        if cost_params is not None:
            ledger = accumulate(outcomes, cost_params)
            row["mean_cost"] = ledger.total() / len(outcomes) if outcomes else 0.0
        rows.append(row)
    return rows
