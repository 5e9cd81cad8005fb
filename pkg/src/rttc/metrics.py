"""Run-level metric aggregation shared by the CLI run and report commands."""

from __future__ import annotations

from rttc.core import Strategy
from rttc.cost import CostParams, StrategyMode, accumulate, reconcile
from rttc.errors import EmptyInput
from rttc.pipeline import (
    PipelineMode,
    RoutingOutcome,
    strategy_distribution,
)
from rttc.qsc import cache_utilization


def observed_fractions(outcomes: list[RoutingOutcome]) -> tuple[float, float]:
    dist = strategy_distribution(outcomes)
    return dist[Strategy.RAG], dist[Strategy.TTT]


def infer_mode(outcomes: list[RoutingOutcome]) -> StrategyMode:
    if any(o.mode is PipelineMode.JOINT for o in outcomes):
        return StrategyMode.RTTC_JOINT
    return StrategyMode.RTTC


def outcome_domain_distribution(outcomes: list[RoutingOutcome]) -> dict[str, float]:
    """Domain fractions over the retrieved sets actually used per query."""
    counts: dict[str, int] = {}
    total = 0
    for o in outcomes:
        for d in o.retrieved_domains:
            counts[d] = counts.get(d, 0) + 1
            total += 1
    if total == 0:
        return {}
    return {d: c / total for d, c in sorted(counts.items())}


def build_metrics(
    outcomes: list[RoutingOutcome],
    error_count: int,
    cost_params: CostParams,
    mode: StrategyMode | None = None,
) -> dict:
    if not outcomes:
        raise EmptyInput("no outcomes to aggregate")
    mode = mode or infer_mode(outcomes)
    d_rag, d_ttt = observed_fractions(outcomes)
    ledger = accumulate(outcomes, cost_params)
    report = reconcile(ledger, len(outcomes), cost_params, d_rag, d_ttt, mode)
    util = cache_utilization(outcomes)
    return {
        "strategy_distribution": {
            s.value: f for s, f in strategy_distribution(outcomes).items()
        },
        "cache_utilization": util,
        "domain_distribution": outcome_domain_distribution(outcomes),
        "cost_report": {
            "mode": mode.value,
            "per_stage_totals": {
                stage.value: total
                for stage, total in sorted(
                    ledger.totals_by_stage.items(), key=lambda kv: kv[0].value
                )
            },
            "closed_form": report["closed"],
            "event_total": report["event"],
            "delta": report["delta"],
        },
        "error_count": error_count,
    }
