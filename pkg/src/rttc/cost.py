"""Cost algebra: closed-form totals per strategy and event-level accounting.

Pipelines emit one CostEvent per executed stage with ``units`` counting
occurrences (cache-bypassed stages emit nothing). ``accumulate`` prices
those occurrences against a CostParams instance; ``reconcile`` compares
the priced total with the closed-form expression for the run's mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from rttc.errors import InvalidFractions, UnknownStage

RECONCILE_REL_TOL = 1e-9


class Stage(str, Enum):
    BASE_INFER = "BaseInfer"
    REWARD_EVAL = "RewardEval"
    RETRIEVE = "Retrieve"
    RAG_INFER = "RagInfer"
    TTT_TRAIN = "TttTrain"


class StrategyMode(str, Enum):
    NO_ADAPT = "NoAdapt"
    RAG = "Rag"
    TTT = "Ttt"
    RTTC = "Rttc"
    RTTC_JOINT = "RttcJoint"


@dataclass(frozen=True)
class CostParams:
    """Abstract per-stage cost constants; training must cost more than RAG."""

    c0: float
    c_ret: float
    c_rag: float
    c_ttt: float
    c_rew: float

    def __post_init__(self):
        if min(self.c0, self.c_ret, self.c_rag, self.c_ttt, self.c_rew) < 0:
            raise ValueError("cost constants must be non-negative")
        if not (self.c_ttt > self.c_rag > 0):
            raise ValueError("requires c_ttt > c_rag > 0")

    def price(self, stage: Stage) -> float:
        table = {
            Stage.BASE_INFER: self.c0,
            Stage.REWARD_EVAL: self.c_rew,
            Stage.RETRIEVE: self.c_ret,
            Stage.RAG_INFER: self.c_rag,
            Stage.TTT_TRAIN: self.c_ttt,
        }
        try:
            return table[stage]
        except KeyError:
            raise UnknownStage(f"no price for stage {stage!r}") from None

    def to_json_dict(self) -> dict:
        return {
            "c0": self.c0,
            "c_ret": self.c_ret,
            "c_rag": self.c_rag,
            "c_ttt": self.c_ttt,
            "c_rew": self.c_rew,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CostParams":
        return cls(**{k: float(d[k]) for k in ("c0", "c_ret", "c_rag", "c_ttt", "c_rew")})


@dataclass(frozen=True)
class CostEvent:
    query_id: str
    stage: Stage
    units: float = 1.0
    wall_seconds: Optional[float] = None
    token_count: Optional[int] = None

    def __post_init__(self):
        if self.units < 0:
            raise ValueError("units must be >= 0")

    def to_json_dict(self) -> dict:
        d = {"query_id": self.query_id, "stage": self.stage.value, "units": self.units}
        if self.wall_seconds is not None:
            d["wall_seconds"] = self.wall_seconds
        if self.token_count is not None:
            d["token_count"] = self.token_count
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "CostEvent":
        return cls(
            query_id=d["query_id"],
            stage=Stage(d["stage"]),
            units=float(d.get("units", 1.0)),
            wall_seconds=d.get("wall_seconds"),
            token_count=d.get("token_count"),
        )


@dataclass
class CostLedger:
    events: list[CostEvent] = field(default_factory=list)
    totals_by_stage: dict[Stage, float] = field(default_factory=dict)

    def total(self) -> float:
        return sum(self.totals_by_stage.values())

    def merge(self, other: "CostLedger") -> "CostLedger":
        merged = CostLedger(events=self.events + other.events)
        for stage in Stage:
            t = self.totals_by_stage.get(stage, 0.0) + other.totals_by_stage.get(
                stage, 0.0
            )
            if t:
                merged.totals_by_stage[stage] = t
        return merged


def _check_fractions(d_rag: float, d_ttt: float) -> None:
    if d_rag < 0 or d_ttt < 0 or d_rag + d_ttt > 1 + 1e-12:
        raise InvalidFractions(f"invalid routing fractions ({d_rag}, {d_ttt})")


def closed_form(
    mode: StrategyMode, n: int, p: CostParams, d_rag: float = 0.0, d_ttt: float = 0.0
) -> float:
    """Total cost of serving n queries under the given strategy mode."""
    if n < 0:
        raise ValueError("n must be >= 0")
    _check_fractions(d_rag, d_ttt)
    if mode is StrategyMode.NO_ADAPT:
        return n * p.c0
    if mode is StrategyMode.RAG:
        return n * (p.c0 + p.c_ret + p.c_rag)
    if mode is StrategyMode.TTT:
        return n * (p.c0 + p.c_ret + p.c_ttt)
    adapted = d_rag + d_ttt
    if mode is StrategyMode.RTTC:
        return (
            n * (p.c0 + p.c_rew)
            + adapted * n * (p.c_ret + p.c_rag + p.c_rew)
            + d_ttt * n * p.c_ttt
        )
    if mode is StrategyMode.RTTC_JOINT:
        return n * (p.c0 + p.c_rew) + adapted * n * (
            p.c_ret + p.c_rag + p.c_ttt + 2 * p.c_rew
        )
    raise ValueError(f"unknown mode {mode!r}")


def accumulate(outcomes, p: CostParams) -> CostLedger:
    """Price every stage event in a list of RoutingOutcomes."""
    ledger = CostLedger()
    for outcome in outcomes:
        for event in outcome.cost_events:
            priced = CostEvent(
                query_id=event.query_id,
                stage=event.stage,
                units=event.units * p.price(event.stage),
                wall_seconds=event.wall_seconds,
                token_count=event.token_count,
            )
            ledger.events.append(priced)
            ledger.totals_by_stage[priced.stage] = (
                ledger.totals_by_stage.get(priced.stage, 0.0) + priced.units
            )
    return ledger


def baseline_events(mode: StrategyMode, query_id: str) -> list[CostEvent]:
    """Per-query stage events for the vanilla baselines of the cost table.

    Vanilla RAG and TTT retrieve for every query and never invoke the
    reward model.
    """
    if mode is StrategyMode.NO_ADAPT:
        stages = [Stage.BASE_INFER]
    elif mode is StrategyMode.RAG:
        stages = [Stage.BASE_INFER, Stage.RETRIEVE, Stage.RAG_INFER]
    elif mode is StrategyMode.TTT:
        stages = [Stage.BASE_INFER, Stage.RETRIEVE, Stage.TTT_TRAIN]
    else:
        raise ValueError(f"{mode!r} is not a vanilla baseline")
    return [CostEvent(query_id=query_id, stage=s) for s in stages]


def reconcile(
    ledger: CostLedger,
    n: int,
    p: CostParams,
    observed_d_rag: float,
    observed_d_ttt: float,
    mode: StrategyMode,
) -> dict:
    """Compare the event-ledger total against the closed form."""
    closed = closed_form(mode, n, p, observed_d_rag, observed_d_ttt)
    event = ledger.total()
    return {"closed": closed, "event": event, "delta": abs(closed - event)}
