import random

import pytest

from rttc.core import ProducedBy, Query, RetrievedSet, Strategy, normalize
from rttc.cost import Stage
from rttc.errors import EmptyInput, EmptyRetrieval, EmptySampleSet
from rttc.gateway import (
    HashingEmbedder,
    ModelHandle,
    RewardScript,
    ScriptedScorer,
    SimulatedGenerator,
    SimulatedTrainer,
    adapter_digest,
)
from rttc.pipeline import (
    PipelineConfig,
    PipelineDeps,
    PipelineMode,
    augment_context,
    run_joint,
    run_sequential,
    run_stream,
    strategy_distribution,
    sweep_threshold,
)
from rttc.qsc import QscConfig, QscState

from conftest import make_sample, random_base


class CountingScorer:
    def __init__(self, script):
        self.inner = ScriptedScorer(script)
        self.calls = 0

    def score(self, query, response):
        self.calls += 1
        return self.inner.score(query, response)


def script_for(qid, r0=None, r_rag=None, r_ttt=None, default=0.0):
    table = {}
    if r0 is not None:
        table[(qid, ProducedBy.DIRECT)] = r0
    if r_rag is not None:
        table[(qid, ProducedBy.RAG)] = r_rag
    if r_ttt is not None:
        table[(qid, ProducedBy.TTT)] = r_ttt
    return RewardScript(table=table, default=default)


def make_deps(script, kb=None, qsc=None):
    if kb is None:
        kb = random_base(20, 64, seed=42)
    scorer = CountingScorer(script)
    return (
        PipelineDeps(
            generator=SimulatedGenerator(),
            scorer=scorer,
            embedder=HashingEmbedder(dim=64),
            retriever=lambda e, k, query_id="": kb.retrieve_top_k(e, k, query_id),
            trainer=SimulatedTrainer(),
            qsc=qsc,
        ),
        scorer,
    )


def cfg(mode=PipelineMode.SEQUENTIAL, **kw):
    return PipelineConfig(mode=mode, **kw)


class TestAugmentContext:
    def test_single_sample_template(self):
        s = RetrievedSet(
            samples=((make_sample_qa("a", "b"), 0.9),), k_requested=1
        )
        x = Query(id="q1", text="c")
        assert augment_context(s, x) == "### Example\nQ: a\nA: b\n### Query\nc"

    def test_blocks_in_retrieval_order(self):
        s = RetrievedSet(
            samples=(
                (make_sample_qa("first", "1", sid="sA"), 0.9),
                (make_sample_qa("second", "2", sid="sB"), 0.8),
            ),
            k_requested=2,
        )
        out = augment_context(s, Query(id="q1", text="x"))
        assert out.index("first") < out.index("second")

    def test_newlines_preserved(self):
        s = RetrievedSet(
            samples=((make_sample_qa("a", "line1\nline2"), 0.9),), k_requested=1
        )
        out = augment_context(s, Query(id="q1", text="x"))
        assert "A: line1\nline2\n" in out

    def test_empty_set_rejected(self):
        with pytest.raises((EmptyRetrieval, EmptySampleSet)):
            augment_context(
                RetrievedSet(samples=(), k_requested=1), Query(id="q", text="x")
            )


def make_sample_qa(prompt, completion, sid="s1"):
    from rttc.core import KnowledgeSample

    return KnowledgeSample(
        sample_id=sid,
        prompt=prompt,
        completion=completion,
        domain="math",
        embedding=normalize([1.0, 2.0]),
    )


class TestRunSequential:
    def test_no_adaptation_branch(self):
        q = Query(id="q1", text="easy question")
        deps, scorer = make_deps(script_for("q1", r0=2.5))
        outcome = run_sequential(q, cfg(tau_r=2.0), deps)
        assert outcome.strategy is Strategy.NO_ADAPTATION
        assert outcome.rewards == {"r0": 2.5}
        assert scorer.calls == 1
        assert outcome.final.produced_by is ProducedBy.DIRECT

    def test_rag_branch(self):
        q = Query(id="q1", text="medium question")
        deps, scorer = make_deps(script_for("q1", r0=1.0, r_rag=1.5))
        outcome = run_sequential(q, cfg(), deps)
        assert outcome.strategy is Strategy.RAG
        assert scorer.calls == 2
        assert outcome.rewards == {"r0": 1.0, "r_rag": 1.5}
        assert outcome.final.produced_by is ProducedBy.RAG

    def test_ttt_branch_digest(self):
        q = Query(id="q1", text="hard question")
        kb = random_base(20, 64, seed=42)
        deps, scorer = make_deps(script_for("q1", r0=1.0, r_rag=0.8), kb=kb)
        c = cfg()
        outcome = run_sequential(q, c, deps)
        assert outcome.strategy is Strategy.TTT
        assert scorer.calls == 2
        assert "r_ttt" not in outcome.rewards
        # the adapter digest is the digest of the same S_k RAG used
        e = HashingEmbedder(dim=64).embed(q.text)
        s_k = kb.retrieve_top_k(e, c.k)
        assert outcome.final.adapter_digest == adapter_digest(
            s_k.sample_ids(), c.hyper
        )

    def test_reward_at_threshold_is_no_adaptation(self):
        q = Query(id="q1", text="boundary")
        deps, _ = make_deps(script_for("q1", r0=2.0))
        assert (
            run_sequential(q, cfg(tau_r=2.0), deps).strategy
            is Strategy.NO_ADAPTATION
        )

    def test_rag_equal_to_r0_goes_ttt(self):
        q = Query(id="q1", text="tie goes to training")
        deps, _ = make_deps(script_for("q1", r0=1.0, r_rag=1.0))
        assert run_sequential(q, cfg(), deps).strategy is Strategy.TTT

    def test_empty_retrieval_is_error(self):
        from rttc.kb import KnowledgeBase

        q = Query(id="q1", text="no kb")
        deps, _ = make_deps(script_for("q1", r0=1.0), kb=KnowledgeBase(dim=64))
        with pytest.raises(EmptyRetrieval):
            run_sequential(q, cfg(), deps)

    def test_cost_events_per_branch(self):
        q = Query(id="q1", text="hard")
        deps, _ = make_deps(script_for("q1", r0=1.0, r_rag=0.5))
        outcome = run_sequential(q, cfg(), deps)
        stages = [e.stage for e in outcome.cost_events]
        assert stages == [
            Stage.BASE_INFER,
            Stage.REWARD_EVAL,
            Stage.RETRIEVE,
            Stage.RAG_INFER,
            Stage.REWARD_EVAL,
            Stage.TTT_TRAIN,
        ]


class TestRunJoint:
    def test_ttt_wins(self):
        q = Query(id="q1", text="x")
        deps, scorer = make_deps(script_for("q1", r0=1.0, r_rag=1.2, r_ttt=1.8))
        outcome = run_joint(q, cfg(PipelineMode.JOINT), deps)
        assert outcome.strategy is Strategy.TTT
        assert scorer.calls == 3
        assert outcome.rewards == {"r0": 1.0, "r_rag": 1.2, "r_ttt": 1.8}

    def test_rag_wins(self):
        q = Query(id="q1", text="x")
        deps, _ = make_deps(script_for("q1", r0=1.0, r_rag=1.8, r_ttt=1.2))
        assert run_joint(q, cfg(PipelineMode.JOINT), deps).strategy is Strategy.RAG

    def test_tie_goes_to_rag(self):
        q = Query(id="q1", text="x")
        deps, _ = make_deps(script_for("q1", r0=1.0, r_rag=1.5, r_ttt=1.5))
        assert run_joint(q, cfg(PipelineMode.JOINT), deps).strategy is Strategy.RAG

    def test_gate_behaves_like_sequential(self):
        q = Query(id="q1", text="x")
        deps, scorer = make_deps(script_for("q1", r0=3.0))
        outcome = run_joint(q, cfg(PipelineMode.JOINT), deps)
        assert outcome.strategy is Strategy.NO_ADAPTATION
        assert scorer.calls == 1

    def test_same_retrieved_set_for_both_branches(self):
        q = Query(id="q1", text="x")
        kb = random_base(20, 64, seed=7)
        deps, _ = make_deps(script_for("q1", r0=1.0, r_rag=0.2, r_ttt=0.6), kb=kb)
        c = cfg(PipelineMode.JOINT)
        outcome = run_joint(q, c, deps)
        e = HashingEmbedder(dim=64).embed(q.text)
        s_k = kb.retrieve_top_k(e, c.k)
        assert outcome.final.adapter_digest == adapter_digest(
            s_k.sample_ids(), c.hyper
        )


class TestRunStream:
    def test_all_above_threshold(self):
        queries = [Query(id=f"q{i}", text=f"t{i}") for i in range(3)]
        deps, _ = make_deps(RewardScript(default=5.0))
        outcomes, errors = run_stream(queries, cfg(), deps)
        assert not errors
        dist = strategy_distribution(outcomes)
        assert dist[Strategy.NO_ADAPTATION] == 1.0

    def test_mixed_scripts(self):
        table = {}
        table[("q0", ProducedBy.DIRECT)] = 5.0
        table[("q1", ProducedBy.DIRECT)] = 1.0
        table[("q1", ProducedBy.RAG)] = 2.0
        table[("q2", ProducedBy.DIRECT)] = 1.0
        table[("q2", ProducedBy.RAG)] = 0.5
        script = RewardScript(table=table, default=0.0)
        queries = [Query(id=f"q{i}", text=f"t{i}") for i in range(3)]
        deps, _ = make_deps(script)
        outcomes, _ = run_stream(queries, cfg(), deps)
        assert [o.strategy for o in outcomes] == [
            Strategy.NO_ADAPTATION,
            Strategy.RAG,
            Strategy.TTT,
        ]

    def test_empty_stream(self):
        deps, _ = make_deps(RewardScript(default=5.0))
        with pytest.raises(EmptyInput):
            run_stream([], cfg(), deps)

    def test_per_query_errors_recorded(self):
        from rttc.kb import KnowledgeBase

        # q1 needs retrieval but the base is empty; q0 stays direct
        script = RewardScript(
            table={("q0", ProducedBy.DIRECT): 5.0}, default=0.0
        )
        deps, _ = make_deps(script, kb=KnowledgeBase(dim=64))
        queries = [Query(id="q0", text="a"), Query(id="q1", text="b")]
        outcomes, errors = run_stream(queries, cfg(), deps)
        assert len(outcomes) == 1
        assert len(errors) == 1
        assert errors[0].query_id == "q1"
        assert "EmptyRetrieval" in errors[0].error

    def test_determinism(self):
        queries = [Query(id=f"q{i}", text=f"t{i}") for i in range(5)]
        script = RewardScript(default=1.0)
        a, _ = run_stream(queries, cfg(), make_deps(script)[0])
        b, _ = run_stream(queries, cfg(), make_deps(script)[0])
        assert [o.to_json_dict() for o in a] == [o.to_json_dict() for o in b]


class TestStrategyDistribution:
    def test_counting(self):
        queries = [Query(id=f"q{i}", text=f"t{i}") for i in range(4)]
        table = {
            ("q0", ProducedBy.DIRECT): 5.0,
            ("q1", ProducedBy.DIRECT): 1.0,
            ("q1", ProducedBy.RAG): 2.0,
        }
        deps, _ = make_deps(RewardScript(table=table, default=0.0))
        outcomes, _ = run_stream(queries, cfg(), deps)
        dist = strategy_distribution(outcomes)
        assert dist[Strategy.NO_ADAPTATION] == 0.25
        assert dist[Strategy.RAG] == 0.25
        assert dist[Strategy.TTT] == 0.5
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            strategy_distribution([])


class TestSweepThreshold:
    def _scripted_queries(self, n=50, seed=3):
        rng = random.Random(seed)
        queries = []
        table = {}
        for i in range(n):
            qid = f"q{i}"
            queries.append(Query(id=qid, text=f"text {i}"))
            table[(qid, ProducedBy.DIRECT)] = rng.uniform(0.0, 10.0)
            table[(qid, ProducedBy.RAG)] = rng.uniform(0.0, 10.0)
        return queries, RewardScript(table=table, default=0.0)

    def test_no_adaptation_fraction_non_increasing(self):
        queries, script = self._scripted_queries()
        rows = sweep_threshold(
            queries,
            [2.0, 5.0, 8.0],
            cfg(),
            make_deps=lambda: make_deps(script)[0],
        )
        fractions = [r["distribution"]["NoAdaptation"] for r in rows]
        assert fractions == sorted(fractions, reverse=True)

    def test_single_tau_matches_run_stream(self):
        queries, script = self._scripted_queries()
        rows = sweep_threshold(
            queries, [2.0], cfg(), make_deps=lambda: make_deps(script)[0]
        )
        outcomes, _ = run_stream(queries, cfg(tau_r=2.0), make_deps(script)[0])
        dist = {s.value: f for s, f in strategy_distribution(outcomes).items()}
        assert rows[0]["distribution"] == dist

    def test_tau_below_all_r0(self):
        queries, script = self._scripted_queries()
        rows = sweep_threshold(
            queries, [-1.0], cfg(), make_deps=lambda: make_deps(script)[0]
        )
        assert rows[0]["distribution"]["NoAdaptation"] == 1.0

    def test_unsorted_taus_rejected(self):
        queries, script = self._scripted_queries(n=3)
        with pytest.raises(ValueError):
            sweep_threshold(
                queries, [5.0, 2.0], cfg(), make_deps=lambda: make_deps(script)[0]
            )


class TestQscIntegration:
    def test_duplicate_query_text_hits_cache(self):
        # same text twice: second run reuses both retrieval and adapter
        kb = random_base(20, 64, seed=9)
        script = RewardScript(default=0.0)  # everything lands in TTT
        qsc = QscState(QscConfig())
        deps, _ = make_deps(script, kb=kb, qsc=qsc)
        c = cfg(qsc_enabled=True)
        q1 = Query(id="q1", text="same text")
        q2 = Query(id="q2", text="same text")
        o1 = run_sequential(q1, c, deps)
        o2 = run_sequential(q2, c, deps)
        assert o1.cache_flags == {}
        assert o2.cache_flags == {"rag_hit": True, "ttt_hit": True}
        assert o2.final.adapter_digest == o1.final.adapter_digest
        stages2 = [e.stage for e in o2.cost_events]
        assert Stage.RETRIEVE not in stages2
        assert Stage.TTT_TRAIN not in stages2

    def test_transparency_on_dissimilar_stream(self):
        kb = random_base(40, 64, seed=10)
        script = RewardScript(default=0.0)
        # texts with disjoint tokens embed nearly orthogonally; verify and run
        texts = ["alpha bravo", "charlie delta", "echo foxtrot", "golf hotel"]
        emb = HashingEmbedder(dim=64)
        from rttc.core import inner_product

        es = [emb.embed(t) for t in texts]
        for i in range(len(es)):
            for j in range(i + 1, len(es)):
                assert inner_product(es[i], es[j]) <= 0.5
        queries = [Query(id=f"q{i}", text=t) for i, t in enumerate(texts)]
        on, _ = run_stream(
            queries,
            cfg(qsc_enabled=True),
            make_deps(script, kb=kb, qsc=QscState())[0],
        )
        off, _ = run_stream(queries, cfg(), make_deps(script, kb=kb)[0])
        assert [o.to_json_dict() for o in on] == [o.to_json_dict() for o in off]
