import math

import pytest
from hypothesis import given, strategies as st

from rttc.core import (
    Embedding,
    ProducedBy,
    Query,
    Response,
    RewardScore,
    inner_product,
    normalize,
)
from rttc.errors import DimMismatch, ZeroVector

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)
raw_vectors = st.lists(finite_floats, min_size=1, max_size=16).filter(
    lambda v: math.sqrt(math.fsum(x * x for x in v)) > 1e-6
)


class TestNormalize:
    def test_three_four_five(self):
        assert normalize([3.0, 4.0]).values == (0.6, 0.8)

    def test_already_unit(self):
        assert normalize([1.0, 0.0]).values == (1.0, 0.0)

    def test_norm_two(self):
        assert normalize([1.0, 1.0, 1.0, 1.0]).values == (0.5, 0.5, 0.5, 0.5)

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            normalize([0.0, 0.0])

    def test_nan_rejected(self):
        with pytest.raises(ZeroVector):
            normalize([1.0, float("nan")])

    def test_empty_rejected(self):
        with pytest.raises(ZeroVector):
            normalize([])

    @given(raw_vectors)
    def test_idempotent(self, raw):
        once = normalize(raw)
        twice = normalize(once.values)
        assert all(
            abs(a - b) <= 1e-12 for a, b in zip(once.values, twice.values)
        )

    @given(raw_vectors)
    def test_direction_preserved(self, raw):
        e = normalize(raw)
        norm = math.sqrt(math.fsum(x * x for x in raw))
        for v, r in zip(e.values, raw):
            assert v * norm == pytest.approx(r, abs=1e-6)


class TestInnerProduct:
    def test_self_similarity(self):
        e = normalize([0.3, -0.2, 0.9])
        assert inner_product(e, e) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal(self):
        assert inner_product(normalize([1, 0]), normalize([0, 1])) == 0.0

    def test_hand_expansion(self):
        # 0.6*0.8 + 0.8*0.6 = 0.96 exactly
        a = normalize([0.6, 0.8])
        b = normalize([0.8, 0.6])
        assert inner_product(a, b) == pytest.approx(0.96, abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            inner_product(normalize([1, 0]), normalize([1, 0, 0]))

    @given(raw_vectors)
    def test_unit_self_product(self, raw):
        e = normalize(raw)
        assert inner_product(e, e) == pytest.approx(1.0, abs=1e-9)

    @given(st.data())
    def test_symmetric_and_bounded(self, data):
        n = data.draw(st.integers(min_value=1, max_value=8))
        vec = st.lists(finite_floats, min_size=n, max_size=n).filter(
            lambda v: math.sqrt(math.fsum(x * x for x in v)) > 1e-6
        )
        a = normalize(data.draw(vec))
        b = normalize(data.draw(vec))
        assert inner_product(a, b) == inner_product(b, a)
        assert abs(inner_product(a, b)) <= 1 + 1e-12


class TestDomainTypes:
    def test_query_requires_id_and_text(self):
        with pytest.raises(ValueError):
            Query(id="", text="x")
        with pytest.raises(ValueError):
            Query(id="q", text="")

    def test_embedding_must_be_unit(self):
        with pytest.raises(ZeroVector):
            Embedding(values=(0.5, 0.5), dim=2)

    def test_response_digest_iff_ttt(self):
        with pytest.raises(ValueError):
            Response(text="t", produced_by=ProducedBy.DIRECT, adapter_digest="d")
        with pytest.raises(ValueError):
            Response(text="t", produced_by=ProducedBy.TTT)
        r = Response(text="t", produced_by=ProducedBy.TTT, adapter_digest="d")
        assert r.adapter_digest == "d"

    def test_reward_score_finite(self):
        with pytest.raises(ValueError):
            RewardScore(value=float("inf"))
        assert RewardScore(2.0) < RewardScore(5.0)

    def test_query_json_round_trip(self):
        q = Query(id="q1", text="hello", domain_hint="math")
        assert Query.from_json_dict(q.to_json_dict()) == q

    def test_response_json_round_trip(self):
        r = Response(text="t", produced_by=ProducedBy.RAG)
        assert Response.from_json_dict(r.to_json_dict()) == r
