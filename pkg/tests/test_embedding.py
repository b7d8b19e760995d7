import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmsf.embedding import (
    EmbeddingVector,
    SimilarityScoredProposal,
    cosine_similarity,
    rank_by_similarity,
    threshold_filter,
)
from cmsf.errors import DegenerateInputError, ShapeMismatchError

from oracles import cosine_reference


def vec(*values):
    return EmbeddingVector(tuple(float(v) for v in values))


@st.composite
def embeddings(draw, dim):
    values = [draw(st.integers(-100, 100)) / 10 for _ in range(dim)]
    if all(v == 0 for v in values):
        values[draw(st.integers(0, dim - 1))] = 1.0
    return EmbeddingVector(tuple(values))


class TestEmbeddingVector:
    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(ValueError):
            EmbeddingVector(())
        with pytest.raises(ValueError):
            EmbeddingVector((1.0, math.inf))

    def test_json_roundtrip(self):
        v = vec(0.1, -2.5, 3.75)
        assert EmbeddingVector.from_json_dict(v.to_json_dict()) == v

    def test_json_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingVector.from_json_dict({"dim": 2, "values": [1.0, 2.0, 3.0]})


class TestCosineSimilarity:
    def test_identical_vector(self):
        v = vec(0.3, -1.2, 9)
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity(vec(1, 0), vec(0, 1)) == 0.0

    def test_45_degrees(self):
        got = cosine_similarity(vec(1, 0), vec(1, 1))
        assert got == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateInputError):
            cosine_similarity(vec(0, 0), vec(1, 0))

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            cosine_similarity(vec(1, 0), vec(1, 0, 0))

    @given(st.integers(1, 8).flatmap(lambda d: st.tuples(embeddings(d), embeddings(d))))
    def test_exactly_symmetric_and_clamped(self, pair):
        a, b = pair
        ab = cosine_similarity(a, b)
        assert ab == cosine_similarity(b, a)  # bitwise, not approximate
        assert -1.0 <= ab <= 1.0

    @given(st.integers(1, 8).flatmap(lambda d: st.tuples(embeddings(d), embeddings(d))))
    def test_matches_reference(self, pair):
        a, b = pair
        expected = cosine_reference(list(a.values), list(b.values))
        assert cosine_similarity(a, b) == pytest.approx(expected, abs=1e-9)

    @given(
        st.integers(1, 8).flatmap(lambda d: st.tuples(embeddings(d), embeddings(d))),
        st.integers(1, 1000),
    )
    def test_scale_invariance(self, pair, numerator):
        a, b = pair
        scale = numerator / 100  # positive scalar
        scaled = EmbeddingVector(tuple(v * scale for v in b.values))
        assert cosine_similarity(a, scaled) == pytest.approx(
            cosine_similarity(a, b), abs=1e-6
        )


class TestRankBySimilarity:
    def test_empty_candidates(self):
        assert rank_by_similarity(vec(1, 0), []) == []

    def test_antipodal_order(self):
        query = vec(2, 1)
        anti = vec(-2, -1)
        ranked = rank_by_similarity(query, [query, anti])
        assert [r.proposal_index for r in ranked] == [0, 1]
        assert ranked[0].similarity == pytest.approx(1.0, abs=1e-12)
        assert ranked[1].similarity == pytest.approx(-1.0, abs=1e-12)

    def test_matches_per_pair_recomputation(self):
        query = vec(0.3, -0.7, 0.2, 0.9, -0.1)
        candidates = [
            vec(0.1, 0.2, -0.9, 0.4, 0.5),
            vec(-0.3, 0.7, -0.2, -0.9, 0.1),
            vec(0.31, -0.69, 0.2, 0.9, -0.1),
            vec(1, 0, 0, 0, 0),
            vec(0, 0, 0, 0, 1),
        ]
        expected = sorted(
            range(len(candidates)),
            key=lambda i: -cosine_reference(list(query.values), list(candidates[i].values)),
        )
        ranked = rank_by_similarity(query, candidates)
        assert [r.proposal_index for r in ranked] == expected

    def test_error_names_offending_index(self):
        with pytest.raises(DegenerateInputError, match="candidate 1"):
            rank_by_similarity(vec(1, 0), [vec(1, 1), vec(0, 0)])

    @given(
        st.integers(2, 6).flatmap(
            lambda d: st.tuples(
                embeddings(d), st.lists(embeddings(d), min_size=1, max_size=6)
            )
        ),
        st.integers(1, 400),
    )
    def test_positive_scaling_never_reorders(self, query_and_candidates, numerator):
        query, candidates = query_and_candidates
        scale = numerator / 100
        baseline = rank_by_similarity(query, candidates)
        scaled = list(candidates)
        scaled[0] = EmbeddingVector(tuple(v * scale for v in scaled[0].values))
        rescored = rank_by_similarity(query, scaled)
        base_sim = {r.proposal_index: r.similarity for r in baseline}
        for a, b in zip(rescored, rescored[1:]):
            # Order may only differ where similarities are tied (within 1e-6).
            assert base_sim[a.proposal_index] >= base_sim[b.proposal_index] - 1e-6
        for r in rescored:
            assert r.similarity == pytest.approx(base_sim[r.proposal_index], abs=1e-6)


class TestThresholdFilter:
    def scored(self, *sims):
        return [SimilarityScoredProposal(i, s) for i, s in enumerate(sims)]

    def test_tau_minus_one_keeps_everything_above(self):
        scored = self.scored(0.5, -0.5, 0.0)
        assert threshold_filter(scored, -1.0) == scored

    def test_tau_one_keeps_nothing(self):
        assert threshold_filter(self.scored(1.0, 0.9), 1.0) == []

    def test_strictly_above(self):
        scored = self.scored(0.9, 0.7, 0.1)
        kept = threshold_filter(scored, 0.7)
        assert [k.proposal_index for k in kept] == [0]

    def test_order_preserved(self):
        scored = self.scored(0.2, 0.9, 0.5)
        assert [k.proposal_index for k in threshold_filter(scored, 0.1)] == [0, 1, 2]

    @given(
        st.lists(st.integers(-100, 100), max_size=12),
        st.integers(-100, 100),
        st.integers(-100, 100),
    )
    def test_monotone_in_tau(self, sims, tau_a, tau_b):
        scored = [
            SimilarityScoredProposal(i, s / 100) for i, s in enumerate(sims)
        ]
        lo, hi = sorted((tau_a / 100, tau_b / 100))
        kept_hi = {k.proposal_index for k in threshold_filter(scored, hi)}
        kept_lo = {k.proposal_index for k in threshold_filter(scored, lo)}
        assert kept_hi <= kept_lo
