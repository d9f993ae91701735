import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from rankshap.core import Coalition, Document, Query, apply_coalition, make_instance
from rankshap.evaluation import kendall_tau, weighted_kendall_tau
from rankshap.grem import Grem, RelevanceAssignment
from rankshap.rankers import BM25Ranker, LinearRanker, Ranking, rank_scores
from rankshap.shapley import SamplerConfig, TableGame, exact_rankshap, kernel_rankshap

import oracles

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def perm_pair(draw, max_n=8):
    n = draw(st.integers(2, max_n))
    ids = [f"d{i}" for i in range(n)]
    return draw(st.permutations(ids)), draw(st.permutations(ids))


@st.composite
def table_game(draw, max_m=7):
    m = draw(st.integers(1, max_m))
    return TableGame(draw(st.lists(finite, min_size=2 ** m, max_size=2 ** m)))


@st.composite
def instance(draw):
    vocab = list("abcdef")
    texts = draw(st.lists(st.lists(st.sampled_from(vocab), max_size=6), min_size=2, max_size=5))
    qtoks = draw(st.lists(st.sampled_from(vocab), min_size=1, max_size=3))
    q = Query("q", " ".join(qtoks), tuple(qtoks))
    return make_instance(q, [Document(f"d{j}", " ".join(t), tuple(t)) for j, t in enumerate(texts)])


def as_ranking(ids):
    return Ranking(tuple(ids), tuple(float(-j) for j in range(len(ids))))


@given(perm_pair())
def test_tau_matches_pair_counter(pair):
    a, b = pair
    t = kendall_tau(as_ranking(a), as_ranking(b))
    assert t == float(oracles.tau_pairs(a, b))
    assert t == kendall_tau(as_ranking(b), as_ranking(a))
    assert -1.0 <= t <= 1.0


@given(perm_pair())
def test_weighted_tau_matches_pair_counter(pair):
    a, b = pair
    assert weighted_kendall_tau(as_ranking(a), as_ranking(b)) == float(oracles.weighted_tau_pairs(a, b))


@given(perm_pair())
def test_tau_identity(pair):
    a, _ = pair
    assert kendall_tau(as_ranking(a), as_ranking(a)) == 1.0 == weighted_kendall_tau(as_ranking(a), as_ranking(a))


@settings(max_examples=60, deadline=None)
@given(table_game())
def test_exact_efficiency_and_oracle(g):
    phi = exact_rankshap(g).phi
    assert abs(phi.sum() - (g.table[-1] - g.table[0])) <= 1e-9
    want = oracles.shapley_by_subsets(g.m, lambda S: float(g.table[sum(1 << i for i in S)]))
    assert np.allclose(phi, want, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(table_game(max_m=8))
def test_kernel_full_enumeration_is_exact(g):
    if g.m < 2:
        return
    got = kernel_rankshap(g, SamplerConfig(n_samples=2 ** g.m)).phi
    assert np.max(np.abs(got - exact_rankshap(g).phi)) <= 1e-7 * max(1.0, np.max(np.abs(g.table)))


@settings(max_examples=40, deadline=None)
@given(table_game(max_m=5), st.data())
def test_shapley_is_linear(g, data):
    other = TableGame(data.draw(st.lists(finite, min_size=len(g.table), max_size=len(g.table))))
    total = TableGame(g.table + other.table)
    assert np.allclose(exact_rankshap(total).phi, exact_rankshap(g).phi + exact_rankshap(other).phi, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(instance())
def test_masking_identity_and_removal(inst):
    q, docs = apply_coalition(inst, Coalition.full(inst.m))
    assert q == list(inst.query.tokens) and docs == [list(d.tokens) for d in inst.docs]
    q, docs = apply_coalition(inst, Coalition.empty(inst.m))
    assert q == [] and all(d == [] for d in docs)


@settings(max_examples=50, deadline=None)
@given(instance(), st.data())
def test_bm25_batch_equals_scalar(inst, data):
    z = np.array(data.draw(st.lists(st.booleans(), min_size=inst.m, max_size=inst.m)), dtype=bool)
    q, docs = apply_coalition(inst, z)
    assert np.allclose(BM25Ranker().score_batch(inst, z[None, :])[0], BM25Ranker().score(q, docs), atol=1e-12)


@given(st.lists(finite, min_size=1, max_size=10))
def test_rank_scores_is_permutation(scores):
    ids = [f"d{i}" for i in range(len(scores))]
    r = rank_scores(ids, scores)
    assert sorted(r.doc_ids) == ids
    assert list(r.scores) == sorted(scores, reverse=True)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=10), st.randoms())
def test_ndcg_bounded(rels, rnd):
    ids = [f"d{i}" for i in range(len(rels))]
    ra = RelevanceAssignment({d: float(r) for d, r in zip(ids, rels)})
    order = list(ids)
    rnd.shuffle(order)
    v = Grem("linear", "log", True)(as_ranking(order), ra)
    assert 0.0 <= v <= 1.0 + 1e-12
    assert abs(v - oracles.ndcg([ra.rels[d] for d in order])) < 1e-12


@settings(max_examples=50, deadline=None)
@given(instance(), st.data())
def test_linear_scores_do_not_depend_on_batch(inst, data):
    weights = {t: data.draw(finite) for t in inst.feature_space.features}
    ranker = LinearRanker(weights)
    Z = np.array(data.draw(st.lists(st.lists(st.booleans(), min_size=inst.m, max_size=inst.m),
                                    min_size=2, max_size=40)), dtype=bool)
    batch = ranker.score_batch(inst, Z)
    assert all(np.array_equal(batch[k], ranker.score_batch(inst, Z[k:k + 1])[0]) for k in range(len(Z)))
