import numpy as np
import pytest
from hypothesis import given, strategies as st

from cifwatch.corpus import noise_tweet
from cifwatch.embed import (
    MAGIC,
    EmbeddingVector,
    HashingEmbedder,
    VectorIndex,
    cosine,
    embed_text_deterministic,
    index_corpus,
    load_index,
    query_topk,
    save_index,
)
from cifwatch.errors import BackendError, DataError, SchemaError
from cifwatch.taxonomy import SIX_HOUR_INTERVALS, TimeInterval

from oracles import brute_topk


def test_case_and_whitespace_folding():
    assert np.array_equal(embed_text_deterministic("a b", 64).values,
                          embed_text_deterministic("a  B", 64).values)


def test_empty_text_is_zero():
    v = embed_text_deterministic("", 64)
    assert v.norm == 0.0 and not v.values.any()


def test_similarity_ordering():
    e = lambda t: embed_text_deterministic(t, 256, 0)
    base = e("flooded hospital ward")
    assert cosine(base, e("hospital ward flooded area")) > cosine(base, e("sunny picnic lyrics"))


def test_seed_changes_embedding():
    assert not np.array_equal(embed_text_deterministic("x y", 64, 0).values,
                              embed_text_deterministic("x y", 64, 1).values)


@given(st.text(min_size=1, max_size=80))
def test_unit_norm_and_self_similarity(text):
    v = embed_text_deterministic(text, 64)
    if v.norm:
        assert abs(v.norm - 1.0) <= 1e-12
        assert abs(cosine(v, v) - 1.0) <= 1e-9
        w = embed_text_deterministic(text + " extra", 64)
        if w.norm:
            assert abs(cosine(v, w) - cosine(w, v)) <= 1e-12


def random_index(n=1000, dim=32, seed=0):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(n, dim)).astype(np.float32)
    vecs[::97] = 0.0
    vecs[5] = vecs[6]  # an exact tie
    ids = [f"t{i:05d}" for i in rng.permutation(n)]
    codes = rng.integers(0, 4, size=n)
    return VectorIndex(dim, ids, codes, vecs), rng


def test_search_matches_brute_force():
    index, rng = random_index()
    for _ in range(30):
        q = rng.normal(size=index.dim)
        qv = EmbeddingVector.of(q)
        for k in (5, 10, 50):
            for iv in (TimeInterval.FULL_DAY, TimeInterval.H12_18):
                mask = None if iv is TimeInterval.FULL_DAY else index.intervals == iv.code
                got = [(h.tweet_id, h.score) for h in index.search(qv, k, iv)]
                want = brute_topk(index.vectors, index.ids, q, k, mask)
                assert [g[0] for g in got] == [w[0] for w in want]
                assert np.allclose([g[1] for g in got], [w[1] for w in want], atol=1e-12)


def test_ties_break_by_id():
    index, _ = random_index()
    hits = index.search(EmbeddingVector.of(index.vectors[5].astype(np.float64)), 2)
    assert [h.tweet_id for h in hits] == sorted([index.ids[5], index.ids[6]])


def test_zero_vectors_rank_last():
    index, rng = random_index()
    hits = index.search(EmbeddingVector.of(rng.normal(size=index.dim)), len(index))
    zeros = {index.ids[i] for i in range(0, len(index), 97)}
    assert {h.tweet_id for h in hits[-len(zeros):]} == zeros
    assert all(h.score == -1.0 for h in hits[-len(zeros):])


def test_prefix_property():
    index, rng = random_index()
    q = EmbeddingVector.of(rng.normal(size=index.dim))
    full = [h.tweet_id for h in index.search(q, 50)]
    for k in range(5, 55, 5):
        assert [h.tweet_id for h in index.search(q, k)] == full[:k]


def corpus_tweets(n=40):
    return [noise_tweet(f"n{i:03d}", f"tweet {i} about storm {i % 7}", SIX_HOUR_INTERVALS[i % 4])
            for i in range(n)]


def test_self_query_ranks_first():
    provider = HashingEmbedder(64)
    tweets = corpus_tweets()
    index = index_corpus(tweets, provider)
    hit = query_topk(index, tweets[11].text, provider, 1)[0]
    assert hit.tweet_id == "n011" and abs(hit.score - 1.0) <= 1e-9


def test_k_larger_than_candidates():
    provider = HashingEmbedder(64)
    index = index_corpus(corpus_tweets(8), provider)
    assert len(query_topk(index, "storm", provider, 50, TimeInterval.H0_6)) == 2


def test_round_trip_and_magic(tmp_path):
    provider = HashingEmbedder(64)
    index = index_corpus(corpus_tweets(), provider)
    save_index(index, tmp_path / "i.bin")
    raw = (tmp_path / "i.bin").read_bytes()
    assert raw[:8] == MAGIC == b"CIFVIDX1"
    back = load_index(tmp_path / "i.bin")
    for q in ("storm 3", "tweet 12", "nothing"):
        assert query_topk(back, q, provider, 10) == query_topk(index, q, provider, 10)
    save_index(index_corpus(corpus_tweets(), provider), tmp_path / "j.bin")
    assert (tmp_path / "j.bin").read_bytes() == raw


def test_empty_index(tmp_path):
    index = index_corpus([], HashingEmbedder(16))
    save_index(index, tmp_path / "e.bin")
    assert len(load_index(tmp_path / "e.bin")) == 0


def test_bad_files(tmp_path):
    with pytest.raises(SchemaError):
        VectorIndex.from_bytes(b"NOTANIDX" + b"\0" * 12)
    raw = index_corpus(corpus_tweets(3), HashingEmbedder(16)).to_bytes()
    with pytest.raises(SchemaError):
        VectorIndex.from_bytes(raw[:-3])


def test_dim_mismatch():
    index = index_corpus(corpus_tweets(3), HashingEmbedder(16))
    with pytest.raises(DataError):
        query_topk(index, "x", HashingEmbedder(32), 3)


def test_provider_failure_names_tweet(tmp_path):
    class Flaky(HashingEmbedder):
        def embed(self, text):
            if "13" in text:
                raise BackendError("down")
            return super().embed(text)

    with pytest.raises(BackendError, match="n013"):
        index_corpus(corpus_tweets(), Flaky(16))
