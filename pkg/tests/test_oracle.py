import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import table_embeddings
from rnnt_stream.beam_search import decode_reference
from rnnt_stream.core import BeamConfig, logsumexp_many
from rnnt_stream.model import Vocabulary
from rnnt_stream.oracle import (
    OracleLimit,
    OracleLimitExceeded,
    count_alignments,
    dumps_posteriors,
    enumerate_alignments,
    exhaustive_sequence_posteriors,
    forward_log_prob,
    lattice_posteriors,
    loads_posteriors,
    oracle_best,
)
from rnnt_stream.toy import TableModel, ToyModelSpec, build_toy_model, fixture_path, random_table_model


def test_all_blank_single_frame():
    m = TableModel(Vocabulary.from_pieces(["<blank>", "a"]), 1, {(0, ()): [1.0, 0.0]})
    embs = table_embeddings(m)
    assert exhaustive_sequence_posteriors(embs, m) == {(): 0.0}
    assert oracle_best(embs, m).labels == ()


def test_two_path_instance():
    m = TableModel(Vocabulary.from_pieces(["<blank>", "a"]), 1,
                   {(0, ()): [0.6, 0.4], (0, (1,)): [1.0, 0.0]})
    post, residual = enumerate_alignments(table_embeddings(m), m)
    assert post.keys() == {(), (1,)}
    assert post[()] == pytest.approx(math.log(0.6), abs=1e-15)
    assert post[(1,)] == pytest.approx(math.log(0.4), abs=1e-15)
    assert residual == 0.0


def test_golden_posteriors_match_committed_fixture(golden, golden_embs):
    with open(fixture_path("golden-2x3.posteriors.json"), encoding="utf-8") as f:
        committed = loads_posteriors(f.read())
    limit = OracleLimit(max_total_symbols=3)
    post, residual = enumerate_alignments(golden_embs, golden, limit)
    dp = lattice_posteriors(golden_embs, golden, limit)
    assert residual == 0.0
    assert committed.keys() == post.keys() == dp.keys()
    for k, v in committed.items():
        assert abs(post[k] - v) <= 1e-12
        assert abs(dp[k] - v) <= 1e-9
    assert abs(logsumexp_many(list(committed.values()))) <= 1e-12


def test_golden_oracle_best(golden, golden_embs):
    best = oracle_best(golden_embs, golden, OracleLimit(max_total_symbols=3))
    assert best.labels == (1,)
    # emit a at frame 0, or blank at frame 0 then a at frame 1; both end in blank from (a)
    want = math.log(0.986 * 0.95 * 0.995 + 0.004 * 0.09 * 0.995)
    assert best.score == pytest.approx(want, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(2, 4), st.integers(0, 3))
def test_path_sum_conservation(seed, T, V, cap):
    m = random_table_model(T, V, cap + 1, seed, concentration=0.7)
    post, residual = enumerate_alignments(table_embeddings(m), m, OracleLimit(max_total_symbols=cap))
    total = sum(math.exp(v) for v in post.values()) + residual
    assert abs(total - 1.0) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(2, 4), st.integers(0, 3))
def test_two_oracles_agree_on_tables(seed, T, V, cap):
    m = random_table_model(T, V, cap, seed)
    embs = table_embeddings(m)
    limit = OracleLimit(max_total_symbols=cap)
    a = exhaustive_sequence_posteriors(embs, m, limit)
    b = lattice_posteriors(embs, m, limit)
    assert a.keys() == b.keys()
    assert all(abs(a[k] - b[k]) <= 1e-9 for k in a)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_two_oracles_agree_on_linear_models(seed, T):
    m = build_toy_model(ToyModelSpec(feature_dim=2, encoder_dim=3, predictor_dim=3, vocab_size=3, seed=seed))
    feats = np.random.default_rng(seed).standard_normal((T, 2))
    embs = m.encode_chunk(feats, 0, (0, T))
    a = exhaustive_sequence_posteriors(embs, m)
    for k, v in a.items():
        assert abs(forward_log_prob(embs, m, k) - v) <= 1e-9


def _brute_alignments(T, L, cap):
    # sequences of steps: label ids 1..L or blank 0, exactly T blanks, ending in blank
    n = 0
    for u in range(cap + 1):
        for _ in itertools.combinations(range(T - 1 + u), u):
            n += L ** u
    return n


@pytest.mark.parametrize("T,L,cap", [(1, 1, 0), (2, 2, 2), (3, 2, 3), (4, 3, 2)])
def test_count_alignments(T, L, cap):
    assert count_alignments(T, L, cap) == _brute_alignments(T, L, cap)


def test_count_alignments_matches_enumeration():
    # a table with every path live: each distinct alignment lands in exactly one sequence
    m = random_table_model(3, 3, 3, seed=5)
    post, _ = enumerate_alignments(table_embeddings(m), m, OracleLimit(max_total_symbols=2))
    assert len(post) == sum(2 ** u for u in range(3))


def test_limits_refuse_to_run():
    m = random_table_model(9, 3, 2, seed=0)
    with pytest.raises(OracleLimitExceeded):
        exhaustive_sequence_posteriors(table_embeddings(m), m)
    m = random_table_model(2, 6, 2, seed=0)
    with pytest.raises(OracleLimitExceeded):
        lattice_posteriors(table_embeddings(m), m)
    m = random_table_model(8, 4, 2, seed=0)
    with pytest.raises(OracleLimitExceeded):
        exhaustive_sequence_posteriors(table_embeddings(m), m, OracleLimit(max_total_symbols=8))


def test_reference_matches_oracle_at_saturating_width():
    # T=3, V=3, 2 labels per frame: W=40 holds every sequence the frame can reach
    for seed in range(20):
        m = random_table_model(3, 3, 2, seed)
        embs = table_embeddings(m)
        r = decode_reference(embs, m, BeamConfig(40, max_symbols_per_frame=2))
        assert r.labels == oracle_best(embs, m, OracleLimit(max_total_symbols=2)).labels


def test_posterior_file_format():
    post = {(): -1.5, (2, 1): -0.25, (1,): -3.0}
    text = dumps_posteriors(post)
    assert list(json.loads(text)) == ["", "1", "2,1"]
    assert loads_posteriors(text) == post
