import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pfsa_delchan.channel import M2Params, deletion_transform, transmit, transmit_until, transmit_until_batch
from pfsa_delchan.codec import (
    Codebook,
    bigram_stats,
    decode,
    decode_batch,
    encode,
    encode_batch,
    m2_scores,
)
from pfsa_delchan.metrics import entropy_rate_m2, kl_rate_m2
from pfsa_delchan.pfsa import PfsaError, negative_log_likelihood_rate

BOOK = Codebook((M2Params(0.2, 0.7), M2Params(0.8, 0.3), M2Params(0.6, 0.1)), design_delta=0.2)


def test_codebook_validation():
    with pytest.raises(PfsaError):
        Codebook(())
    with pytest.raises(PfsaError):
        Codebook((M2Params(0.2, 0.7), M2Params(0.2, 0.7)))
    with pytest.raises(PfsaError):
        Codebook((M2Params(0.2, 0.7),), design_delta=1.0)


def test_codebook_json_round_trip():
    text = BOOK.dumps()
    data = json.loads(text)
    assert set(data) == {"design_delta", "machines"}
    assert data["machines"][1] == {"mu": 0.8, "nu": 0.3}
    assert Codebook.loads(text) == BOOK
    with pytest.raises(PfsaError):
        Codebook.from_dict({"machines": [{"mu": 0.2}]})


def test_encode():
    single = Codebook((M2Params(0.3, 0.6),))
    x = encode(single, 0, 50, seed=1)
    assert len(x) == 50 and set(np.unique(x)) <= {0, 1}
    with pytest.raises(PfsaError):
        encode(single, 1, 10)
    with pytest.raises(PfsaError):
        encode(single, 0, 0)
    runs = encode(Codebook((M2Params(0.99, 0.01),)), 0, 2000, seed=2)
    # Near-deterministic emissions: almost every step repeats the symbol.
    assert np.mean(runs[1:] == runs[:-1]) > 0.97


def test_encode_marginal():
    x = encode_batch(BOOK, 1, 1000, 50, seed=3).ravel()
    p0 = BOOK.machines[1].stationary()[0]
    sigma = math.sqrt(p0 * (1 - p0) / len(x))
    # Correlated samples inflate the variance; allow a generous multiple.
    assert abs(np.mean(x == 0) - p0) < 3 * sigma * 3


def test_bigram_stats():
    first, counts = bigram_stats(np.array([[0, 0, 1, 1, 0]]))
    assert first[0] == 0
    assert counts[0].tolist() == [[1, 1], [1, 1]]


@given(st.lists(st.integers(0, 1), min_size=1, max_size=80))
def test_fast_scores_match_general_likelihood(xs):
    x = np.array(xs)
    fast = m2_scores(BOOK.transformed(), x[None, :])[0]
    for m, p in enumerate(BOOK.machines):
        slow = negative_log_likelihood_rate(deletion_transform(p.machine(), BOOK.design_delta), x)
        assert abs(fast[m] - slow) <= 1e-12


def test_decode_single_and_ties():
    single = Codebook((M2Params(0.3, 0.6),))
    assert decode(single, [1, 0, 1]).message == 0
    # Reordering the codebook permutes the scores and keeps the winner.
    swapped = Codebook(tuple(reversed(BOOK.machines)), BOOK.design_delta)
    x = transmit(encode(BOOK, 0, 300, seed=5), 0.2, seed=6)
    a, b = decode(BOOK, x), decode(swapped, x)
    assert a.scores.min() == b.scores.min()
    assert a.message == len(BOOK) - 1 - b.message
    with pytest.raises(PfsaError):
        decode(BOOK, [])
    with pytest.raises(PfsaError):
        decode(BOOK, [0, 2])


def test_decode_lowest_index_on_tie():
    # Both machines put stationary mass 0.4 on state 0 (exact in binary), so
    # they score identically on any single symbol.
    book = Codebook((M2Params(0.25, 0.5), M2Params(0.625, 0.25)), design_delta=0.0)
    for sym in (0, 1):
        res = decode(book, [sym])
        assert res.scores[0] == res.scores[1]
        assert res.message == 0
    flipped = Codebook(tuple(reversed(book.machines)), 0.0)
    assert decode(flipped, [0]).message == 0


def test_decode_is_deterministic_and_mode_agnostic():
    g = BOOK.machines[2].machine()
    x = transmit_until(g, 120, 0.2, seed=9)
    assert decode(BOOK, x).message == decode(BOOK, x.copy()).message
    assert np.array_equal(decode(BOOK, x).scores, decode(BOOK, list(x)).scores)


def test_decode_batch_matches_decode():
    x = np.vstack([transmit_until(p.machine(), 100, 0.2, seed=i) for i, p in enumerate(BOOK.machines)])
    msgs, scores = decode_batch(BOOK, x)
    for row, m, s in zip(x, msgs, scores):
        r = decode(BOOK, row)
        assert r.message == m and np.array_equal(r.scores, s)


def test_scores_converge_to_rates():
    book = Codebook((M2Params(0.2, 0.7), M2Params(0.8, 0.3)), design_delta=0.2)
    models = book.transformed()
    x = transmit_until(book.machines[0].machine(), 10**5, 0.2, seed=12)
    s = m2_scores(models, x[None, :])[0]
    h = entropy_rate_m2(models[0])
    assert abs(s[0] - h) <= 0.02
    assert abs(s[1] - h - kl_rate_m2(models[0], models[1])) <= 0.02


def test_error_decreases_with_length():
    rng = np.random.default_rng(0)
    errs = []
    for n in (50, 100, 200):
        wrong = 0
        for m, p in enumerate(BOOK.machines):
            x = transmit_until_batch(p.machine(), n, 400, 0.2, rng)
            wrong += int(np.sum(decode_batch(BOOK, x)[0] != m))
        errs.append(wrong / 1200)
    assert errs[0] > errs[1] > errs[2] or errs[2] == 0
