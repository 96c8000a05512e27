import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from pfsa_delchan.channel import (
    ChannelConfig,
    M2Params,
    deletion_limit,
    deletion_transform,
    m2_deletion_transform,
    m2_params_of,
    q_matrix,
    transmit,
    transmit_batch,
    transmit_until,
    transmit_until_batch,
)
from pfsa_delchan.metrics import is_structurally_deterministic
from pfsa_delchan.pfsa import (
    GENERALIZED,
    PfsaError,
    bernoulli,
    from_gamma,
    generate,
    likelihood_step,
    m2,
    state_to_state,
    state_to_symbol,
    stationary_distribution,
)

from conftest import random_deterministic

probs = st.floats(0.01, 0.99)
deltas = st.floats(0.0, 0.95)


def test_channel_config():
    ChannelConfig(0.0)
    for bad in (1.0, -0.1, 1.5):
        with pytest.raises(PfsaError):
            ChannelConfig(bad)


def test_transmit_identity_at_zero():
    x = np.arange(50) % 2
    assert np.array_equal(transmit(x, ChannelConfig(0.0), seed=1), x)


def _is_subsequence(small, big) -> bool:
    it = iter(big.tolist())
    return all(any(v == w for w in it) for v in small.tolist())


@given(st.lists(st.integers(0, 1), max_size=60), deltas, st.integers(0, 2**32 - 1))
def test_transmit_is_ordered_subsequence(xs, delta, seed):
    x = np.array(xs, dtype=np.int64)
    # Use distinct tags so the subsequence check is about positions.
    tagged = np.arange(len(x))
    out = transmit(tagged, delta, seed)
    assert np.all(np.diff(out) > 0)
    assert _is_subsequence(transmit(x, delta, seed), x)


def test_transmit_length_law():
    x = np.zeros(10, dtype=np.int64)
    rng = np.random.default_rng(77)
    lengths = np.array([len(transmit(x, 0.5, rng)) for _ in range(10**5)])
    assert abs(lengths.mean() - 5.0) <= 0.05
    observed = np.bincount(lengths, minlength=11)
    expected = stats.binom.pmf(np.arange(11), 10, 0.5) * len(lengths)
    # Merge thin tails so every expected count is at least 5.
    obs = np.concatenate([[observed[:2].sum()], observed[2:9], [observed[9:].sum()]])
    exp = np.concatenate([[expected[:2].sum()], expected[2:9], [expected[9:].sum()]])
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_transmit_batch_matches_law():
    x = np.zeros((2000, 100), dtype=np.int8)
    outs = transmit_batch(x, 0.3, seed=4)
    assert abs(np.mean([len(o) for o in outs]) - 70) < 0.5


def test_transmit_until():
    g = m2(0.3, 0.6)
    out = transmit_until(g, 137, 0.4, seed=3)
    assert len(out) == 137
    assert np.array_equal(out, transmit_until(g, 137, 0.4, seed=3))
    assert len(transmit_until(g, 0, 0.4, seed=3)) == 0
    # Small chunks must still continue the same chain.
    small = transmit_until(g, 300, 0.2, seed=8, chunk=7)
    assert len(small) == 300


def test_transmit_until_batch_law():
    g = m2(0.3, 0.6)
    x = transmit_until_batch(g, 200, 3000, 0.25, seed=5)
    assert x.shape == (3000, 200)
    target = m2_deletion_transform(M2Params(0.3, 0.6), 0.25)
    prev, cur = x[:, :-1], x[:, 1:]
    assert abs(np.mean(cur[prev == 0] == 0) - target.mu) < 0.005
    assert abs(np.mean(cur[prev == 1] == 0) - target.nu) < 0.005
    # High deletion forces the extension loop.
    y = transmit_until_batch(g, 20, 500, 0.9, seed=6)
    assert y.shape == (500, 20)


def test_q_matrix_examples():
    assert np.allclose(q_matrix(np.array([[0.3, 0.7], [0.6, 0.4]]), 0.0), np.eye(2))
    Q = q_matrix(np.array([[0.3, 0.7], [0.6, 0.4]]), 0.25)
    # Independent oracle: the series (1 - d) sum_k d^k P^k.
    P = np.array([[0.3, 0.7], [0.6, 0.4]])
    series = sum(0.75 * 0.25**k * np.linalg.matrix_power(P, k) for k in range(200))
    assert np.allclose(Q, series, atol=1e-14)
    assert np.allclose(Q, [[0.83721, 0.16279], [0.13953, 0.86047]], atol=5e-6)


def test_q_matrix_rows_and_stationary():
    rng = np.random.default_rng(3)
    for m in (2, 4, 7):
        g = random_deterministic(rng, m)
        P = state_to_state(g)
        Q = q_matrix(P, 0.9)
        p = stationary_distribution(g)
        assert np.allclose(Q.sum(axis=1), 1, atol=1e-10)
        assert np.allclose(p @ Q, p, atol=1e-10)


def test_deletion_transform_examples(four_state):
    g = m2(0.3, 0.6)
    assert np.allclose(deletion_transform(g, 0.0).gamma, g.gamma)
    gd = deletion_transform(g, 0.25)
    assert gd.kind == GENERALIZED
    p = m2_params_of(gd)
    assert abs(p.mu - 0.34884) < 5e-6 and abs(p.nu - 0.55814) < 5e-6
    f = deletion_transform(four_state, 0.4)
    assert not is_structurally_deterministic(f)
    assert np.allclose(f.gamma.sum(axis=2).T, state_to_symbol(f))


@given(probs, probs, st.floats(0.0, 0.99))
def test_m2_closed_form_matches_matrix_path(mu, nu, delta):
    closed = m2_deletion_transform(M2Params(mu, nu), delta)
    gd = deletion_transform(m2(mu, nu), delta)
    # Closure: each symbol's matrix has a single nonzero column.
    assert np.all(gd.gamma[0][:, 1] == 0) and np.all(gd.gamma[1][:, 0] == 0)
    assert abs(gd.gamma[0, 0, 0] - closed.mu) < 1e-12
    assert abs(gd.gamma[0, 1, 0] - closed.nu) < 1e-12


def test_m2_closed_form_examples():
    p = m2_deletion_transform(M2Params(0.3, 0.6), 0.25)
    assert abs(p.mu - 0.348837) < 1e-6 and abs(p.nu - 0.558140) < 1e-6
    for d in (0.1, 0.5, 0.9):
        q = m2_deletion_transform(M2Params(0.4, 0.4), d)
        assert (q.mu, q.nu) == (0.4, 0.4)
    lim = m2_deletion_transform(M2Params(0.3, 0.6), 0.999)
    assert abs(lim.mu - 6 / 13) < 1e-2 and abs(lim.nu - 6 / 13) < 1e-2


@given(probs, probs)
def test_gap_shrinks_with_delta(mu, nu):
    gaps = [abs(p.mu - p.nu) for p in (m2_deletion_transform(M2Params(mu, nu), d) for d in np.linspace(0, 0.99, 34))]
    assert all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))


@given(probs, probs, st.floats(0.0, 0.95))
def test_eigenvalue_map(mu, nu, delta):
    lam = mu - nu
    gd = deletion_transform(m2(mu, nu), delta)
    ev = np.linalg.eigvals(state_to_state(gd))
    other = ev[np.argmax(np.abs(ev - 1.0))]
    assert abs(other - lam * (1 - delta) / (1 - delta * lam)) < 1e-10


def test_stationary_and_marginals_preserved():
    rng = np.random.default_rng(8)
    for i in range(10):
        g = random_deterministic(rng, 2 + i % 5, k=2 + i % 2)
        p = stationary_distribution(g)
        marg = p @ state_to_symbol(g)
        for d in (0.1, 0.25, 0.5, 0.75):
            gd = deletion_transform(g, d)
            pd = stationary_distribution(gd)
            assert np.allclose(pd, p, atol=1e-10)
            assert np.allclose(pd @ state_to_symbol(gd), marg, atol=1e-10)


def test_deletion_limit(four_state):
    assert np.allclose(deletion_limit(m2(0.3, 0.6)), [6 / 13, 7 / 13])
    assert np.allclose(deletion_limit(bernoulli(0.2)), [0.2, 0.8])
    # The transform approaches the limit as delta -> 1.
    gd = deletion_transform(four_state, 0.9999)
    assert np.allclose(state_to_symbol(gd), deletion_limit(four_state)[None, :], atol=1e-3)


def test_transform_requires_strong_connectivity():
    stuck = from_gamma(np.array([[[0.5, 0], [0.5, 0]], [[0.5, 0], [0.5, 0]]]))
    with pytest.raises(PfsaError):
        deletion_transform(stuck, 0.2)


def test_monte_carlo_conditionals_match_transform():
    g = m2(0.3, 0.6)
    gd = deletion_transform(g, 0.25)
    y = transmit(generate(g, int(1.34e6), seed=1), 0.25, seed=2)[: 10**6]
    assert len(y) == 10**6
    prev, cur = y[:-1], y[1:]
    for b in (0, 1):
        prob, _ = likelihood_step(gd, np.eye(2)[b], 0)
        assert abs(np.mean(cur[prev == b] == 0) - prob) <= 0.005
