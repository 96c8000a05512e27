"""Entropy rate, KL divergence rate and synchronous composition.

All quantities are in bits.  The ``block_*`` functions enumerate every
sequence of a given length and are meant as exact oracles for the rate
formulas; they refuse to enumerate more than ``2**20`` sequences.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .channel import M2Params
from .pfsa import (
    DETERMINISTIC,
    NotStronglyConnectedError,
    Pfsa,
    PfsaError,
    is_strongly_connected,
    state_to_symbol,
    stationary_distribution,
)

MAX_ENUMERATION = 2**20


class MissingTransitionError(PfsaError):
    """The second machine cannot follow a symbol the first one emits."""


class InexactEntropyWarning(RuntimeWarning):
    """Emission-row entropy formula applied to a machine whose state is not
    recoverable from the past symbols."""


def _plogp(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log2(p[pos])
    return out


def entropy(dist) -> float:
    return float(-_plogp(dist).sum())


def binary_entropy(a):
    a = np.asarray(a, dtype=float)
    return -_plogp(a) - _plogp(1.0 - a)


def kl(p, q) -> float:
    """Categorical KL divergence in bits, with ``0 log 0/q = 0``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = p > 0
    if np.any(q[pos] <= 0):
        return math.inf
    return float(np.sum(p[pos] * np.log2(p[pos] / q[pos])))


def binary_kl(a, b):
    """Elementwise KL between Bernoulli(a) and Bernoulli(b); inputs in (0, 1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a * np.log2(a / b) + (1.0 - a) * np.log2((1.0 - a) / (1.0 - b))


def is_structurally_deterministic(machine: Pfsa) -> bool:
    return bool(np.all((machine.gamma > 0).sum(axis=2) <= 1))


def _is_synchronizing_step(machine: Pfsa) -> bool:
    # Every symbol sends all states into a single column: the state after a
    # symbol is a function of that symbol.
    return all(np.count_nonzero(machine.gamma[x].any(axis=0)) <= 1 for x in range(machine.num_symbols))


# --------------------------------------------------------------------------
# Entropy


def entropy_rate(machine: Pfsa) -> float:
    """Stationary-weighted entropy of the emission rows."""
    if not is_strongly_connected(machine):
        raise NotStronglyConnectedError("entropy rate requires a strongly connected machine")
    if not is_structurally_deterministic(machine) and not _is_synchronizing_step(machine):
        warnings.warn(
            "entropy_rate on a generalized machine with stochastic successors is only an "
            "upper bound; cross-check with block_entropy",
            InexactEntropyWarning,
            stacklevel=2,
        )
    p = stationary_distribution(machine)
    rows = state_to_symbol(machine)
    return float(-np.sum(p[:, None] * _plogp(rows)))


def entropy_rate_m2(params: M2Params) -> float:
    mu, nu = params.mu, params.nu
    w = (1.0 - mu) + nu
    return float((nu * binary_entropy(mu) + (1.0 - mu) * binary_entropy(nu)) / w)


def _check_guard(K: int, n: int) -> None:
    if n < 0:
        raise PfsaError("block length must be non-negative")
    if K**n > MAX_ENUMERATION:
        raise PfsaError(f"enumerating {K}^{n} sequences exceeds the 2^20 guard")


def _forward_levels(machine: Pfsa, n: int):
    """Yield the unnormalized forward vectors of every prefix, level by level.

    Level ``i`` is a ``(K**i, m)`` array in lexicographic prefix order; its
    row sums are the sequence probabilities.  This is the chained
    likelihood update without the per-step renormalization.
    """
    alpha = stationary_distribution(machine)[None, :]
    gamma = machine.gamma
    K, m = machine.num_symbols, machine.num_states
    for _ in range(n):
        alpha = np.einsum("pi,xij->pxj", alpha, gamma).reshape(-1, m)
        yield alpha


def block_entropies(machine: Pfsa, n: int) -> np.ndarray:
    """``[H_1, ..., H_n]`` by exhaustive enumeration."""
    _check_guard(machine.num_symbols, n)
    out = []
    for alpha in _forward_levels(machine, n):
        probs = alpha.sum(axis=1)
        out.append(float(-np.sum(_plogp(probs))))
    return np.array(out)


def block_entropy(machine: Pfsa, n: int) -> float:
    """Entropy of the length-``n`` block distribution (exact enumeration)."""
    if n == 0:
        return 0.0
    return float(block_entropies(machine, n)[-1])


def block_kls(g1: Pfsa, g2: Pfsa, n: int) -> np.ndarray:
    """``[D_1, ..., D_n]`` between block distributions of ``g1`` and ``g2``."""
    if g1.alphabet != g2.alphabet:
        raise PfsaError("machines must share an alphabet")
    _check_guard(g1.num_symbols, n)
    out = []
    for a1, a2 in zip(_forward_levels(g1, n), _forward_levels(g2, n)):
        p = a1.sum(axis=1)
        q = a2.sum(axis=1)
        out.append(kl(p, q))
    return np.array(out)


def kl_block(g1: Pfsa, g2: Pfsa, n: int) -> float:
    if n == 0:
        return 0.0
    return float(block_kls(g1, g2, n)[-1])


# --------------------------------------------------------------------------
# Synchronous composition


@dataclass(frozen=True)
class SyncComposition:
    composed: Pfsa
    state_pairs: tuple
    source_sizes: tuple

    def marginal_over_first(self) -> np.ndarray:
        """Stationary mass of the composition summed over the second factor."""
        p = stationary_distribution(self.composed)
        out = np.zeros(self.source_sizes[0])
        for w, (s, _) in zip(p, self.state_pairs):
            out[s] += w
        return out


def _successors(machine: Pfsa) -> np.ndarray:
    """``succ[x, s]`` = target state, or -1 where the transition is absent."""
    g = machine.gamma
    has = g.sum(axis=2) > 0
    return np.where(has, g.argmax(axis=2), -1)


def _product_graph(g1: Pfsa, g2: Pfsa):
    if g1.alphabet != g2.alphabet:
        raise PfsaError("synchronous composition needs a shared alphabet")
    for g in (g1, g2):
        if not is_structurally_deterministic(g):
            raise PfsaError("synchronous composition is defined for deterministic machines only")
        if not is_strongly_connected(g):
            raise NotStronglyConnectedError("synchronous composition needs strongly connected machines")
    S, T = g1.num_states, g2.num_states
    K = g1.num_symbols
    succ1, succ2 = _successors(g1), _successors(g2)
    emit1 = state_to_symbol(g1)
    edges = np.full((S * T, K), -1, dtype=np.int64)
    for s in range(S):
        for t in range(T):
            for x in range(K):
                if emit1[s, x] <= 0:
                    continue
                if succ2[x, t] < 0:
                    raise MissingTransitionError(
                        f"second machine has no transition on symbol "
                        f"{g1.alphabet.symbols[x]!r} from state {t}"
                    )
                edges[s * T + t, x] = succ1[x, s] * T + succ2[x, t]
    return edges, emit1


def _absorbing_sets(edges: np.ndarray) -> list[np.ndarray]:
    N = edges.shape[0]
    adj = np.zeros((N, N), dtype=bool)
    for u in range(N):
        for v in edges[u]:
            if v >= 0:
                adj[u, v] = True
    _, labels = connected_components(adj, directed=True, connection="strong")
    leaving = np.zeros(labels.max() + 1, dtype=bool)
    for u in range(N):
        for v in edges[u]:
            if v >= 0 and labels[v] != labels[u]:
                leaving[labels[u]] = True
    comps = [np.flatnonzero(labels == c) for c in range(len(leaving)) if not leaving[c]]
    # Canonical order: by smallest member pair, i.e. smallest flat index.
    comps.sort(key=lambda c: int(c.min()))
    return comps


def _restrict(g1: Pfsa, g2: Pfsa, edges, emit1, members) -> SyncComposition:
    T = g2.num_states
    local = {int(u): i for i, u in enumerate(members)}
    n = len(members)
    K = g1.num_symbols
    gamma = np.zeros((K, n, n))
    for i, u in enumerate(members):
        s = int(u) // T
        for x in range(K):
            v = edges[u, x]
            if v >= 0:
                gamma[x, i, local[int(v)]] = emit1[s, x]
    pairs = tuple((int(u) // T, int(u) % T) for u in members)
    composed = Pfsa(g1.alphabet, gamma, DETERMINISTIC)
    return SyncComposition(composed, pairs, (g1.num_states, T))


def absorbing_compositions(g1: Pfsa, g2: Pfsa) -> list[SyncComposition]:
    """Every absorbing strongly connected component of the product automaton."""
    edges, emit1 = _product_graph(g1, g2)
    return [_restrict(g1, g2, edges, emit1, c) for c in _absorbing_sets(edges)]


def sync_composition(g1: Pfsa, g2: Pfsa) -> SyncComposition:
    """Product automaton driven by ``g1``'s emissions, restricted to the
    absorbing component that contains the smallest ``(s, t)`` pair."""
    comps = absorbing_compositions(g1, g2)
    if not comps:
        raise PfsaError("product automaton has no absorbing component")
    return comps[0]


def kl_rate_from(comp: SyncComposition, g1: Pfsa, g2: Pfsa) -> float:
    p = stationary_distribution(comp.composed)
    e1, e2 = state_to_symbol(g1), state_to_symbol(g2)
    total = 0.0
    for w, (s, t) in zip(p, comp.state_pairs):
        d = kl(e1[s], e2[t])
        if math.isinf(d):
            if w > 0:
                return math.inf
            continue
        total += w * d
    return float(total)


def kl_rate(g1: Pfsa, g2: Pfsa) -> float:
    """KL divergence rate of ``g2`` from ``g1`` in bits/symbol.

    Returns ``inf`` when ``g1`` can emit a symbol that ``g2`` cannot follow.
    """
    try:
        comp = sync_composition(g1, g2)
    except MissingTransitionError:
        return math.inf
    return kl_rate_from(comp, g1, g2)


def kl_rate_m2(p1: M2Params, p2: M2Params) -> float:
    w = (1.0 - p1.mu) + p1.nu
    return float((p1.nu * binary_kl(p1.mu, p2.mu) + (1.0 - p1.mu) * binary_kl(p1.nu, p2.nu)) / w)


def kl_matrix_m2(mu, nu) -> np.ndarray:
    """Pairwise closed-form KL rates; entry ``[i, j]`` is ``D(g_i || g_j)``."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    w = ((1.0 - mu) + nu)[:, None]
    d = nu[:, None] * binary_kl(mu[:, None], mu[None, :]) + (1.0 - mu)[:, None] * binary_kl(
        nu[:, None], nu[None, :]
    )
    return d / w
