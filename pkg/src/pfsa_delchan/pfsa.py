"""Probabilistic finite-state automata in Gamma-expression form.

A machine over ``K`` symbols and ``m`` states is stored as a stack of ``K``
non-negative ``m x m`` matrices ``gamma[x]``.  Entry ``gamma[x][i, j]`` is the
probability of emitting ``x`` from state ``i`` and moving to state ``j``.
Deterministic machines have at most one non-zero entry per row of every
``gamma[x]``; generalized machines may have several.

Sequences are numpy integer arrays of symbol indices.  State distributions
and symbolic derivatives are plain 1-D float arrays.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

TOL = 1e-12
# Rows closer to 1 than this are left untouched so decimal inputs survive a
# JSON round trip bit-for-bit.
_NORMALIZE_FLOOR = 1e-14

DETERMINISTIC = "deterministic"
GENERALIZED = "generalized"


class PfsaError(ValueError):
    """Base class for malformed machines and impossible requests."""


class ValidationError(PfsaError):
    def __init__(self, invariant: str, row: int | None = None, symbol=None, detail: str = ""):
        self.invariant = invariant
        self.row = row
        self.symbol = symbol
        where = []
        if symbol is not None:
            where.append(f"symbol {symbol!r}")
        if row is not None:
            where.append(f"row {row}")
        msg = invariant
        if where:
            msg += " at " + ", ".join(where)
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NotStronglyConnectedError(PfsaError):
    pass


class ZeroLikelihoodError(PfsaError):
    """The machine assigns probability zero to the observed symbol."""


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple

    def __post_init__(self):
        syms = tuple(self.symbols)
        if len(syms) < 1:
            raise PfsaError("alphabet must contain at least one symbol")
        if len(set(syms)) != len(syms):
            raise PfsaError(f"alphabet labels must be distinct: {syms!r}")
        object.__setattr__(self, "symbols", syms)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(syms)})

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise PfsaError(f"symbol {symbol!r} not in alphabet {self.symbols!r}") from None

    def encode(self, labels: Iterable) -> np.ndarray:
        return np.fromiter((self.index(s) for s in labels), dtype=np.int64)

    def decode(self, seq: Sequence[int]) -> list:
        return [self.symbols[int(i)] for i in seq]


BINARY = Alphabet(("0", "1"))


@dataclass(frozen=True, eq=False)
class Pfsa:
    """Immutable (generalized) PFSA.

    Construction validates the Gamma stack; see :func:`validate`.
    """

    alphabet: Alphabet
    gamma: np.ndarray
    kind: str = DETERMINISTIC
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        alphabet = self.alphabet if isinstance(self.alphabet, Alphabet) else Alphabet(tuple(self.alphabet))
        object.__setattr__(self, "alphabet", alphabet)
        gamma = np.array(self.gamma, dtype=float)
        if gamma.ndim != 3 or gamma.shape[1] != gamma.shape[2] or gamma.shape[0] != len(alphabet):
            raise ValidationError(
                "shape",
                detail=f"expected ({len(alphabet)}, m, m) gamma stack, got {gamma.shape}",
            )
        if self.kind not in (DETERMINISTIC, GENERALIZED):
            raise ValidationError("kind", detail=f"unknown kind {self.kind!r}")
        gamma = _validated(gamma, alphabet, self.kind)
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

    @property
    def num_states(self) -> int:
        return self.gamma.shape[1]

    @property
    def num_symbols(self) -> int:
        return self.gamma.shape[0]

    def __repr__(self) -> str:
        return f"Pfsa(alphabet={self.alphabet.symbols!r}, states={self.num_states}, kind={self.kind!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pfsa):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.kind == other.kind
            and self.gamma.shape == other.gamma.shape
            and bool(np.array_equal(self.gamma, other.gamma))
        )

    __hash__ = object.__hash__


def _validated(gamma: np.ndarray, alphabet: Alphabet, kind: str) -> np.ndarray:
    if not np.all(np.isfinite(gamma)):
        k, i, _ = np.argwhere(~np.isfinite(gamma))[0]
        raise ValidationError("non-finite entry", row=int(i), symbol=alphabet.symbols[k])
    neg = np.argwhere(gamma < 0)
    if len(neg):
        k, i, _ = neg[0]
        raise ValidationError("negative entry", row=int(i), symbol=alphabet.symbols[k])
    row_sums = gamma.sum(axis=(0, 2))
    dev = np.abs(row_sums - 1.0)
    bad = np.flatnonzero(dev > TOL)
    if len(bad):
        i = int(bad[0])
        raise ValidationError(
            "row sum of state-to-state matrix differs from 1",
            row=i,
            detail=f"sum = {row_sums[i]!r}",
        )
    if kind == DETERMINISTIC:
        nnz = (gamma > 0).sum(axis=2)
        multi = np.argwhere(nnz > 1)
        if len(multi):
            k, i = multi[0]
            raise ValidationError("determinism violated", row=int(i), symbol=alphabet.symbols[k])
    fix = dev > _NORMALIZE_FLOOR
    if np.any(fix):
        gamma = gamma.copy()
        gamma[:, fix, :] /= row_sums[fix][None, :, None]
    return gamma


def validate(machine: Pfsa) -> None:
    """Re-check every machine invariant, raising :class:`ValidationError`.

    Machines are validated on construction, so this only fails for objects
    whose arrays were tampered with after the fact.
    """
    _validated(np.asarray(machine.gamma, dtype=float), machine.alphabet, machine.kind)


def from_gamma(gamma, alphabet=BINARY, kind: str | None = None) -> Pfsa:
    """Build a machine, inferring ``kind`` from the sparsity pattern if omitted."""
    gamma = np.asarray(gamma, dtype=float)
    if kind is None:
        kind = DETERMINISTIC if np.all((gamma > 0).sum(axis=2) <= 1) else GENERALIZED
    return Pfsa(alphabet if isinstance(alphabet, Alphabet) else Alphabet(tuple(alphabet)), gamma, kind)


def m2(mu: float, nu: float) -> Pfsa:
    """Two-state binary machine whose state records the last emitted symbol."""
    gamma = np.array(
        [
            [[mu, 0.0], [nu, 0.0]],
            [[0.0, 1.0 - mu], [0.0, 1.0 - nu]],
        ]
    )
    return Pfsa(BINARY, gamma, DETERMINISTIC)


def bernoulli(q: float, alphabet=BINARY) -> Pfsa:
    """Single-state i.i.d. source emitting symbol 0 with probability ``q``."""
    return Pfsa(alphabet, np.array([[[q]], [[1.0 - q]]]), DETERMINISTIC)


def iid(probs, alphabet) -> Pfsa:
    probs = np.asarray(probs, dtype=float)
    return Pfsa(alphabet, probs.reshape(-1, 1, 1), DETERMINISTIC)


# --------------------------------------------------------------------------
# Matrices


def state_to_state(machine: Pfsa) -> np.ndarray:
    return machine.gamma.sum(axis=0)


def state_to_symbol(machine: Pfsa) -> np.ndarray:
    """Emission matrix: row ``s`` is the next-symbol distribution in state ``s``."""
    return machine.gamma.sum(axis=2).T


def is_strongly_connected(machine: Pfsa) -> bool:
    P = state_to_state(machine)
    n, _ = connected_components(P > 0, directed=True, connection="strong")
    return n == 1


def stationary_distribution(machine: Pfsa) -> np.ndarray:
    """Unique stationary vector of a strongly connected machine.

    Solves ``(P^T - I) p = 0`` with the last equation replaced by
    ``sum(p) = 1`` using LU with partial pivoting, followed by one step of
    iterative refinement.
    """
    cached = machine._cache.get("stationary")
    if cached is not None:
        return cached.copy()
    if not is_strongly_connected(machine):
        raise NotStronglyConnectedError("stationary distribution requires a strongly connected machine")
    p = stationary_of_matrix(state_to_state(machine))
    machine._cache["stationary"] = p
    return p.copy()


def stationary_of_matrix(P: np.ndarray) -> np.ndarray:
    m = P.shape[0]
    A = P.T - np.eye(m)
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    p = np.linalg.solve(A, b)
    p += np.linalg.solve(A, b - A @ p)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


# --------------------------------------------------------------------------
# Simulation


def _transition_tables(machine: Pfsa):
    """Cumulative emission and successor tables for sampling."""
    cached = machine._cache.get("tables")
    if cached is not None:
        return cached
    emit = state_to_symbol(machine)
    emit_cdf = np.cumsum(emit, axis=1)
    emit_cdf[:, -1] = 1.0
    succ = np.zeros_like(machine.gamma)
    with np.errstate(invalid="ignore", divide="ignore"):
        for x in range(machine.num_symbols):
            row = machine.gamma[x].sum(axis=1, keepdims=True)
            succ[x] = np.where(row > 0, machine.gamma[x] / np.where(row > 0, row, 1.0), 0.0)
    succ_cdf = np.cumsum(succ, axis=2)
    succ_cdf[:, :, -1] = 1.0
    tables = (emit_cdf, succ_cdf)
    machine._cache["tables"] = tables
    return tables


def generate(
    machine: Pfsa,
    n: int,
    seed=None,
    *,
    initial_state: int | None = None,
    return_state: bool = False,
):
    """Draw a length-``n`` realization.

    The initial state comes from the stationary distribution unless
    ``initial_state`` is given.  With ``return_state`` the state reached
    after the last symbol is returned too, so a realization can be continued.
    """
    if n < 0:
        raise PfsaError("sequence length must be non-negative")
    rng = np.random.default_rng(seed)
    emit_cdf, succ_cdf = _transition_tables(machine)
    if initial_state is None:
        p = stationary_distribution(machine)
        state = min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")), machine.num_states - 1)
    else:
        state = int(initial_state)
    out = np.empty(n, dtype=np.int64)
    if n:
        u_sym = rng.random(n).tolist()
        u_next = rng.random(n).tolist()
        emit_rows = [list(r) for r in emit_cdf]
        succ_rows = [[list(r) for r in per_sym] for per_sym in succ_cdf]
        deterministic = machine.kind == DETERMINISTIC
        if deterministic:
            nxt = [[int(np.argmax(machine.gamma[x, s])) for s in range(machine.num_states)]
                   for x in range(machine.num_symbols)]
        buf = [0] * n
        for i in range(n):
            x = bisect.bisect_right(emit_rows[state], u_sym[i])
            buf[i] = x
            if deterministic:
                state = nxt[x][state]
            else:
                state = bisect.bisect_right(succ_rows[x][state], u_next[i])
        out[:] = buf
    if return_state:
        return out, state
    return out


def generate_batch(machine: Pfsa, n: int, count: int, seed=None, *, initial_states=None, return_state=False):
    """Draw ``count`` independent realizations as a ``(count, n)`` array.

    Vectorized over realizations; the loop runs over time steps only.
    """
    rng = np.random.default_rng(seed)
    emit_cdf, succ_cdf = _transition_tables(machine)
    m = machine.num_states
    if initial_states is None:
        p = np.cumsum(stationary_distribution(machine))
        states = np.minimum(np.searchsorted(p, rng.random(count), side="right"), m - 1)
    else:
        states = np.asarray(initial_states, dtype=np.int64).copy()
    out = np.empty((count, n), dtype=np.int8)
    u_sym = rng.random((n, count))
    u_next = rng.random((n, count))
    K = machine.num_symbols
    for i in range(n):
        rows = emit_cdf[states]
        x = (u_sym[i][:, None] >= rows[:, :-1]).sum(axis=1) if K > 1 else np.zeros(count, dtype=np.int64)
        out[:, i] = x
        cdf = succ_cdf[x, states]
        states = np.minimum((u_next[i][:, None] >= cdf[:, :-1]).sum(axis=1), m - 1)
    if return_state:
        return out, states
    return out


# --------------------------------------------------------------------------
# Likelihood


def likelihood_step(machine: Pfsa, p: np.ndarray, x: int):
    """One forward update: returns ``(prob(x | p), p')``."""
    p = np.asarray(p, dtype=float)
    v = p @ machine.gamma[x]
    prob = float(v.sum())
    if prob <= 0.0:
        raise ZeroLikelihoodError(f"symbol {machine.alphabet.symbols[x]!r} has zero probability")
    return prob, v / prob


def symbolic_derivative(machine: Pfsa, p: np.ndarray) -> np.ndarray:
    return np.asarray(p, dtype=float) @ state_to_symbol(machine)


def negative_log_likelihood_rate(machine: Pfsa, x: Sequence[int], initial=None) -> float:
    """Average negative log2-likelihood of ``x`` under ``machine``.

    Starts from the stationary distribution unless ``initial`` is given.
    Returns ``inf`` when some symbol has zero probability.
    """
    x = np.asarray(x, dtype=np.int64)
    n = len(x)
    if n == 0:
        raise PfsaError("likelihood of an empty sequence is undefined")
    p = stationary_distribution(machine) if initial is None else np.asarray(initial, dtype=float)
    gamma = machine.gamma
    total = 0.0
    for sym in x.tolist():
        v = p @ gamma[sym]
        s = v.sum()
        if s <= 0.0:
            return math.inf
        total += math.log2(s)
        p = v / s
    return -total / n


def sequence_probability(machine: Pfsa, x: Sequence[int], initial=None) -> float:
    p = stationary_distribution(machine) if initial is None else np.asarray(initial, dtype=float)
    for sym in np.asarray(x, dtype=np.int64).tolist():
        p = p @ machine.gamma[sym]
    return float(p.sum())


# --------------------------------------------------------------------------
# JSON


def to_dict(machine: Pfsa) -> dict:
    return {
        "alphabet": list(machine.alphabet.symbols),
        "states": machine.num_states,
        "gamma": {str(sym): machine.gamma[k].tolist() for k, sym in enumerate(machine.alphabet.symbols)},
        "kind": machine.kind,
    }


def from_dict(data: dict) -> Pfsa:
    try:
        labels = list(data["alphabet"])
        m = int(data["states"])
        gam = data["gamma"]
        kind = data.get("kind", DETERMINISTIC)
    except (KeyError, TypeError) as exc:
        raise PfsaError(f"machine JSON missing field: {exc}") from None
    stack = []
    for sym in labels:
        if str(sym) not in gam:
            raise PfsaError(f"machine JSON has no gamma matrix for symbol {sym!r}")
        mat = np.asarray(gam[str(sym)], dtype=float)
        if mat.shape != (m, m):
            raise PfsaError(f"gamma[{sym!r}] has shape {mat.shape}, expected ({m}, {m})")
        stack.append(mat)
    return Pfsa(Alphabet(tuple(str(s) for s in labels)), np.stack(stack), kind)


def dumps(machine: Pfsa) -> str:
    return json.dumps(to_dict(machine), indent=2)


def loads(text: str) -> Pfsa:
    return from_dict(json.loads(text))
