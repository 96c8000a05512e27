"""The i.i.d. deletion channel and its action on PFSAs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pfsa import (
    GENERALIZED,
    NotStronglyConnectedError,
    Pfsa,
    PfsaError,
    generate,
    generate_batch,
    is_strongly_connected,
    m2,
    state_to_state,
    stationary_distribution,
)


@dataclass(frozen=True)
class ChannelConfig:
    delta: float

    def __post_init__(self):
        if not (0.0 <= self.delta < 1.0):
            raise PfsaError(f"deletion probability must lie in [0, 1), got {self.delta!r}")


@dataclass(frozen=True)
class M2Params:
    mu: float
    nu: float

    def __post_init__(self):
        for name in ("mu", "nu"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise PfsaError(f"M2 parameter {name} must lie in (0, 1), got {v!r}")

    def machine(self) -> Pfsa:
        return m2(self.mu, self.nu)

    def stationary(self) -> np.ndarray:
        p0 = self.nu / (1.0 - self.mu + self.nu)
        return np.array([p0, 1.0 - p0])


def _delta(cfg) -> float:
    return ChannelConfig(cfg).delta if not isinstance(cfg, ChannelConfig) else cfg.delta


def transmit(x, cfg, seed=None) -> np.ndarray:
    """Delete each symbol of ``x`` independently with probability ``cfg.delta``."""
    delta = _delta(cfg)
    x = np.asarray(x)
    rng = np.random.default_rng(seed)
    keep = rng.random(len(x)) >= delta
    return x[keep]


def transmit_until(machine: Pfsa, target: int, cfg, seed=None, *, chunk: int | None = None) -> np.ndarray:
    """Feed a growing realization of ``machine`` through the channel.

    The input is extended chunk by chunk (continuing from the last state)
    until ``target`` symbols have survived; the first ``target`` survivors
    are returned.
    """
    delta = _delta(cfg)
    if target < 0:
        raise PfsaError("target output length must be non-negative")
    rng = np.random.default_rng(seed)
    if chunk is None:
        chunk = max(16, int(math.ceil(target / (1.0 - delta))) + 16)
    out = []
    have = 0
    state = None
    while have < target:
        y, state = generate(machine, chunk, rng, initial_state=state, return_state=True)
        kept = y[rng.random(chunk) >= delta]
        out.append(kept)
        have += len(kept)
    if not out:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(out)[:target]


def transmit_until_batch(machine: Pfsa, target: int, count: int, delta: float, seed=None) -> np.ndarray:
    """Vectorized :func:`transmit_until` returning a ``(count, target)`` array."""
    ChannelConfig(delta)
    rng = np.random.default_rng(seed)
    mean = target / (1.0 - delta)
    spread = math.sqrt(max(target, 1) * delta) / (1.0 - delta)
    length = int(math.ceil(mean + 6.0 * spread)) + 8
    x, states = generate_batch(machine, length, count, rng, return_state=True)
    keep = rng.random(x.shape) >= delta
    short = np.flatnonzero(keep.sum(axis=1) < target)
    while len(short):
        extra = max(8, int(math.ceil(mean / 4)))
        pad = np.zeros((count, extra), dtype=x.dtype)
        pad_keep = np.zeros((count, extra), dtype=bool)
        y, new_states = generate_batch(machine, extra, len(short), rng, initial_states=states[short], return_state=True)
        pad[short] = y
        pad_keep[short] = rng.random(y.shape) >= delta
        states = states.copy()
        states[short] = new_states
        x = np.concatenate([x, pad], axis=1)
        keep = np.concatenate([keep, pad_keep], axis=1)
        short = np.flatnonzero(keep.sum(axis=1) < target)
    keep &= np.cumsum(keep, axis=1) <= target
    return x[keep].reshape(count, target)


def transmit_batch(x: np.ndarray, delta: float, seed=None) -> list[np.ndarray]:
    """Independent deletions applied to each row of ``x``."""
    ChannelConfig(delta)
    rng = np.random.default_rng(seed)
    keep = rng.random(x.shape) >= delta
    return [row[k] for row, k in zip(x, keep)]


# --------------------------------------------------------------------------
# Deletion transform


def q_matrix(P: np.ndarray, delta: float) -> np.ndarray:
    """``(1 - delta) (I - delta P)^{-1}``: where the chain sits at the next survivor."""
    ChannelConfig(delta)
    P = np.asarray(P, dtype=float)
    m = P.shape[0]
    return np.linalg.solve(np.eye(m) - delta * P, (1.0 - delta) * np.eye(m))


def deletion_transform(machine: Pfsa, delta: float) -> Pfsa:
    """Generalized machine whose realizations are distributed as channel outputs."""
    if not is_strongly_connected(machine):
        raise NotStronglyConnectedError("deletion transform requires a strongly connected machine")
    Q = q_matrix(state_to_state(machine), delta)
    gamma = np.einsum("ij,xjk->xik", Q, machine.gamma)
    gamma[gamma < 0] = 0.0
    return Pfsa(machine.alphabet, gamma, GENERALIZED)


def m2_deletion_transform(params: M2Params, delta: float) -> M2Params:
    """Closed form of the deletion transform inside the M2 class."""
    ChannelConfig(delta)
    mu, nu = params.mu, params.nu
    denom = 1.0 - delta * (mu - nu)
    return M2Params((mu - delta * (mu - nu)) / denom, nu / denom)


def m2_params_of(machine: Pfsa) -> M2Params:
    """Read ``(mu, nu)`` back from a machine with M2 structure."""
    g = machine.gamma
    if g.shape != (2, 2, 2) or np.any(g[0][:, 1] != 0) or np.any(g[1][:, 0] != 0):
        raise PfsaError("machine does not have M2 structure")
    return M2Params(float(g[0, 0, 0]), float(g[0, 1, 0]))


def deletion_limit(machine: Pfsa) -> np.ndarray:
    """Symbol distribution of the single-state machine reached as delta -> 1."""
    p = stationary_distribution(machine)
    return np.einsum("i,xij->x", p, machine.gamma)
