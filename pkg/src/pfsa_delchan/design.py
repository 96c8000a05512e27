"""Codebook design: spread M2 machines apart in KL divergence."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import M2Params
from .codec import Codebook
from .metrics import kl_matrix_m2
from .pfsa import PfsaError


@dataclass(frozen=True)
class DesignConfig:
    num_messages: int = 10
    step_sigma: float = 0.01
    margin: float = 0.2
    bounds: tuple = (0.05, 0.95)
    max_iters: int = 1000
    seed: object = 0
    design_delta: float = 0.2
    restarts: int = 1

    def __post_init__(self):
        lo, hi = self.bounds
        if not (0.0 < lo < hi < 1.0):
            raise PfsaError(f"bounds must satisfy 0 < lo < hi < 1, got {self.bounds!r}")
        if not (0.0 < self.step_sigma < hi - lo):
            raise PfsaError("step_sigma must be positive and smaller than the bounds width")
        if self.num_messages < 2:
            raise PfsaError("a designed codebook needs at least two messages")
        if self.max_iters < 0:
            raise PfsaError("max_iters must be non-negative")
        if self.restarts < 1:
            raise PfsaError("restarts must be at least 1")


def _draw_pair(rng: np.random.Generator, margin: float, lo: float, hi: float) -> tuple[float, float]:
    while True:
        mu = rng.random()
        if mu > 0.5:
            a, b = 0.0, mu - margin
        else:
            a, b = mu + margin, 1.0
        a, b = max(a, lo), min(b, hi)
        if a >= b:
            continue
        nu = a + (b - a) * rng.random()
        return float(np.clip(mu, lo, hi)), float(nu)


def init_codebook(cfg: DesignConfig) -> Codebook:
    """Random machines kept ``margin`` away from the ``mu = nu`` diagonal."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.bounds
    pairs: list[tuple[float, float]] = []
    while len(pairs) < cfg.num_messages:
        pair = _draw_pair(rng, cfg.margin, lo, hi)
        if pair not in pairs:
            pairs.append(pair)
    return Codebook(tuple(M2Params(mu, nu) for mu, nu in pairs), cfg.design_delta)


def _symmetric_kl(mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
    d = kl_matrix_m2(mu, nu)
    return 0.5 * (d + d.T)


def _min_pair(mu, nu):
    s = _symmetric_kl(mu, nu)
    iu = np.triu_indices(len(mu), k=1)
    vals = s[iu]
    k = int(np.argmin(vals))
    return float(vals[k]), int(iu[0][k]), int(iu[1][k])


def _arrays(book):
    if isinstance(book, Codebook):
        return book.mu.copy(), book.nu.copy()
    params = list(book)
    return np.array([p.mu for p in params]), np.array([p.nu for p in params])


def objective(book) -> float:
    """Smallest symmetrized KL rate over all machine pairs, bits/symbol.

    Accepts a :class:`Codebook` or any sequence of :class:`M2Params`
    (duplicates allowed).
    """
    if len(book) < 2:
        raise PfsaError("objective needs at least two machines")
    return _min_pair(*_arrays(book))[0]


def hill_climb(book, cfg: DesignConfig):
    """Steepest-ascent search on the closest pair.

    Each round tries moving either machine of the closest pair by
    ``+-step_sigma`` along one coordinate and keeps the move that raises the
    global objective the most.  Stops at a local optimum or after
    ``max_iters`` accepted moves.  A plain sequence of parameters comes back
    as a list, a :class:`Codebook` as a codebook.
    """
    if len(book) < 2:
        raise PfsaError("hill climbing needs at least two machines")
    lo, hi = cfg.bounds
    sigma = cfg.step_sigma
    mu, nu = _arrays(book)
    start_mu, start_nu = mu.copy(), nu.copy()
    best, i, j = _min_pair(mu, nu)
    for _ in range(cfg.max_iters):
        choice = None
        for k in (i, j):
            for coord in (mu, nu):
                for step in (sigma, -sigma):
                    old = coord[k]
                    coord[k] = min(max(old + step, lo), hi)
                    if coord[k] != old:
                        val = _min_pair(mu, nu)[0]
                        if val > best and (choice is None or val > choice[0]):
                            choice = (val, coord, k, coord[k])
                    coord[k] = old
        if choice is None:
            break
        _, coord, k, new = choice
        coord[k] = new
        best, i, j = _min_pair(mu, nu)
    params = [M2Params(float(a), float(b)) for a, b in zip(mu, nu)]
    if not isinstance(book, Codebook):
        return params
    if np.array_equal(mu, start_mu) and np.array_equal(nu, start_nu):
        return book
    return Codebook(tuple(params), book.design_delta)


def design_codebook(cfg: DesignConfig) -> Codebook:
    """Best hill-climbed codebook over ``cfg.restarts`` random starts.

    Start ``r`` is seeded with the ``r``-th child of ``SeedSequence(cfg.seed)``;
    the first start with the highest objective wins.
    """
    best, best_val = None, -np.inf
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts):
        book = hill_climb(init_codebook(replace(cfg, seed=child)), cfg)
        val = objective(book)
        if val > best_val:
            best, best_val = book, val
    return best
