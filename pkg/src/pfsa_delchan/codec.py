"""Semi-universal encoder and maximum-likelihood decoder over M2 codebooks."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, M2Params, m2_deletion_transform
from .pfsa import PfsaError, generate, generate_batch


@dataclass(frozen=True)
class Codebook:
    """Message ``m`` is carried by the M2 machine ``machines[m]``.

    ``design_delta`` is the deletion probability the decoder assumes.
    """

    machines: tuple
    design_delta: float = 0.0

    def __post_init__(self):
        ms = tuple(p if isinstance(p, M2Params) else M2Params(*p) for p in self.machines)
        if not ms:
            raise PfsaError("codebook needs at least one machine")
        if len({(p.mu, p.nu) for p in ms}) != len(ms):
            raise PfsaError("codebook machines must be pairwise distinct")
        ChannelConfig(self.design_delta)
        object.__setattr__(self, "machines", ms)

    def __len__(self) -> int:
        return len(self.machines)

    @property
    def mu(self) -> np.ndarray:
        return np.array([p.mu for p in self.machines])

    @property
    def nu(self) -> np.ndarray:
        return np.array([p.nu for p in self.machines])

    def transformed(self, delta: float | None = None) -> list[M2Params]:
        """Machine parameters as seen through a channel with ``delta``."""
        d = self.design_delta if delta is None else delta
        return [m2_deletion_transform(p, d) for p in self.machines]

    def to_dict(self) -> dict:
        return {
            "design_delta": self.design_delta,
            "machines": [{"mu": p.mu, "nu": p.nu} for p in self.machines],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Codebook":
        try:
            machines = [M2Params(float(e["mu"]), float(e["nu"])) for e in data["machines"]]
            delta = float(data.get("design_delta", 0.0))
        except (KeyError, TypeError) as exc:
            raise PfsaError(f"codebook JSON missing field: {exc}") from None
        return cls(tuple(machines), delta)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "Codebook":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DecodeResult:
    message: int
    scores: np.ndarray


def encode(book: Codebook, m: int, n: int, seed=None) -> np.ndarray:
    if not 0 <= m < len(book):
        raise PfsaError(f"message index {m} out of range for a codebook of {len(book)}")
    if n < 1:
        raise PfsaError("encoded length must be at least 1")
    return generate(book.machines[m].machine(), n, seed)


def encode_batch(book: Codebook, m: int, n: int, count: int, seed=None) -> np.ndarray:
    if not 0 <= m < len(book):
        raise PfsaError(f"message index {m} out of range for a codebook of {len(book)}")
    return generate_batch(book.machines[m].machine(), n, count, seed)


def bigram_stats(x: np.ndarray):
    """First symbols and ``(prev, cur)`` transition counts of binary sequences.

    ``x`` is a ``(count, n)`` array; returns ``first`` of shape ``(count,)``
    and ``counts`` of shape ``(count, 2, 2)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    prev, cur = x[:, :-1], x[:, 1:]
    code = 2 * prev + cur
    counts = np.stack([(code == k).sum(axis=1) for k in range(4)], axis=1).reshape(-1, 2, 2)
    return x[:, 0], counts


def m2_scores(params, x: np.ndarray) -> np.ndarray:
    """Negative log2-likelihood rates of M2 machines on binary sequences.

    After the first symbol an M2 machine's state equals the previous symbol,
    so the likelihood factors over bigram counts.  Returns an array of shape
    ``(count, len(params))``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    n = x.shape[1]
    if n == 0:
        raise PfsaError("cannot score empty sequences")
    mu = np.array([p.mu for p in params])
    nu = np.array([p.nu for p in params])
    p0 = nu / (1.0 - mu + nu)
    first, counts = bigram_stats(x)
    log_first = np.where(first[:, None] == 0, np.log2(p0)[None, :], np.log2(1.0 - p0)[None, :])
    logs = (np.log2(mu), np.log2(1.0 - mu), np.log2(nu), np.log2(1.0 - nu))
    c = counts.reshape(-1, 4).astype(float)
    # Elementwise sum in a fixed order: a row scores the same in any batch.
    total = log_first
    for k in range(4):
        total = total + c[:, k : k + 1] * logs[k][None, :]
    return -total / n


def decode(book: Codebook, x) -> DecodeResult:
    """Pick the message whose deletion-transformed machine best explains ``x``.

    Ties go to the lowest message index.
    """
    x = np.asarray(x, dtype=np.int64)
    if x.ndim != 1 or len(x) == 0:
        raise PfsaError("decode needs a non-empty 1-D sequence")
    if np.any((x < 0) | (x > 1)):
        raise PfsaError("M2 codebooks decode binary sequences only")
    scores = m2_scores(book.transformed(), x[None, :])[0]
    if np.all(np.isinf(scores)):
        raise PfsaError("no codebook machine can produce the observed sequence")
    return DecodeResult(int(np.argmin(scores)), scores)


def decode_batch(book: Codebook, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`decode`; returns ``(messages, scores)``."""
    scores = m2_scores(book.transformed(), x)
    return np.argmin(scores, axis=1), scores
