"""Weighted-vote detection of an increased deletion probability."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import Codebook, m2_scores
from .metrics import entropy_rate_m2
from .pfsa import PfsaError

NORMALIZED = "normalized"
STRICT_PAPER = "strict-paper"


@dataclass(frozen=True)
class DetectionParams:
    """``delta`` is the channel the decoder trusts; tampering is assumed to
    raise it by more than ``eta``.  ``epsilon`` scales the vote threshold."""

    delta: float
    eta: float = 0.1
    epsilon: float = 0.15
    mode: str = NORMALIZED

    def __post_init__(self):
        if self.eta <= 0:
            raise PfsaError("eta must be positive")
        if not (0.0 <= self.delta and self.delta + self.eta < 1.0):
            raise PfsaError("need 0 <= delta and delta + eta < 1")
        if self.epsilon < 0:
            raise PfsaError("epsilon must be non-negative")
        if self.mode not in (NORMALIZED, STRICT_PAPER):
            raise PfsaError(f"unknown detection mode {self.mode!r}")


@dataclass(frozen=True)
class TamperVerdict:
    tampered: bool
    vote_fraction: float
    # (decoded message, excess over the assumed entropy rate, voted)
    per_sequence: list = field(default_factory=list)
    excluded: list = field(default_factory=list)


def entropy_gaps(book: Codebook, delta: float, eta: float):
    """``(H0, D)``: entropy rates at ``delta`` and their increase at ``delta + eta``."""
    h0 = np.array([entropy_rate_m2(p) for p in book.transformed(delta)])
    h1 = np.array([entropy_rate_m2(p) for p in book.transformed(delta + eta)])
    return h0, h1 - h0


def vote_fraction(decoded, excess, gaps, epsilon: float, mode: str = NORMALIZED) -> float:
    """Reduce per-sequence decisions to the weighted vote fraction.

    Shared by :func:`detect` and the experiment harness so both apply the
    same rule.
    """
    decoded = np.asarray(decoded)
    excess = np.asarray(excess, dtype=float)
    w = gaps[decoded]
    voted = excess > epsilon * w
    v = float(np.sum(np.where(voted, w, 0.0)))
    if mode == NORMALIZED:
        total = float(np.sum(w))
        return v / total if total > 0 else 0.0
    return v / (float(np.sum(gaps)) * len(decoded))


def detect(book: Codebook, sequences, params: DetectionParams) -> TamperVerdict:
    """Declare tampering when likelihood excesses vote for a larger deletion rate.

    Each sequence is decoded against ``g_m(delta)``; it votes with weight
    ``D[d]`` when its score exceeds ``H(g_d(delta))`` by more than
    ``epsilon * D[d]``.
    """
    if len(sequences) == 0:
        raise PfsaError("tamper detection needs at least one sequence")
    h0, gaps = entropy_gaps(book, params.delta, params.eta)
    if np.any(gaps <= 0):
        bad = int(np.flatnonzero(gaps <= 0)[0])
        raise PfsaError(
            f"machine {bad} gains no entropy under extra deletion; it is too close to mu = nu"
        )
    models = book.transformed(params.delta)
    decoded, excess, excluded = [], [], []
    for i, seq in enumerate(sequences):
        seq = np.asarray(seq, dtype=np.int64)
        if seq.ndim != 1 or len(seq) == 0:
            raise PfsaError(f"sequence {i} is empty")
        scores = m2_scores(models, seq[None, :])[0]
        if np.all(np.isinf(scores)):
            excluded.append(i)
            continue
        d = int(np.argmin(scores))
        decoded.append(d)
        excess.append(float(scores[d] - h0[d]))
    if not decoded:
        return TamperVerdict(False, 0.0, [], excluded)
    frac = vote_fraction(decoded, excess, gaps, params.epsilon, params.mode)
    voted = np.asarray(excess) > params.epsilon * gaps[np.asarray(decoded)]
    per = [(d, e, bool(v)) for d, e, v in zip(decoded, excess, voted)]
    return TamperVerdict(frac > 0.5, frac, per, excluded)
