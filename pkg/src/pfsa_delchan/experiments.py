"""Experiment harness: decoding error curves, tamper detection tables and the
M2 parameter scan.

Randomness is organised in independent blocks.  Every block draws from
``numpy.random.SeedSequence(master_seed, spawn_key=key)`` where ``key`` is

* decoding: ``(0, rerun, message, length)``; each block holds all trials of
  that cell, trial ``i`` being row ``i`` of the block;
* tamper detection: ``(1, test_set, length, message)``;
* codebook resampling: ``(2, rerun)``.

Blocks never share generator state, so tables are identical whatever the
number of worker threads.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .channel import m2_deletion_transform, transmit_batch, transmit_until_batch
from .codec import Codebook, decode_batch, m2_scores
from .design import DesignConfig, design_codebook
from .metrics import binary_kl, entropy_rate, entropy_rate_m2, kl_matrix_m2
from .pfsa import Pfsa, PfsaError, generate_batch, stationary_distribution
from .tamper import NORMALIZED, entropy_gaps, vote_fraction

THREADS_ENV = "PFSA_DELCHAN_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise PfsaError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise PfsaError(f"{THREADS_ENV} must be non-negative")
    return n or (os.cpu_count() or 1)


def _ordered_map(fn, items):
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _block_rng(seed: int, key: tuple) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass
class ResultTable:
    columns: tuple
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def load_codebook(source) -> Codebook:
    if isinstance(source, Codebook):
        return source
    return Codebook.loads(Path(source).read_text(encoding="utf-8"))


def _config_from(cls, data: dict, overrides: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise PfsaError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    for k, v in merged.items():
        if isinstance(v, list):
            merged[k] = tuple(v)
    return cls(**merged)


# --------------------------------------------------------------------------
# Decoding


@dataclass(frozen=True)
class DecodingExperimentConfig:
    codebook: object = None
    delta: float = 0.2
    lengths: tuple = tuple(range(10, 201, 10))
    trials: int = 100
    reruns: int = 1
    seed: int = 0
    observed_length: bool = True
    resample_codebook: bool = False

    def __post_init__(self):
        if self.codebook is None and not self.resample_codebook:
            raise PfsaError("decoding experiment needs a codebook")
        if not self.lengths or min(self.lengths) < 1:
            raise PfsaError("lengths must be positive")
        if self.trials < 1 or self.reruns < 1:
            raise PfsaError("trials and reruns must be at least 1")

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "DecodingExperimentConfig":
        return _config_from(cls, data, overrides)


def _codebook_for_rerun(cfg, base: Codebook | None, rerun: int) -> Codebook:
    if not cfg.resample_codebook:
        return base
    state = np.random.SeedSequence(cfg.seed, spawn_key=(2, rerun)).generate_state(1)[0]
    n = len(base) if base is not None else 10
    delta = base.design_delta if base is not None else cfg.delta
    return design_codebook(DesignConfig(num_messages=n, seed=int(state), design_delta=delta))


def _decode_errors(book: Codebook, m: int, n: int, trials: int, delta: float, rng, observed: bool) -> int:
    machine = book.machines[m].machine()
    if observed:
        x = transmit_until_batch(machine, n, trials, delta, rng)
        decoded, _ = decode_batch(book, x)
        return int(np.sum(decoded != m))
    y = generate_batch(machine, n, trials, rng)
    errors = 0
    models = book.transformed()
    for out in transmit_batch(y, delta, rng):
        # An all-deleted output cannot be decoded and counts as an error.
        if len(out) == 0 or int(np.argmin(m2_scores(models, out[None, :])[0])) != m:
            errors += 1
    return errors


def run_decoding_experiment(cfg: DecodingExperimentConfig) -> ResultTable:
    """Error rate per (length, message).

    Columns: ``length, message, error_rate, reruns``.
    """
    base = load_codebook(cfg.codebook) if cfg.codebook is not None else None
    books = [_codebook_for_rerun(cfg, base, r) for r in range(cfg.reruns)]
    M = len(books[0])
    blocks = [(r, m, n) for r in range(cfg.reruns) for m in range(M) for n in cfg.lengths]

    def run(block):
        r, m, n = block
        rng = _block_rng(cfg.seed, (0, r, m, n))
        return _decode_errors(books[r], m, n, cfg.trials, cfg.delta, rng, cfg.observed_length)

    errors = dict(zip(blocks, _ordered_map(run, blocks)))
    table = ResultTable(("length", "message", "error_rate", "reruns"))
    for n in cfg.lengths:
        for m in range(M):
            total = sum(errors[(r, m, n)] for r in range(cfg.reruns))
            table.rows.append((n, m, total / (cfg.trials * cfg.reruns), cfg.reruns))
    return table


def mean_error_by_length(table: ResultTable) -> dict:
    out: dict = {}
    for n, _, rate, _ in table.rows:
        out.setdefault(n, []).append(rate)
    return {n: float(np.mean(v)) for n, v in out.items()}


# --------------------------------------------------------------------------
# Tamper detection


@dataclass(frozen=True)
class TamperExperimentConfig:
    codebook: object = None
    delta: float = 0.2
    delta_tampered: float = 0.3
    eta: float = 0.1
    epsilons: tuple = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25)
    k: int = 200
    test_sets: int = 50
    assignment_seed: int = 0
    lengths: tuple = (50, 100, 150, 200)
    seed: int = 0
    mode: str = NORMALIZED
    observed_length: bool = True
    # None: random assignment; True/False: every test set tampered/clean.
    force_tampered: object = None

    def __post_init__(self):
        if self.codebook is None:
            raise PfsaError("tamper experiment needs a codebook")
        if not self.delta_tampered > self.delta:
            raise PfsaError("delta_tampered must exceed delta")
        if self.k < 1 or self.test_sets < 1:
            raise PfsaError("k and test_sets must be at least 1")
        if not self.lengths or min(self.lengths) < 1:
            raise PfsaError("lengths must be positive")

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "TamperExperimentConfig":
        return _config_from(cls, data, overrides)


def tamper_assignment(cfg: TamperExperimentConfig) -> np.ndarray:
    if cfg.force_tampered is not None:
        return np.full(cfg.test_sets, bool(cfg.force_tampered))
    rng = np.random.default_rng(cfg.assignment_seed)
    return rng.random(cfg.test_sets) < 0.5


def _per_message_counts(k: int, M: int) -> list[int]:
    return [k // M + (1 if m < k % M else 0) for m in range(M)]


def _set_excess(book, h0, cfg, t: int, n: int, delta: float):
    """Decoded messages and likelihood excesses for one test set."""
    models = book.transformed(cfg.delta)
    decoded, excess = [], []
    for m, count in enumerate(_per_message_counts(cfg.k, len(book))):
        if count == 0:
            continue
        rng = _block_rng(cfg.seed, (1, t, n, m))
        machine = book.machines[m].machine()
        if cfg.observed_length:
            x = transmit_until_batch(machine, n, count, delta, rng)
            scores = m2_scores(models, x)
        else:
            outs = transmit_batch(generate_batch(machine, n, count, rng), delta, rng)
            outs = [o for o in outs if len(o)]
            if not outs:
                continue
            scores = np.vstack([m2_scores(models, o[None, :]) for o in outs])
        d = np.argmin(scores, axis=1)
        decoded.append(d)
        excess.append(scores[np.arange(len(d)), d] - h0[d])
    return np.concatenate(decoded), np.concatenate(excess)


def run_tamper_experiment(cfg: TamperExperimentConfig) -> ResultTable:
    """Miss and false-alarm rates per (length, epsilon).

    Rates are fractions of all test sets, so ``combined_rate`` is their sum.
    Columns: ``length, epsilon, miss_rate, false_alarm_rate, combined_rate``.
    """
    book = load_codebook(cfg.codebook)
    tampered = tamper_assignment(cfg)
    h0, gaps = entropy_gaps(book, cfg.delta, cfg.eta)
    if np.any(gaps <= 0):
        raise PfsaError("some machine gains no entropy under extra deletion; it is too close to mu = nu")
    blocks = [(t, n) for n in cfg.lengths for t in range(cfg.test_sets)]

    def run(block):
        t, n = block
        delta = cfg.delta_tampered if tampered[t] else cfg.delta
        decoded, excess = _set_excess(book, h0, cfg, t, n, delta)
        return [vote_fraction(decoded, excess, gaps, e, cfg.mode) > 0.5 for e in cfg.epsilons]

    verdicts = dict(zip(blocks, _ordered_map(run, blocks)))
    table = ResultTable(("length", "epsilon", "miss_rate", "false_alarm_rate", "combined_rate"))
    S = cfg.test_sets
    for n in cfg.lengths:
        for j, eps in enumerate(cfg.epsilons):
            miss = sum(1 for t in range(S) if tampered[t] and not verdicts[(t, n)][j])
            fa = sum(1 for t in range(S) if not tampered[t] and verdicts[(t, n)][j])
            table.rows.append((n, float(eps), miss / S, fa / S, (miss + fa) / S))
    return table


# --------------------------------------------------------------------------
# Parameter scan


def scan_grid(step: float) -> np.ndarray:
    span = 0.99 - 0.01
    k = round(span / step)
    if k < 1 or abs(k * step - span) > 1e-9:
        raise PfsaError(f"grid step {step!r} does not divide 0.98")
    return np.round(0.01 + step * np.arange(k + 1), 12)


def run_param_scan(deltas, step: float = 0.01) -> ResultTable:
    """Transformed M2 parameters and their KL rate from the uniform source.

    Columns: ``delta, mu, nu, mu_delta, nu_delta, kl_from_uniform``.
    """
    grid = scan_grid(step)
    mu, nu = np.meshgrid(grid, grid, indexing="ij")
    mu, nu = mu.ravel(), nu.ravel()
    table = ResultTable(("delta", "mu", "nu", "mu_delta", "nu_delta", "kl_from_uniform"))
    for delta in deltas:
        denom = 1.0 - delta * (mu - nu)
        md = (mu - delta * (mu - nu)) / denom
        nd = nu / denom
        # D(g_(.5,.5) || g): the uniform source sits in each state half the time.
        kl = 0.5 * (binary_kl(0.5, md) + binary_kl(0.5, nd))
        for row in zip(mu, nu, md, nd, kl):
            table.rows.append((float(delta),) + tuple(float(v) for v in row))
    return table


# --------------------------------------------------------------------------
# Info report


def machine_report(machine: Pfsa, delta: float) -> str:
    from .channel import deletion_transform, m2_params_of

    lines = [f"states: {machine.num_states}", f"kind: {machine.kind}"]
    p = stationary_distribution(machine)
    lines.append("stationary: " + ", ".join(repr(float(v)) for v in p))
    lines.append(f"entropy_rate: {entropy_rate(machine)!r}")
    gd = deletion_transform(machine, delta)
    lines.append(f"entropy_rate_delta[{delta!r}]: {entropy_rate(gd)!r}")
    try:
        params = m2_params_of(machine)
    except PfsaError:
        pass
    else:
        td = m2_deletion_transform(params, delta)
        lines.append(f"m2: mu={params.mu!r} nu={params.nu!r}")
        lines.append(f"m2_delta: mu={td.mu!r} nu={td.nu!r}")
    return "\n".join(lines) + "\n"


def codebook_report(book: Codebook, delta: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["message", "mu", "nu", "mu_delta", "nu_delta", "entropy_rate", "entropy_rate_delta"])
    for m, (p, q) in enumerate(zip(book.machines, book.transformed(delta))):
        w.writerow([m, repr(p.mu), repr(p.nu), repr(q.mu), repr(q.nu),
                    repr(entropy_rate_m2(p)), repr(entropy_rate_m2(q))])
    buf.write("\n")
    params = book.transformed(delta)
    kl = kl_matrix_m2([p.mu for p in params], [p.nu for p in params])
    w.writerow(["kl_delta"] + list(range(len(book))))
    for i, row in enumerate(kl):
        w.writerow([i] + [repr(float(v)) for v in row])
    return buf.getvalue()


def info(source, delta: float = 0.0) -> str:
    """Text report for a machine JSON or codebook JSON (path or object)."""
    import json

    from .pfsa import from_dict

    if isinstance(source, Pfsa):
        return machine_report(source, delta)
    if isinstance(source, Codebook):
        return codebook_report(source, delta)
    data = json.loads(Path(source).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "machines" in data:
        return codebook_report(Codebook.from_dict(data), delta)
    if isinstance(data, dict) and "gamma" in data:
        return machine_report(from_dict(data), delta)
    raise PfsaError("JSON is neither a machine (needs 'gamma') nor a codebook (needs 'machines')")


__all__ = [
    "DecodingExperimentConfig",
    "ResultTable",
    "TamperExperimentConfig",
    "info",
    "mean_error_by_length",
    "run_decoding_experiment",
    "run_param_scan",
    "run_tamper_experiment",
    "scan_grid",
    "tamper_assignment",
    "worker_count",
]
