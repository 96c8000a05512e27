"""Command-line front end.

Exit status: 0 on success, 2 on configuration or input-format errors,
3 on I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import seqio
from .channel import ChannelConfig, transmit
from .codec import Codebook, decode, encode
from .design import DesignConfig, design_codebook
from .experiments import (
    DecodingExperimentConfig,
    TamperExperimentConfig,
    info,
    load_codebook,
    run_decoding_experiment,
    run_param_scan,
    run_tamper_experiment,
)
from .pfsa import PfsaError
from .tamper import NORMALIZED, STRICT_PAPER, DetectionParams, detect

EXIT_CONFIG = 2
EXIT_IO = 3


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            # start:stop:step, stop inclusive
            a, b, *c = (int(v) for v in part.split(":"))
            out.extend(range(a, b + 1, c[0] if c else 1))
        else:
            out.append(int(part))
    return tuple(out)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def cmd_design(args) -> None:
    cfg = DesignConfig(
        num_messages=args.messages,
        step_sigma=args.sigma,
        margin=args.margin,
        bounds=tuple(args.bounds),
        max_iters=args.max_iters,
        seed=args.seed,
        design_delta=args.delta,
        restarts=args.restarts,
    )
    _emit(design_codebook(cfg).dumps() + "\n", args.output)


def cmd_encode(args) -> None:
    book = load_codebook(args.codebook)
    rng = np.random.default_rng(args.seed)
    seqs = [encode(book, args.message, args.length, rng) for _ in range(args.count)]
    _write_seqs(seqs, args)


def cmd_channel(args) -> None:
    cfg = ChannelConfig(args.delta)
    rng = np.random.default_rng(args.seed)
    seqs = [transmit(x, cfg, rng) for x in seqio.read_sequences(args.input, fmt=args.format)]
    _write_seqs(seqs, args)


def _write_seqs(seqs, args) -> None:
    if args.output:
        seqio.write_sequences(args.output, seqs, fmt=args.format)
    elif args.format == seqio.BINARY_FORMAT:
        sys.stdout.buffer.write(seqio.dumps_binary(seqs))
    else:
        sys.stdout.write(seqio.dumps_text(seqs))


def cmd_decode(args) -> None:
    book = load_codebook(args.codebook)
    seqs = seqio.read_sequences(args.input, fmt=args.format)
    lines = [",".join(["index", "message"] + [f"score_{m}" for m in range(len(book))])]
    for i, x in enumerate(seqs):
        if len(x) == 0:
            print(f"sequence {i} is empty; not decoded", file=sys.stderr)
            lines.append(",".join([str(i), "-1"] + [""] * len(book)))
            continue
        res = decode(book, x)
        lines.append(",".join([str(i), str(res.message)] + [repr(float(s)) for s in res.scores]))
    _emit("\n".join(lines) + "\n", args.output)


def cmd_detect(args) -> None:
    book = load_codebook(args.codebook)
    seqs = seqio.read_sequences(args.input, fmt=args.format)
    params = DetectionParams(args.delta, args.eta, args.epsilon, args.mode)
    verdict = detect(book, seqs, params)
    lines = [
        "tampered,vote_fraction,sequences,excluded",
        f"{int(verdict.tampered)},{verdict.vote_fraction!r},{len(seqs)},{len(verdict.excluded)}",
        "",
        "index,decoded,excess,voted",
    ]
    kept = [i for i in range(len(seqs)) if i not in set(verdict.excluded)]
    for i, (d, e, v) in zip(kept, verdict.per_sequence):
        lines.append(f"{i},{d},{e!r},{int(v)}")
    _emit("\n".join(lines) + "\n", args.output)


def cmd_info(args) -> None:
    _emit(info(args.path, args.delta), args.output)


def cmd_exp_decode(args) -> None:
    data = _read_json(args.config) if args.config else {}
    cfg = DecodingExperimentConfig.from_dict(
        data,
        codebook=args.codebook,
        delta=args.delta,
        lengths=args.lengths,
        trials=args.trials,
        reruns=args.reruns,
        seed=args.seed,
        observed_length=False if args.fixed_input else None,
        resample_codebook=True if args.resample_codebook else None,
    )
    _emit(run_decoding_experiment(cfg).to_csv(), args.output)


def cmd_exp_tamper(args) -> None:
    data = _read_json(args.config) if args.config else {}
    cfg = TamperExperimentConfig.from_dict(
        data,
        codebook=args.codebook,
        delta=args.delta,
        delta_tampered=args.delta_tampered,
        eta=args.eta,
        epsilons=args.epsilons,
        k=args.k,
        test_sets=args.test_sets,
        assignment_seed=args.assignment_seed,
        lengths=args.lengths,
        seed=args.seed,
        mode=args.mode,
        observed_length=False if args.fixed_input else None,
    )
    _emit(run_tamper_experiment(cfg).to_csv(), args.output)


def cmd_scan(args) -> None:
    _emit(run_param_scan(args.deltas, args.step).to_csv(), args.output)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfsa-delchan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def seq_opts(sp, with_input=True):
        if with_input:
            sp.add_argument("input", help="sequence file or directory of sequence files")
        sp.add_argument("--format", choices=[seqio.TEXT, seqio.BINARY_FORMAT], default=seqio.TEXT)

    d = sub.add_parser("design", help="design an M2 codebook")
    d.add_argument("--messages", type=int, default=10)
    d.add_argument("--sigma", type=float, default=0.01)
    d.add_argument("--margin", type=float, default=0.2)
    d.add_argument("--bounds", type=float, nargs=2, default=(0.05, 0.95), metavar=("LO", "HI"))
    d.add_argument("--max-iters", type=int, default=1000)
    d.add_argument("--restarts", type=int, default=1)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--delta", type=float, default=0.2, help="design deletion probability")
    d.set_defaults(func=cmd_design)

    e = sub.add_parser("encode", help="generate channel inputs for a message")
    e.add_argument("--codebook", required=True)
    e.add_argument("--message", type=int, required=True)
    e.add_argument("--length", type=int, required=True)
    e.add_argument("--count", type=int, default=1)
    e.add_argument("--seed", type=int, default=0)
    seq_opts(e, with_input=False)
    e.set_defaults(func=cmd_encode)

    c = sub.add_parser("channel", help="pass sequences through the deletion channel")
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--seed", type=int, default=0)
    seq_opts(c)
    c.set_defaults(func=cmd_channel)

    dc = sub.add_parser("decode", help="maximum-likelihood decoding")
    dc.add_argument("--codebook", required=True)
    seq_opts(dc)
    dc.set_defaults(func=cmd_decode)

    t = sub.add_parser("detect", help="tamper detection over a batch of sequences")
    t.add_argument("--codebook", required=True)
    t.add_argument("--delta", type=float, required=True)
    t.add_argument("--eta", type=float, default=0.1)
    t.add_argument("--epsilon", type=float, default=0.15)
    t.add_argument("--mode", choices=[NORMALIZED, STRICT_PAPER], default=NORMALIZED)
    seq_opts(t)
    t.set_defaults(func=cmd_detect)

    i = sub.add_parser("info", help="entropy, stationary distribution and KL report")
    i.add_argument("path")
    i.add_argument("--delta", type=float, default=0.0)
    i.set_defaults(func=cmd_info)

    xd = sub.add_parser("exp-decode", help="decoding error experiment (CSV)")
    xd.add_argument("--config")
    xd.add_argument("--codebook")
    xd.add_argument("--delta", type=float)
    xd.add_argument("--lengths", type=_ints, help="comma list or start:stop:step")
    xd.add_argument("--trials", type=int)
    xd.add_argument("--reruns", type=int)
    xd.add_argument("--seed", type=int)
    xd.add_argument("--fixed-input", action="store_true", help="fix channel-input length instead of observed length")
    xd.add_argument("--resample-codebook", action="store_true")
    xd.set_defaults(func=cmd_exp_decode)

    xt = sub.add_parser("exp-tamper", help="tamper detection experiment (CSV)")
    xt.add_argument("--config")
    xt.add_argument("--codebook")
    xt.add_argument("--delta", type=float)
    xt.add_argument("--delta-tampered", type=float)
    xt.add_argument("--eta", type=float)
    xt.add_argument("--epsilons", type=_floats)
    xt.add_argument("--k", type=int)
    xt.add_argument("--test-sets", type=int)
    xt.add_argument("--assignment-seed", type=int)
    xt.add_argument("--lengths", type=_ints)
    xt.add_argument("--seed", type=int)
    xt.add_argument("--mode", choices=[NORMALIZED, STRICT_PAPER])
    xt.add_argument("--fixed-input", action="store_true")
    xt.set_defaults(func=cmd_exp_tamper)

    s = sub.add_parser("scan", help="M2 parameter-space scan (CSV)")
    s.add_argument("--deltas", type=_floats, default=(0.0, 0.25, 0.5, 0.75))
    s.add_argument("--step", type=float, default=0.01)
    s.set_defaults(func=cmd_scan)

    for sp in (d, e, c, dc, t, i, xd, xt, s):
        sp.add_argument("-o", "--output", help="output file (default: stdout)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (PfsaError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
