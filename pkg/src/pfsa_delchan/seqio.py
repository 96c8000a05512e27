"""Reading and writing symbol sequences.

Text files hold one sequence per line.  With single-character labels a line
is the bare string (``0110``); longer labels are separated by whitespace.
An empty line is an empty sequence.

Binary files are a series of records: a little-endian ``uint32`` length
followed by that many ``uint8`` symbol indices.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .pfsa import BINARY, Alphabet, PfsaError

TEXT = "text"
BINARY_FORMAT = "binary"


def format_sequence(seq, alphabet: Alphabet = BINARY) -> str:
    labels = alphabet.decode(seq)
    sep = "" if all(len(str(s)) == 1 for s in alphabet.symbols) else " "
    return sep.join(str(s) for s in labels)


def parse_sequence(line: str, alphabet: Alphabet = BINARY, where: str = "") -> np.ndarray:
    tokens = line.split() if any(c.isspace() for c in line.strip()) else list(line.strip())
    try:
        return alphabet.encode(tokens)
    except PfsaError as exc:
        raise PfsaError(f"{where}{exc}") from None


def dumps_text(seqs, alphabet: Alphabet = BINARY) -> str:
    return "".join(format_sequence(s, alphabet) + "\n" for s in seqs)


def loads_text(text: str, alphabet: Alphabet = BINARY, name: str = "<string>") -> list[np.ndarray]:
    return [parse_sequence(line, alphabet, f"{name}:{i + 1}: ") for i, line in enumerate(text.splitlines())]


def dumps_binary(seqs) -> bytes:
    out = bytearray()
    for s in seqs:
        s = np.asarray(s)
        if len(s) and (s.min() < 0 or s.max() > 255):
            raise PfsaError("binary format stores symbol indices 0..255 only")
        out += struct.pack("<I", len(s))
        out += s.astype(np.uint8).tobytes()
    return bytes(out)


def loads_binary(data: bytes, name: str = "<bytes>") -> list[np.ndarray]:
    seqs = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise PfsaError(f"{name}: truncated length header at byte {pos}")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + n > len(data):
            raise PfsaError(f"{name}: record at byte {pos - 4} claims {n} symbols, file ends early")
        seqs.append(np.frombuffer(data, dtype=np.uint8, count=n, offset=pos).astype(np.int64))
        pos += n
    return seqs


def read_sequences(path, alphabet: Alphabet = BINARY, fmt: str = TEXT) -> list[np.ndarray]:
    """Read one file, or every regular file of a directory in name order."""
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.is_file()) if path.is_dir() else [path]
    seqs: list[np.ndarray] = []
    for f in files:
        if fmt == BINARY_FORMAT:
            seqs.extend(loads_binary(f.read_bytes(), str(f)))
        else:
            seqs.extend(loads_text(f.read_text(encoding="utf-8"), alphabet, str(f)))
    return seqs


def write_sequences(path, seqs, alphabet: Alphabet = BINARY, fmt: str = TEXT) -> None:
    path = Path(path)
    if fmt == BINARY_FORMAT:
        path.write_bytes(dumps_binary(seqs))
    else:
        path.write_text(dumps_text(seqs, alphabet), encoding="utf-8")
