"""DIMACS CNF and the native ``KSAT1`` binary format."""
from __future__ import annotations

import struct
import warnings
from pathlib import Path

import numpy as np

from .ksat import Formula

MAGIC = b"KSAT1"
_HEADER = struct.Struct("<5sIIIQ")


class FormatError(ValueError):
    pass


def _dimacs_row(row, allow_dups: bool) -> list[int]:
    out = [int((lit >> 1) + 1) * (1 if lit & 1 else -1) for lit in row]
    if allow_dups:
        return out
    seen: list[int] = []
    for v in out:
        if v not in seen:
            seen.append(v)
    return seen


def to_dimacs(phi: Formula, allow_dups: bool = False) -> str:
    lines = [f"p cnf {phi.n} {phi.m}"]
    dropped = 0
    for row in phi.lits:
        clause = _dimacs_row(row, allow_dups)
        dropped += len(row) - len(clause)
        lines.append(" ".join(map(str, clause)) + " 0")
    if dropped:
        warnings.warn(f"removed {dropped} repeated literal(s); pass allow_dups to keep them", stacklevel=2)
    return "\n".join(lines) + "\n"


def from_dimacs(text: str, strict: bool = False) -> Formula:
    """Parse DIMACS CNF.  Every clause must have the same width."""
    n = m = None
    tokens: list[int] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise FormatError(f"bad problem line: {raw!r}")
            n, m = int(parts[2]), int(parts[3])
            continue
        tokens.extend(int(t) for t in line.split())
    if n is None:
        raise FormatError("missing 'p cnf' line")
    clauses, cur = [], []
    for t in tokens:
        if t == 0:
            clauses.append(cur)
            cur = []
        else:
            cur.append(t)
    if cur:
        clauses.append(cur)
    if len(clauses) != m:
        raise FormatError(f"header says {m} clauses, found {len(clauses)}")
    widths = {len(c) for c in clauses}
    if len(widths) > 1:
        raise FormatError(f"mixed clause widths {sorted(widths)}")
    k = widths.pop() if widths else 0
    lits = np.zeros((m, k), dtype=np.int64)
    for i, c in enumerate(clauses):
        for j, t in enumerate(c):
            v = abs(t) - 1
            if v >= n:
                raise FormatError(f"variable {abs(t)} exceeds n={n}")
            lits[i, j] = 2 * v + (t > 0)
        if strict and any(-t in c for t in c):
            raise FormatError(f"clause {i + 1} is tautological")
    return Formula(n, lits)


def write_dimacs(phi: Formula, path, allow_dups: bool = False) -> None:
    Path(path).write_text(to_dimacs(phi, allow_dups))


def read_dimacs(path, strict: bool = False) -> Formula:
    return from_dimacs(Path(path).read_text(), strict)


def to_binary(phi: Formula) -> bytes:
    lineage = phi.lineage or 0
    head = _HEADER.pack(MAGIC, phi.n, phi.m, phi.k, lineage)
    return head + phi.lits.astype("<u4").tobytes()


def from_binary(blob: bytes) -> Formula:
    if len(blob) < _HEADER.size:
        raise FormatError("truncated header")
    magic, n, m, k, lineage = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError("bad magic")
    body = np.frombuffer(blob, dtype="<u4", offset=_HEADER.size)
    if body.size != m * k:
        raise FormatError(f"expected {m * k} literals, found {body.size}")
    return Formula(n, body.astype(np.int64).reshape(m, k), lineage)


def write_binary(phi: Formula, path) -> None:
    Path(path).write_bytes(to_binary(phi))


def read_binary(path) -> Formula:
    return from_binary(Path(path).read_bytes())
