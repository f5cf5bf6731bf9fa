"""Random k-SAT formulas, assignments and satisfaction predicates.

Assignments are ``int8`` arrays over the symbols ``T = 1``, ``F = -1`` and
``ERR = 0``.  A literal is stored as the integer ``2 * var + positive`` so
literal ids lie in ``[0, 2n)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import NamedTuple

import numpy as np

from . import rng as _rng

T = np.int8(1)
F = np.int8(-1)
ERR = np.int8(0)

STRICT_FLOAT_TOL = 1e-9
DEFAULT_REPAIR_BUDGET = 10**6


def literal(var: int, positive: bool) -> int:
    return 2 * int(var) + int(bool(positive))


def lit_var(lit):
    return lit >> 1


def lit_positive(lit):
    return (lit & 1) == 1


@dataclass(frozen=True, eq=False)
class Formula:
    """An m x k table of literal ids over n variables."""

    n: int
    lits: np.ndarray
    lineage: int | None = field(default=None)

    def __post_init__(self):
        lits = np.array(self.lits, dtype=np.int64, copy=True)
        if lits.ndim != 2:
            if lits.size == 0:
                lits = lits.reshape(0, 0)
            else:
                raise ValueError("literal table must be two-dimensional")
        if self.n < 1:
            raise ValueError("n must be positive")
        if lits.size and (lits.min() < 0 or lits.max() >= 2 * self.n):
            raise ValueError("literal id out of range")
        lits.setflags(write=False)
        object.__setattr__(self, "lits", lits)

    @property
    def m(self) -> int:
        return self.lits.shape[0]

    @property
    def k(self) -> int:
        return self.lits.shape[1]

    @property
    def variables(self) -> np.ndarray:
        return self.lits >> 1

    @property
    def positive(self) -> np.ndarray:
        return (self.lits & 1).astype(bool)

    def __eq__(self, other):
        return (
            isinstance(other, Formula)
            and self.n == other.n
            and self.lits.shape == other.lits.shape
            and np.array_equal(self.lits, other.lits)
        )

    def __hash__(self):
        return hash((self.n, self.lits.shape, self.lits.tobytes()))

    def with_lits(self, lits) -> "Formula":
        return Formula(self.n, lits, self.lineage)


def sample_formula(n: int, m: int, k: int, seed) -> Formula:
    """Draw every one of the m*k slots uniformly from the 2n literals."""
    if n < 1 or m < 0 or k < 1:
        raise ValueError(f"invalid dimensions n={n} m={m} k={k}")
    g = _rng.generator(seed)
    lits = g.integers(0, 2 * n, size=(m, k), dtype=np.int64)
    lin = None if isinstance(seed, np.random.Generator) else _rng.lineage(seed)
    return Formula(n, lits, lin)


def as_assignment(x, n: int | None = None) -> np.ndarray:
    a = np.asarray(x, dtype=np.int8)
    if a.ndim != 1:
        raise ValueError("assignment must be one-dimensional")
    if n is not None and a.size != n:
        raise ValueError(f"assignment length {a.size} != n={n}")
    if not np.isin(a, (T, F, ERR)).all():
        raise ValueError("assignment symbols must be T=1, F=-1 or err=0")
    return a


def _nan_guard(arr: np.ndarray) -> np.ndarray:
    bad = np.isnan(arr)
    if bad.any():
        warnings.warn(f"{int(bad.sum())} NaN output(s) rounded to err", RuntimeWarning, stacklevel=3)
    return bad


def round_output(x):
    """x >= 1 -> T, x <= -1 -> F, otherwise err."""
    arr = np.asarray(x, dtype=float)
    _nan_guard(arr)
    out = np.where(arr >= 1, T, np.where(arr <= -1, F, ERR)).astype(np.int8)
    return out if out.ndim else np.int8(out)


def strict_round(x, tol: float | None = None):
    """Exactly +1 -> T, exactly -1 -> F, otherwise err.

    Integer inputs compare exactly; floats use ``STRICT_FLOAT_TOL`` unless
    ``tol`` is given.
    """
    raw = np.asarray(x)
    if tol is None:
        tol = 0.0 if np.issubdtype(raw.dtype, np.integer) else STRICT_FLOAT_TOL
    arr = raw.astype(float)
    _nan_guard(arr)
    with np.errstate(invalid="ignore"):
        out = np.where(np.abs(arr - 1) <= tol, T, np.where(np.abs(arr + 1) <= tol, F, ERR)).astype(np.int8)
    return out if out.ndim else np.int8(out)


def _want(phi: Formula) -> np.ndarray:
    return np.where(phi.positive, T, F).astype(np.int8)


def clause_satisfied(x, phi: Formula) -> np.ndarray:
    x = np.asarray(x, dtype=np.int8)
    if phi.m == 0:
        return np.zeros(0, bool)
    return (x[phi.variables] == _want(phi)).any(axis=1)


def count_satisfied(x, phi: Formula) -> int:
    return int(clause_satisfied(x, phi).sum())


def _count_many(Y: np.ndarray, phi: Formula) -> np.ndarray:
    if phi.m == 0:
        return np.zeros(Y.shape[0], np.int64)
    hit = Y[:, phi.variables] == _want(phi)
    return hit.any(axis=2).sum(axis=1)


def _threshold(m: int, nu: float) -> float:
    return (1.0 - nu) * m - 1e-9


def nu_satisfies(x, phi: Formula, nu: float) -> bool:
    x = as_assignment(x, phi.n)
    if (x == ERR).any():
        raise ValueError("nu_satisfies needs an err-free assignment")
    if not 0 <= nu <= 1:
        raise ValueError("nu must lie in [0, 1]")
    return count_satisfied(x, phi) >= _threshold(phi.m, nu)


def hamming_delta(x, y) -> float:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError("assignments differ in length")
    if x.size == 0:
        return 0.0
    return float(np.count_nonzero(x != y)) / x.size


class Repair(NamedTuple):
    """Best repair found within Hamming radius eta."""

    value: int
    witness: np.ndarray | None
    exact: bool


class Decision(NamedTuple):
    satisfied: bool | None  # None: budget exceeded and greedy repair failed
    witness: np.ndarray | None
    exact: bool


def flip_budget(n: int, eta: float) -> int:
    return int(math.floor(eta * n + 1e-9))


def repair_candidates(n: int, n_err: int, eta: float) -> int:
    free = flip_budget(n, eta) - n_err
    if free < 0:
        return 0
    return (2**n_err) * sum(math.comb(n - n_err, j) for j in range(min(free, n - n_err) + 1))


def _exhaustive(x, phi, eta, chunk=4096):
    n = phi.n
    err_pos = np.flatnonzero(x == ERR)
    rest = np.flatnonzero(x != ERR)
    free = flip_budget(n, eta) - err_pos.size
    best, best_y = -1, None

    def flush(rows):
        nonlocal best, best_y
        Y = np.array(rows, dtype=np.int8)
        c = _count_many(Y, phi)
        i = int(np.argmax(c))
        if c[i] > best:
            best, best_y = int(c[i]), Y[i].copy()

    rows = []
    for fill in product((T, F), repeat=err_pos.size):
        base = x.copy()
        base[err_pos] = fill
        for j in range(min(free, rest.size) + 1):
            for flips in combinations(rest, j):
                y = base.copy()
                if flips:
                    idx = list(flips)
                    y[idx] = -y[idx]
                rows.append(y)
                if len(rows) >= chunk:
                    flush(rows)
                    rows = []
    if rows:
        flush(rows)
    return best, best_y


def _greedy(x, phi, eta):
    y = x.copy()
    err_pos = np.flatnonzero(y == ERR)
    y[err_pos] = T
    for i in err_pos:
        y[i] = T
        a = count_satisfied(y, phi)
        y[i] = F
        if count_satisfied(y, phi) < a:
            y[i] = T
    left = flip_budget(phi.n, eta) - err_pos.size
    cur = count_satisfied(y, phi)
    flipped = np.zeros(phi.n, bool)
    flipped[err_pos] = True
    while left > 0:
        cand = np.flatnonzero(~flipped)
        if cand.size == 0:
            break
        Y = np.repeat(y[None, :], cand.size, axis=0)
        Y[np.arange(cand.size), cand] *= -1
        c = _count_many(Y, phi)
        j = int(np.argmax(c))
        if c[j] <= cur:
            break
        y = Y[j]
        cur = int(c[j])
        flipped[cand[j]] = True
        left -= 1
    return cur, y


def best_repair(x, phi: Formula, eta: float, budget: int = DEFAULT_REPAIR_BUDGET) -> Repair:
    """Maximise satisfied clauses over y in {T,F}^n with Delta(x, y) <= eta."""
    x = as_assignment(x, phi.n)
    n_err = int((x == ERR).sum())
    if n_err > flip_budget(phi.n, eta):
        return Repair(0, None, True)
    if repair_candidates(phi.n, n_err, eta) <= budget:
        v, y = _exhaustive(x, phi, eta)
        return Repair(v, y, True)
    v, y = _greedy(x, phi, eta)
    return Repair(v, y, False)


def eta_nu_satisfies(x, phi: Formula, eta: float, nu: float, budget: int = DEFAULT_REPAIR_BUDGET) -> Decision:
    if not (0 <= eta <= 1 and 0 <= nu <= 1):
        raise ValueError("eta and nu must lie in [0, 1]")
    x = as_assignment(x, phi.n)
    if not (x == ERR).any() and count_satisfied(x, phi) >= _threshold(phi.m, nu):
        return Decision(True, x.copy(), True)
    rep = best_repair(x, phi, eta, budget)
    if rep.witness is None:
        return Decision(False, None, True)
    if rep.value >= _threshold(phi.m, nu):
        return Decision(True, rep.witness, rep.exact)
    return Decision(False if rep.exact else None, None, rep.exact)


def encode_one_hot(phi: Formula) -> np.ndarray:
    """Indicator vector of length m*k*2n indexed by (clause, slot, literal)."""
    n2 = 2 * phi.n
    out = np.zeros(phi.m * phi.k * n2, dtype=np.uint8)
    base = np.arange(phi.m * phi.k, dtype=np.int64) * n2
    out[base + phi.lits.ravel()] = 1
    return out


def decode_one_hot(vec, n: int, m: int, k: int) -> Formula:
    v = np.asarray(vec)
    if v.size != m * k * 2 * n:
        raise ValueError("one-hot vector has the wrong length")
    table = v.reshape(m * k, 2 * n)
    if not np.isin(table, (0, 1)).all() or not (table.sum(axis=1) == 1).all():
        raise ValueError("each (clause, slot) must carry exactly one set bit")
    return Formula(n, table.argmax(axis=1).reshape(m, k))
