"""Overlap profiles, their entropies, the multi-assignment energy and the
greedy scan for forbidden tuples along a sequence of outputs.

A coordinate i of assignments y^0..y^{l-1} is summarised by the bitmask of
the indices t with y^t_i == y^0_i, so bit 0 is always set and the mask names
the side of the bipartition that contains index 0.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng as _rng
from .ksat import ERR, F, T, nu_satisfies

MAX_L = 62
DEFAULT_ENERGY_BUDGET = 1 << 22


class EnergyBudgetExceeded(RuntimeError):
    pass


def _stack(ys) -> np.ndarray:
    try:
        arr = np.asarray([np.asarray(y, dtype=np.int8) for y in ys])
    except ValueError:
        raise ValueError("assignments must have equal lengths") from None
    if arr.ndim != 2:
        raise ValueError("assignments must have equal lengths")
    if arr.shape[0] == 0:
        raise ValueError("need at least one assignment")
    if arr.shape[0] > MAX_L:
        raise ValueError(f"at most {MAX_L} assignments supported")
    if (arr == ERR).any():
        raise ValueError("assignments contain err symbols")
    if not np.isin(arr, (T, F)).all():
        raise ValueError("assignments must use T/F symbols")
    return arr


def _masks(arr: np.ndarray) -> np.ndarray:
    same = arr == arr[0]
    weights = np.left_shift(np.int64(1), np.arange(arr.shape[0], dtype=np.int64))
    return same.astype(np.int64).T @ weights


@dataclass(frozen=True)
class OverlapProfile:
    l: int
    n: int
    counts: dict = field(hash=False)   # mask -> number of coordinates

    def __eq__(self, other):
        return isinstance(other, OverlapProfile) and (self.l, self.n, self.counts) == (other.l, other.n, other.counts)

    def fractions(self) -> dict:
        return {m: Fraction(c, self.n) for m, c in self.counts.items()}

    def probabilities(self) -> tuple[np.ndarray, np.ndarray]:
        masks = np.array(sorted(self.counts), dtype=np.int64)
        p = np.array([self.counts[m] for m in masks.tolist()], dtype=float) / self.n
        return masks, p

    def to_json(self) -> str:
        entries = [{"mask": int(m), "num": int(c)} for m, c in sorted(self.counts.items())]
        return json.dumps({"l": self.l, "n": self.n, "entries": entries})

    @classmethod
    def from_json(cls, text: str) -> "OverlapProfile":
        d = json.loads(text)
        counts = {int(e["mask"]): int(e["num"]) for e in d["entries"]}
        if sum(counts.values()) != d["n"] or any(c < 0 for c in counts.values()):
            raise ValueError("profile counts must be non-negative and sum to n")
        if any(not (m & 1) or m >> d["l"] for m in counts):
            raise ValueError("profile masks must contain index 0 and fit in l bits")
        return cls(int(d["l"]), int(d["n"]), {m: c for m, c in counts.items() if c})


def profile(ys) -> OverlapProfile:
    arr = _stack(ys)
    masks, counts = np.unique(_masks(arr), return_counts=True)
    return OverlapProfile(arr.shape[0], arr.shape[1], dict(zip(masks.tolist(), counts.tolist())))


def _entropy_counts(counts, n) -> float:
    c = np.asarray(counts, dtype=float)
    c = c[c > 0]
    # n log n - sum c log c, divided by n
    # fsum is correctly rounded, so the value does not depend on mask order
    return float((n * math.log(n) - math.fsum((c * np.log(c)).tolist())) / n) if c.size else 0.0


def entropy(prof: OverlapProfile) -> float:
    if len(prof.counts) <= 1:
        return 0.0
    return max(_entropy_counts(list(prof.counts.values()), prof.n), 0.0)


def conditional_profile(prof: OverlapProfile) -> dict:
    """prefix mask over indices 0..l-2 -> (P[last joins the 0-side], P[it does not])."""
    if prof.l < 2:
        raise ValueError("need at least two assignments")
    top = 1 << (prof.l - 1)
    acc: dict[int, list[int]] = {}
    for m, c in prof.counts.items():
        acc.setdefault(m & (top - 1), [0, 0])[0 if m & top else 1] += c
    return {key: (Fraction(a, a + b), Fraction(b, a + b)) for key, (a, b) in acc.items()}


def _conditional_from_prefix(prefix: np.ndarray, bit: np.ndarray, n: int) -> float:
    key = prefix * 2 + bit
    _, joint = np.unique(key, return_counts=True)
    _, marg = np.unique(prefix, return_counts=True)
    # H(joint) - H(prefix); the n log n terms cancel
    cl = lambda c: float(np.sum(c * np.log(c)))
    return max((cl(marg.astype(float)) - cl(joint.astype(float))) / n, 0.0)


def conditional_entropy(x, ys) -> float:
    """Entropy of x's overlap pattern given y^0..y^{l-2}."""
    arr = _stack(list(ys) + [x])
    n = arr.shape[1]
    prefix = _masks(arr[:-1])
    bit = (arr[-1] == arr[0]).astype(np.int64)
    return _conditional_from_prefix(prefix, bit, n)


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -(p * math.log(p) + (1 - p) * math.log1p(-p))


@dataclass(frozen=True)
class GapCheck:
    lhs: float
    rhs: float
    holds: bool | None
    applicable: bool


def hamming_entropy_gap_check(x, x2, ys, tol: float = 1e-12) -> GapCheck:
    a, b = np.asarray(x), np.asarray(x2)
    if a.shape != b.shape:
        raise ValueError("x and x' must have equal lengths")
    delta = float(np.mean(a != b)) if a.size else 0.0
    lhs = abs(conditional_entropy(a, ys) - conditional_entropy(b, ys))
    rhs = binary_entropy(delta)
    if delta > 0.5:
        return GapCheck(lhs, rhs, None, False)
    return GapCheck(lhs, rhs, lhs <= rhs + tol, True)


# ------------------------------------------------------------------ energy


def _as_profile(obj) -> OverlapProfile:
    return obj if isinstance(obj, OverlapProfile) else profile(obj)


def _energy_columns(prof: OverlapProfile, budget: int) -> float:
    masks, w = prof.probabilities()
    k, c = prof.l - 1, masks.size
    if k == 0:
        return 1.0
    if c ** k > budget:
        raise EnergyBudgetExceeded(f"{c}^{k} column-type tuples exceed the budget {budget}")
    total = 0.0
    idx = np.arange(prof.l)
    chunk = max(1, min(c ** k, 1 << 16))
    for start in range(0, c ** k, chunk):
        flat = np.arange(start, min(start + chunk, c ** k))
        digits = np.stack([(flat // c ** r) % c for r in range(k)], axis=1)  # (M, k)
        weight = np.prod(w[digits], axis=1)
        # code of assignment t: its bits across the k sampled columns
        bits = (masks[digits][:, :, None] >> idx[None, None, :]) & 1   # (M, k, l)
        codes = np.sum(bits << np.arange(k)[None, :, None], axis=1)    # (M, l)
        codes.sort(axis=1)
        distinct = 1 + np.count_nonzero(np.diff(codes, axis=1), axis=1)
        total += float(np.dot(weight, distinct))
    return total


def _agree(masks: np.ndarray, w: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """Fraction of coordinates where every index of each subset agrees."""
    inside = (masks[None, :] & subsets[:, None]) == subsets[:, None]
    outside = (masks[None, :] & subsets[:, None]) == 0
    return (inside | outside) @ w


def _energy_inclusion_exclusion(prof: OverlapProfile, budget: int) -> float:
    l, k = prof.l, prof.l - 1
    if (1 << l) * len(prof.counts) > budget:
        raise EnergyBudgetExceeded(f"2^{l} subsets exceed the budget {budget}")
    masks, w = prof.probabilities()
    subsets = np.arange(1, 1 << l, dtype=np.int64)
    sizes = np.array([bin(s).count("1") for s in subsets.tolist()])
    signs = np.where(sizes % 2 == 1, 1.0, -1.0)
    return float(np.dot(signs, _agree(masks, w, subsets) ** k))


def energy_monte_carlo(ys_or_profile, samples: int = 10_000, seed=0, batch: int = 50_000) -> tuple[float, float]:
    prof = _as_profile(ys_or_profile)
    masks, w = prof.probabilities()
    k, l = prof.l - 1, prof.l
    if k == 0:
        return 1.0, 0.0
    idx = np.arange(l)
    vals = []
    nb = -(-samples // batch)
    for i, ss in enumerate(_rng.spawn(seed, nb)):
        g = np.random.default_rng(ss)
        size = min(batch, samples - i * batch)
        pick = masks[g.choice(masks.size, size=(size, k), p=w)]
        bits = (pick[:, :, None] >> idx[None, None, :]) & 1
        codes = np.sum(bits << np.arange(k)[None, :, None], axis=1)
        codes.sort(axis=1)
        vals.append(1 + np.count_nonzero(np.diff(codes, axis=1), axis=1))
    v = np.concatenate(vals).astype(float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def profile_energy(prof: OverlapProfile, k: int | None = None, mode: str = "auto",
                   budget: int = DEFAULT_ENERGY_BUDGET, samples: int = 100_000, seed=0) -> float:
    """Expected number of distinct strings y^t[I], I uniform in [n]^k, k = l - 1."""
    if k is not None and k != prof.l - 1:
        raise ValueError(f"profile has {prof.l} assignments, expected k + 1 = {k + 1}")
    if mode == "columns":
        return _energy_columns(prof, budget)
    if mode == "inclusion-exclusion":
        return _energy_inclusion_exclusion(prof, budget)
    if mode == "monte-carlo":
        return energy_monte_carlo(prof, samples, seed)[0]
    if mode != "auto":
        raise ValueError(f"unknown energy mode {mode!r}")
    for fn in (_energy_inclusion_exclusion, _energy_columns):
        try:
            return fn(prof, budget)
        except EnergyBudgetExceeded:
            pass
    return energy_monte_carlo(prof, samples, seed)[0]


def energy(ys, mode: str = "auto", **kw) -> float:
    return profile_energy(_as_profile(ys), mode=mode, **kw)


def energy_lower_bound(betas) -> float:
    b = np.asarray(betas, dtype=float)
    if (b <= 1).any():
        raise ValueError("every beta must exceed 1")
    return float(np.sum(1 - b * np.exp(-(b - 1))))


# ------------------------------------------------------------------ decoupling


def _sigmas(k):
    return list(itertools.product((T, F), repeat=k))


def p_sigma(ys, l: int) -> dict:
    """P_I[sigma is among y^0[I]..y^l[I]] for every sigma in {T,F}^k, k = len(ys) - 1."""
    arr = _stack(ys)
    k = arr.shape[0] - 1
    sub = arr[: l + 1]
    subsets = range(1, 1 << (l + 1))
    out = {}
    # a_A(b): fraction of coordinates where every assignment in A equals b
    fr = {}
    for A in subsets:
        rows = sub[[t for t in range(l + 1) if A >> t & 1]]
        fr[A] = (float(np.mean((rows == T).all(axis=0))), float(np.mean((rows == F).all(axis=0))))
    for sigma in _sigmas(k):
        nt = sum(1 for s in sigma if s == T)
        tot = 0.0
        for A, (at, af) in fr.items():
            sign = 1.0 if bin(A).count("1") % 2 else -1.0
            tot += sign * at ** nt * af ** (k - nt)
        out[sigma] = tot
    return out


@dataclass
class DecouplingReport:
    k: int
    p: dict            # sigma -> [p_0 .. p_k]
    q: dict            # sigma -> [q_1 .. q_k]
    aux_ok: bool
    sum_ok: bool
    degenerate: bool
    worst_aux: float   # min over (sigma, l) of p_l - (1 - 1/(k log k)) p_{l-1} - q_l
    worst_sum: float

    @property
    def ok(self) -> bool:
        return self.aux_ok and self.sum_ok


def decoupling_check(ys, budget: int = DEFAULT_ENERGY_BUDGET, tol: float = 1e-12) -> DecouplingReport:
    """Exact p_l(sigma) and truncated q_l(sigma) on XOR-normalised assignments
    (y^0 mapped to all-T), and both peeling inequalities per sigma."""
    arr = _stack(ys)
    k = arr.shape[0] - 1
    if k < 2:
        raise ValueError("need k >= 2")
    z = np.where(arr == arr[0], T, F).astype(np.int8)
    thr = 1.0 / (k * math.log(k))
    sig = _sigmas(k)
    p = {s: [] for s in sig}
    for l in range(k + 1):
        for s, v in p_sigma(z, l).items():
            p[s].append(v)

    q = {s: [] for s in sig}
    n = z.shape[1]
    for l in range(1, k + 1):
        prefix = _masks(np.vstack([z[:1], z[1:l]])) if l > 1 else np.zeros(n, np.int64)
        keys, inv = np.unique(prefix, return_inverse=True)
        c = keys.size
        if c ** k * 2 ** k > budget:
            raise EnergyBudgetExceeded(f"{c}^{k} prefix tuples exceed the budget {budget}")
        w = np.bincount(inv, minlength=c) / n
        phiT = np.bincount(inv, weights=(z[l] == T), minlength=c) / np.bincount(inv, minlength=c)
        phi = np.stack([phiT, 1 - phiT], axis=1)     # column 0: T, column 1: F
        tuples = np.array(list(itertools.product(range(c), repeat=k)), dtype=np.int64).reshape(-1, k)
        tw = np.prod(w[tuples], axis=1)
        for s in sig:
            col = np.array([0 if b == T else 1 for b in s])
            prod = np.prod(phi[tuples, col[None, :]], axis=1)
            q[s].append(float(np.sum(tw * np.where(prod <= thr, prod, 0.0))))

    worst_aux = min(p[s][l] - (1 - thr) * p[s][l - 1] - q[s][l - 1] for s in sig for l in range(1, k + 1))
    worst_sum = min(p[s][k] - (1 - 1 / math.log(k)) * sum(q[s]) for s in sig)
    return DecouplingReport(k, p, q, worst_aux >= -tol, worst_sum >= -tol, k <= 3, worst_aux, worst_sum)


# ------------------------------------------------------------------ scanner


@dataclass(frozen=True)
class OgpBandSpec:
    beta_minus: float
    beta_plus: float
    k: int

    def __post_init__(self):
        if not 1 < self.beta_minus < self.beta_plus:
            raise ValueError("band needs 1 < beta_minus < beta_plus")
        if self.k < 2:
            raise ValueError("band needs k >= 2")

    @property
    def lo(self) -> float:
        return self.beta_minus * math.log(self.k) / self.k

    @property
    def hi(self) -> float:
        return self.beta_plus * math.log(self.k) / self.k

    def contains(self, h: float) -> bool:
        return self.lo <= h <= self.hi

    @classmethod
    def from_kappa(cls, kappa: float, k: int) -> "OgpBandSpec":
        from .constants import solve_kappa

        sol = solve_kappa(kappa)
        return cls(sol.beta_minus, sol.beta_plus, k)


@dataclass
class ScanResult:
    found: bool
    ts: list                  # t_0 .. t_j found so far (t_0 = 0)
    entropies: list           # conditional entropy at t_1 .. t_j
    trace: list               # per level: conditional entropies of every t scanned
    ogp_a: list | None = None # nu-satisfaction of each witness against its formula
    sequence: str = "outputs"

    def __bool__(self):
        return self.found


def _scan(base, candidates, band: OgpBandSpec, k: int):
    """Shared greedy loop; ``candidates(level, last_t)`` yields (t, output)."""
    arr0 = np.asarray(base, dtype=np.int8)
    n = arr0.size
    prefix = np.ones(n, dtype=np.int64)
    ts, ents, trace = [0], [], []
    for level in range(1, min(k, MAX_L - 1) + 1):
        seen = []
        hit = None
        for t, x in candidates(level, ts[-1]):
            x = np.asarray(x, dtype=np.int8)
            if x.shape != arr0.shape or (x == ERR).any():
                raise ValueError(f"output {t} is not a full assignment of length {n}")
            h = _conditional_from_prefix(prefix, (x == arr0).astype(np.int64), n)
            seen.append(h)
            if band.contains(h):
                hit = (t, h, x)
                break
        trace.append(seen)
        if hit is None:
            break
        ts.append(hit[0])
        ents.append(hit[1])
        prefix = prefix | ((hit[2] == arr0).astype(np.int64) << level)
    return ts, ents, trace


def scan_forbidden_structure(outputs, band: OgpBandSpec, nu: float | None = None,
                             formulas=None, k: int | None = None, sequence: str = "outputs") -> ScanResult:
    """Greedy t_l = first t > t_{l-1} whose conditional entropy given the
    chosen y^0..y^{l-1} lies in the band."""
    k = band.k if k is None else k
    if formulas is not None and len(formulas) != len(outputs):
        raise ValueError("outputs and formulas must align")
    if not len(outputs):
        return ScanResult(False, [], [], [], None, sequence)

    def cands(level, last):
        return ((t, outputs[t]) for t in range(last + 1, len(outputs)))

    ts, ents, trace = _scan(outputs[0], cands, band, k)
    found = len(ts) == k + 1
    ogp_a = None
    if nu is not None and formulas is not None:
        ogp_a = [bool(nu_satisfies(np.asarray(outputs[t]), formulas[t], nu)) for t in ts]
    return ScanResult(found, ts, ents, trace, ogp_a, sequence)


def scan_branches(base, branches, band: OgpBandSpec, k: int | None = None,
                  sequence: str = "branched") -> ScanResult:
    """Branched variant: y^l is the first output along branch l (an iterable
    of (t, output) pairs, consumed lazily) whose conditional entropy lies in
    the band.  ``ts`` holds step indices within each branch."""
    k = band.k if k is None else k
    branches = list(branches)
    if len(branches) < k:
        raise ValueError(f"need {k} branches, got {len(branches)}")

    def cands(level, last):
        return iter(branches[level - 1])

    ts, ents, trace = _scan(base, cands, band, k)
    return ScanResult(len(ts) == k + 1, ts, ents, trace, None, sequence)
