"""Interpolation paths between random formulas, branched variants, c-bad
step detection, influence estimates and the bad-edge walk on Σ^J.

A path resamples one literal slot per step, sweeping the km slots in
lexicographic order k times.  Only the resample log is stored; formulas are
rebuilt on demand from the base and at most two sweeps of the log.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from . import rng as _rng
from .factor_graph import DecoratedFactorGraph, build_factor_graph, graph_from_formula
from .ksat import Formula, sample_formula

WALK_BUDGET = 1 << 24


def _wilson(hits: int, total: int) -> tuple[float, float]:
    if total == 0:
        return 0.0, 1.0
    ci = stats.binomtest(int(hits), int(total)).proportion_ci(method="wilson")
    return float(ci.low), float(ci.high)


class _Sweeps:
    """Resampled (literal, edge word) arrays for each sweep, drawn lazily from
    per-sweep seed streams and cached."""

    def __init__(self, seed, n: int, km: int, tag: int):
        self.root = _rng.seed_sequence(seed)
        self.n, self.km, self.tag = n, km, tag
        self._get = lru_cache(maxsize=8)(self._draw)

    def _draw(self, c: int):
        ss = np.random.SeedSequence(self.root.entropy, spawn_key=self.root.spawn_key + (self.tag, c))
        g = _rng.generator(ss)
        lits = g.integers(0, 2 * self.n, size=self.km, dtype=np.int64)
        words = _rng.words(g, self.km)
        return lits, words

    def __call__(self, c: int):
        return self._get(c)


class InterpolationPath:
    """Φ^(0) .. Φ^(T) with T = k²m; step t resamples slot σ(t) = (t-1) mod km."""

    def __init__(self, base: Formula, base_graph: DecoratedFactorGraph, seed):
        if base.k is None or base.m == 0:
            raise ValueError("interpolation needs m >= 1 clauses of equal width")
        self.base = base
        self.base_graph = base_graph
        self.n, self.m, self.k = base.n, base.m, base.k
        self.km = self.k * self.m
        self.T = self.k * self.km
        self._sweeps = _Sweeps(seed, self.n, self.km, 2)

    def sigma(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ValueError(f"step {t} outside 1..{self.T}")
        return (t - 1) % self.km

    def log_entry(self, t: int):
        """(t, slot, new literal, new edge word)."""
        slot = self.sigma(t)
        lits, words = self._sweeps((t - 1) // self.km)
        return t, slot, int(lits[slot]), int(words[slot])

    def _state(self, t: int):
        if not 0 <= t <= self.T:
            raise ValueError(f"t={t} outside 0..{self.T}")
        lits = self.base.lits.ravel().copy()
        words = self.base_graph.eword.copy()
        if t == 0:
            return lits, words
        c, j = divmod(t - 1, self.km)
        j += 1
        if c > 0:
            pl, pw = self._sweeps(c - 1)
            lits[:], words[:] = pl, pw
        cl, cw = self._sweeps(c)
        lits[:j], words[:j] = cl[:j], cw[:j]
        return lits, words

    def materialize(self, t: int) -> Formula:
        lits, _ = self._state(t)
        return self.base.with_lits(lits.reshape(self.m, self.k))

    def materialize_graph(self, t: int) -> DecoratedFactorGraph:
        lits, words = self._state(t)
        phi = self.base.with_lits(lits.reshape(self.m, self.k))
        return graph_from_formula(phi, self.base_graph.vword, words)

    def formulas(self, stride: int = 1):
        for t in range(0, self.T + 1, stride):
            yield t, self.materialize(t)


def _base(n, m, k, seed):
    ss = _rng.seed_sequence(seed)
    kids = ss.spawn(2)
    phi = sample_formula(n, m, k, kids[0])
    return phi, build_factor_graph(phi, kids[1])


def make_path(n: int, m: int, k: int, seed) -> InterpolationPath:
    phi, g = _base(n, m, k, seed)
    return InterpolationPath(phi, g, seed)


class BranchedInterpolation:
    """k independent single-sweep paths of length km from one base; each
    resampled literal comes with a fresh edge word."""

    def __init__(self, base: Formula, base_graph: DecoratedFactorGraph, seed):
        self.base, self.base_graph = base, base_graph
        self.n, self.m, self.k = base.n, base.m, base.k
        self.branches = self.k
        self.length = self.k * self.m
        self._sweeps = _Sweeps(seed, self.n, self.length, 3)

    def _state(self, branch: int, t: int):
        if not 0 <= branch < self.branches:
            raise ValueError(f"branch {branch} outside 0..{self.branches - 1}")
        if not 0 <= t <= self.length:
            raise ValueError(f"t={t} outside 0..{self.length}")
        lits = self.base.lits.ravel().copy()
        words = self.base_graph.eword.copy()
        bl, bw = self._sweeps(branch)
        lits[:t], words[:t] = bl[:t], bw[:t]
        return lits, words

    def materialize(self, branch: int, t: int) -> Formula:
        lits, _ = self._state(branch, t)
        return self.base.with_lits(lits.reshape(self.m, self.k))

    def materialize_graph(self, branch: int, t: int) -> DecoratedFactorGraph:
        lits, words = self._state(branch, t)
        return graph_from_formula(self.base.with_lits(lits.reshape(self.m, self.k)), self.base_graph.vword, words)


def make_branched(n: int, m: int, k: int, seed) -> BranchedInterpolation:
    phi, g = _base(n, m, k, seed)
    return BranchedInterpolation(phi, g, seed)


# ------------------------------------------------------------------ c-badness


def _as_rows(outputs) -> np.ndarray:
    try:
        arr = np.asarray([np.asarray(o, dtype=float).ravel() for o in outputs])
    except ValueError:
        raise ValueError("outputs have mismatched dimensions") from None
    if arr.ndim != 2:
        raise ValueError("outputs have mismatched dimensions")
    return arr


def detect_c_bad(outputs, c: float, gamma_hat: float) -> list[int]:
    """Steps t >= 1 with ||f_t - f_{t-1}||^2 > c * gamma_hat * dim."""
    arr = _as_rows(outputs)
    if arr.shape[0] < 2:
        return []
    jumps = np.sum(np.diff(arr, axis=0) ** 2, axis=1)
    return (np.flatnonzero(jumps > c * gamma_hat * arr.shape[1]) + 1).tolist()


def estimate_gamma(f, n: int, m: int, k: int, samples: int = 256, seed=0) -> tuple[float, tuple]:
    """Mean of ||f(Φ)||^2 / dim over independent formulas, with a 95% t interval."""
    vals = []
    for ss in _rng.spawn(seed, samples):
        out = np.asarray(f(sample_formula(n, m, k, ss)), dtype=float).ravel()
        vals.append(float(out @ out) / out.size)
    v = np.array(vals)
    mean = float(v.mean())
    if samples < 2 or v.std() == 0:
        return mean, (mean, mean)
    half = stats.t.ppf(0.975, samples - 1) * v.std(ddof=1) / math.sqrt(samples)
    return mean, (mean - half, mean + half)


@dataclass
class InfluenceEstimate:
    lam: np.ndarray
    ci: np.ndarray          # (km, 2) Wilson intervals
    total: float
    total_ci: tuple         # sum of the per-slot interval ends
    gamma_hat: float
    c: float
    samples: int


def estimate_influences(f, n: int, m: int, k: int, samples: int, c: float,
                        gamma_hat: float | None = None, seed=0, slots=None) -> InfluenceEstimate:
    """λ_j = P[(Φ, Φ') is c-bad] where Φ' differs from Φ in slot j only."""
    km = k * m
    root = _rng.seed_sequence(seed)
    g_seed, p_seed = root.spawn(2)
    if gamma_hat is None:
        gamma_hat = estimate_gamma(f, n, m, k, seed=g_seed)[0]
    slots = range(km) if slots is None else slots
    lam = np.zeros(km)
    ci = np.zeros((km, 2))
    ci[:, 1] = 1.0
    streams = p_seed.spawn(km)
    for j in slots:
        g = _rng.generator(streams[j])
        hits = 0
        for _ in range(samples):
            phi = sample_formula(n, m, k, g)
            lits = phi.lits.ravel().copy()
            lits[j] = (lits[j] + 1 + g.integers(0, 2 * n - 1)) % (2 * n)
            a = np.asarray(f(phi), dtype=float).ravel()
            b = np.asarray(f(phi.with_lits(lits.reshape(m, k))), dtype=float).ravel()
            hits += float(np.sum((a - b) ** 2)) > c * gamma_hat * a.size
        lam[j] = hits / samples
        ci[j] = _wilson(hits, samples)
    return InfluenceEstimate(lam, ci, float(lam.sum()), (float(ci[:, 0].sum()), float(ci[:, 1].sum())),
                             gamma_hat, c, samples)


# ------------------------------------------------------------------ bad-edge walk


class WalkBudgetExceeded(RuntimeError):
    pass


@dataclass
class WalkSpec:
    """Lazy walk on Σ^J; vertices are integers in base |Σ| (coordinate j has
    weight |Σ|^j).  ``bad`` is a set of unordered adjacent pairs, or a
    symmetric predicate on two vertex codes."""

    alphabet: int
    J: int
    T: int
    directions: list
    bad: object

    def __post_init__(self):
        if self.alphabet < 2 or self.J < 1 or self.T < 0:
            raise ValueError("need |Σ| >= 2, J >= 1, T >= 0")
        if len(self.directions) != self.T:
            raise ValueError("directions must have length T")
        if any(not 0 <= d < self.J for d in self.directions):
            raise ValueError("directions must lie in 0..J-1")
        if not callable(self.bad):
            pairs = set()
            for v, w in self.bad:
                if self.direction_of(v, w) is None:
                    raise ValueError(f"({v}, {w}) is not an edge of the Hamming graph")
                pairs.add((min(v, w), max(v, w)))
            self.bad = frozenset(pairs)

    @property
    def size(self) -> int:
        return self.alphabet ** self.J

    def encode(self, coords) -> int:
        return sum(int(a) * self.alphabet ** j for j, a in enumerate(coords))

    def decode(self, v: int) -> list[int]:
        return [(v // self.alphabet ** j) % self.alphabet for j in range(self.J)]

    def direction_of(self, v: int, w: int):
        a, b = self.decode(v), self.decode(w)
        diff = [j for j in range(self.J) if a[j] != b[j]]
        return diff[0] if len(diff) == 1 else None

    def is_bad(self, v: int, w: int) -> bool:
        if callable(self.bad):
            return bool(self.bad(v, w))
        return (min(v, w), max(v, w)) in self.bad

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for v in range(self.size):
            for j in range(self.J):
                a = self.decode(v)
                for x in range(a[j] + 1, self.alphabet):
                    out.append((v, v + (x - a[j]) * self.alphabet ** j))
        return out

    def lambdas(self) -> np.ndarray:
        bad = np.zeros(self.J)
        tot = np.zeros(self.J)
        for v, w in self.edges():
            j = self.direction_of(v, w)
            tot[j] += 1
            bad[j] += self.is_bad(v, w)
        return bad / tot


@dataclass
class WalkResult:
    probability: float
    bound: float
    holds: bool
    mode: str
    stderr: float = 0.0


def _bad_matrix(spec: WalkSpec) -> np.ndarray:
    """bad[v, j, a]: moving v's coordinate j to symbol a crosses a bad edge."""
    S, J = spec.alphabet, spec.J
    out = np.zeros((spec.size, J, S), dtype=bool)
    for v in range(spec.size):
        coords = spec.decode(v)
        for j in range(J):
            for a in range(S):
                if a != coords[j]:
                    out[v, j, a] = spec.is_bad(v, v + (a - coords[j]) * S ** j)
    return out


def walk_no_bad_probability(spec: WalkSpec, mode: str = "exact", budget: int = WALK_BUDGET,
                            samples: int = 100_000, seed=0) -> WalkResult:
    S, J = spec.alphabet, spec.J
    V = spec.size
    if V * S * J > budget:
        raise WalkBudgetExceeded(f"{V} vertices x {S} symbols exceed the budget {budget}")
    bad = _bad_matrix(spec)
    # each edge appears twice in bad[], once from either end
    lam = bad.sum(axis=(0, 2)) / (V * (S - 1))
    bound = float(S ** (-float(np.sum(lam[spec.directions])))) if spec.T else 1.0
    verts = np.arange(V)
    digits = np.stack([(verts // S ** j) % S for j in range(J)], axis=1)
    if mode == "exact":
        if V * S * max(spec.T, 1) > budget:
            raise WalkBudgetExceeded(f"{V * S * spec.T} walk states exceed the budget {budget}")
        q = np.ones(V)
        for t in range(spec.T - 1, -1, -1):
            j = spec.directions[t]
            nxt = np.zeros(V)
            for a in range(S):
                w = verts + (a - digits[:, j]) * S ** j
                nxt += np.where(bad[:, j, a], 0.0, q[w])
            q = nxt / S
        p = float(q.mean())
        return WalkResult(p, bound, p >= bound - 1e-12, "exact")
    if mode != "monte-carlo":
        raise ValueError(f"unknown mode {mode!r}")
    g = _rng.generator(seed)
    v = g.integers(0, V, size=samples)
    alive = np.ones(samples, dtype=bool)
    for t in range(spec.T):
        j = spec.directions[t]
        a = g.integers(0, S, size=samples)
        alive &= ~bad[v, j, a]
        v = v + (a - digits[v, j]) * S ** j
    p = float(alive.mean())
    se = math.sqrt(max(p * (1 - p), 1e-300) / samples)
    return WalkResult(p, bound, p >= bound - 4 * se, "monte-carlo", se)
