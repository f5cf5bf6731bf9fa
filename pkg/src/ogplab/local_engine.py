"""Engines for local, local-memory and sequential local algorithms.

A :class:`LocalRule` maps a canonical rooted neighborhood to a value.  A
:class:`MemoryRule` is a step function run once per vertex in priority
order; it edits an integer memory map through a :class:`MemoryContext`,
which only hands out vertices reachable from the processed vertex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .factor_graph import DecoratedFactorGraph, ball_vertices, neighborhood
from .ksat import F, T


class RuleError(RuntimeError):
    def __init__(self, rule: str, vertex: int, cause: BaseException):
        super().__init__(f"rule {rule!r} failed at vertex {vertex}: {cause!r}")
        self.rule = rule
        self.vertex = vertex


class LocalityError(RuntimeError):
    """A memory rule touched a vertex outside its ball."""


@dataclass(frozen=True)
class LocalRule:
    name: str
    radius: int
    fn: Callable[[Any], Any]
    codomain: str = "assignment"  # or "probability", "symbol"
    params: dict = field(default_factory=dict)

    def __call__(self, nb):
        return self.fn(nb)


@dataclass(frozen=True)
class MemoryRule:
    name: str
    radius: int
    step: Callable[["MemoryContext"], None]
    finalize: Callable[[int], Any]
    acts_on: str = "all"  # "clause" / "variable": the step is a no-op elsewhere
    params: dict = field(default_factory=dict)


def _uniform_low(word) -> float:
    return float(int(word) & 0xFFFFFFFF) / 2.0**32


class MemoryContext:
    """View handed to a memory rule's step function.

    With ``checked=True`` every vertex handle must have been reached by
    navigation from the processed vertex, and navigation stops at the rule's
    radius.
    """

    def __init__(self, g: DecoratedFactorGraph, mu: np.ndarray, radius: int, checked: bool = False):
        self.g = g
        self._mu = mu
        self.radius = radius
        self.checked = checked
        self.root = -1
        self._dist: dict = {}

    def _enter(self, root: int) -> None:
        self.root = root
        if self.checked:
            self._dist = {root: 0}

    # -- navigation
    def is_clause(self, u) -> bool:
        return u >= self.g.n

    def _need(self, us, inner: bool):
        for u in np.atleast_1d(us).tolist():
            d = self._dist.get(u)
            if d is None:
                raise LocalityError(f"vertex {u} was never reached from {self.root}")
            if inner and d >= self.radius:
                raise LocalityError(f"cannot expand vertex {u} at distance {d} (radius {self.radius})")

    def incident(self, u) -> np.ndarray:
        g = self.g
        lo, hi = g.inc_ptr[u], g.inc_ptr[u + 1]
        if self.checked:
            self._need(u, True)
            d = self._dist[u] + 1
            for w in g.inc_other[lo:hi].tolist():
                if self._dist.get(w, d + 1) > d:
                    self._dist[w] = d
        return g.inc_edge[lo:hi]

    def incident_many(self, us):
        """Concatenated incident edges of ``us`` plus the owner position of each."""
        g = self.g
        us = np.asarray(us, dtype=np.int64)
        if self.checked:
            for u in us.tolist():
                self.incident(u)
        lo, hi = g.inc_ptr[us], g.inc_ptr[us + 1]
        cnt = hi - lo
        owner = np.repeat(np.arange(us.size), cnt)
        starts = np.repeat(lo - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
        idx = np.arange(cnt.sum()) + starts
        return g.inc_edge[idx], owner

    def var_of(self, e):
        return self.g.edge_var[e]

    def clause_of(self, e):
        return self.g.edge_clause[e] + self.g.n

    def pol(self, e):
        return self.g.edge_pol[e]

    def edge_word(self, e):
        return self.g.eword[e]

    def vertex_word(self, u):
        if self.checked:
            self._need(u, False)
        return self.g.vword[u]

    def uniform(self, u) -> float:
        """A U[0,1) draw from the low half of the vertex word."""
        return _uniform_low(self.vertex_word(u))

    # -- memory
    def mu(self, u):
        if self.checked:
            self._need(u, False)
        return self._mu[u]

    def set_mu(self, u, value) -> None:
        if self.checked:
            self._need(u, False)
            if np.any(np.asarray(value) < 0):
                raise ValueError("memory values must be non-negative")
        self._mu[u] = value

    def neighborhood(self, radius: int, edge_ok=None):
        if radius > self.radius:
            raise LocalityError(f"radius {radius} exceeds rule radius {self.radius}")
        if self.checked:
            for w, d in ball_vertices(self.g, self.root, radius).items():
                if self._dist.get(w, d + 1) > d:
                    self._dist[w] = d
        return neighborhood(self.g, self.root, radius, edge_ok=edge_ok)


def _finalize_many(rule: MemoryRule, values: np.ndarray) -> np.ndarray:
    out = np.empty(values.size, dtype=np.int8)
    for val in np.unique(values).tolist():
        out[values == val] = rule.finalize(val)
    return out


def run_local(rule: LocalRule, g: DecoratedFactorGraph, variables=None) -> np.ndarray:
    """Apply ``rule`` to the radius-r ball of each variable independently."""
    vs = range(g.n) if variables is None else variables
    vals = []
    for v in vs:
        try:
            vals.append(rule.fn(neighborhood(g, v, rule.radius)))
        except Exception as exc:  # noqa: BLE001
            raise RuleError(rule.name, v, exc) from exc
    dtype = np.int8 if rule.codomain in ("assignment", "symbol") else float
    return np.asarray(vals, dtype=dtype)


def run_local_memory(rule: MemoryRule, g: DecoratedFactorGraph, seed=None, checked: bool = False,
                     return_memory: bool = False):
    """Run ``rule`` once at every vertex in increasing priority.

    ``seed`` redraws the decorations first; by default the graph's own vertex
    words set the order so runs couple with other engines on the same graph.
    """
    if seed is not None:
        g = g.redecorated(seed)
    mu = np.zeros(g.num_vertices, dtype=np.int64)
    order = g.order()
    if rule.acts_on == "clause":
        order = order[order >= g.n]
    elif rule.acts_on == "variable":
        order = order[order < g.n]
    ctx = MemoryContext(g, mu, rule.radius, checked)
    step = rule.step
    for u in order.tolist():
        ctx._enter(u)
        try:
            step(ctx)
        except LocalityError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise RuleError(rule.name, u, exc) from exc
    x = _finalize_many(rule, mu[: g.n])
    return (x, mu) if return_memory else x


# ---------------------------------------------------------------- sequential


def run_sequential_local(rule: LocalRule, g: DecoratedFactorGraph, seed=None) -> np.ndarray:
    """Decide variables one by one, simplifying the formula after each.

    Variable v is set T when its uniform draw is below the rule's probability
    on the current simplified graph.  Satisfied clauses are deleted, falsified
    occurrences removed and emptied clauses dropped.
    """
    if seed is not None:
        g = g.redecorated(seed)
    n = g.n
    edge_alive = np.ones(g.num_edges, dtype=bool)
    clause_edges = [g.incident(n + c) for c in range(g.m)]
    x = np.zeros(n, dtype=np.int8)
    order = g.order()
    ok = edge_alive.__getitem__
    for v in order[order < n].tolist():
        try:
            p = float(rule.fn(neighborhood(g, v, rule.radius, edge_ok=ok)))
        except Exception as exc:  # noqa: BLE001
            raise RuleError(rule.name, v, exc) from exc
        val = T if _uniform_low(g.vword[v]) < p else F
        x[v] = val
        es = g.incident(v)
        es = es[edge_alive[es]]
        sat = g.edge_pol[es] == (val == T)
        for c in np.unique(g.edge_clause[es]).tolist():
            if sat[g.edge_clause[es] == c].any():
                edge_alive[clause_edges[c]] = False
            else:
                edge_alive[es[g.edge_clause[es] == c]] = False
    return x


def sequential_as_memory_rule(rule: LocalRule) -> MemoryRule:
    """Encode a sequential rule as a local memory rule.

    Memory: variables 0 unset / 1 true / 2 false; clauses 1 once deleted.
    """
    r = rule.radius

    def step(ctx: MemoryContext):
        v = ctx.root

        def ok(e):
            return ctx.mu(ctx.clause_of(e)) == 0 and ctx.mu(ctx.var_of(e)) == 0

        p = float(rule.fn(ctx.neighborhood(r, edge_ok=ok)))
        is_true = ctx.uniform(v) < p
        ctx.set_mu(v, 1 if is_true else 2)
        es = ctx.incident(v)
        for c in np.unique(ctx.clause_of(es)).tolist():
            if ctx.mu(c):
                continue
            mine = es[ctx.clause_of(es) == c]
            if (ctx.pol(mine) == is_true).any():
                ctx.set_mu(c, 1)
                continue
            others = ctx.var_of(ctx.incident(c))
            if all(ctx.mu(w) != 0 for w in others.tolist()):
                ctx.set_mu(c, 1)

    return MemoryRule(f"seq[{rule.name}]", max(r, 2), step, lambda val: T if val == 1 else F,
                      acts_on="variable", params={"inner": rule.name, **rule.params})


# ---------------------------------------------------------------- simulation


def r_local_simulation(rule: MemoryRule, R: int) -> LocalRule:
    """The R-local rule replaying the memory algorithm inside each R-ball."""
    if R < rule.radius:
        raise ValueError("R must be at least the rule radius")

    def fn(nb):
        sub, vmap = nb.to_graph()
        _, mu = run_local_memory(rule, sub, return_memory=True)
        return rule.finalize(int(mu[vmap[0]]))

    return LocalRule(f"sim[{rule.name}]@{R}", R, fn, "assignment", {"R": R, **rule.params})


@dataclass
class InsulationReport:
    r: float
    R: int
    hop: int
    roots: np.ndarray
    insulated: np.ndarray
    escapes: np.ndarray          # escaping chain endpoints found per root
    witness: dict                # root -> one escaping chain (vertex list)

    @property
    def fraction(self) -> float:
        return float(self.insulated.mean()) if self.insulated.size else 1.0


def priority_ranks(g: DecoratedFactorGraph, psi=None) -> np.ndarray:
    order = g.order() if psi is None else np.lexsort((np.arange(g.num_vertices), np.asarray(psi)))
    rank = np.empty(g.num_vertices, dtype=np.int64)
    rank[order] = np.arange(order.size)
    return rank


def insulation_report(g: DecoratedFactorGraph, r, R: int, psi=None, roots=None, hop: int | None = None,
                      root_priority: bool = False) -> InsulationReport:
    """Per-root insulation against hop-bounded decreasing-priority chains.

    A chain starts at the root, moves at most ``hop`` (default 2r) steps at
    a time and, after its first move, strictly decreases in priority.  The
    root is insulated when no chain reaches distance greater than R - hop.
    ``root_priority=True`` also requires the first move to decrease.
    """
    hop = int(round(2 * r)) if hop is None else hop
    rank = priority_ranks(g, psi)
    roots = np.arange(g.n) if roots is None else np.asarray(roots)
    inner = R - hop
    hop_cache: dict = {}

    def near(u):
        got = hop_cache.get(u)
        if got is None:
            got = [w for w in ball_vertices(g, u, hop) if w != u]
            hop_cache[u] = got
        return got

    ins = np.ones(roots.size, dtype=bool)
    esc = np.zeros(roots.size, dtype=np.int64)
    witness = {}
    for i, v in enumerate(roots.tolist()):
        if inner < 0:
            ins[i] = False
            continue
        dist = ball_vertices(g, v, R)
        parent = {}
        stack = []
        for w in near(v):
            if root_priority and rank[w] >= rank[v]:
                continue
            if w not in parent:
                parent[w] = v
                stack.append(w)
        while stack:
            w = stack.pop()
            if dist.get(w, R + 1) > inner:
                ins[i] = False
                esc[i] += 1
                if v not in witness:
                    chain = [w]
                    while chain[-1] != v:
                        chain.append(parent[chain[-1]])
                    witness[v] = chain[::-1]
                continue
            for x in near(w):
                if rank[x] < rank[w] and x not in parent:
                    parent[x] = w
                    stack.append(x)
    return InsulationReport(r, R, hop, roots, ins, esc, witness)
