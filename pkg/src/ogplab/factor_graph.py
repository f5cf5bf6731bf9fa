"""Decorated factor graphs, rooted neighborhoods and Galton-Watson trees.

Vertex ids: variables are ``0..n-1``, clause ``i`` is vertex ``n + i``.
Every edge carries a variable, a clause, a slot, a polarity (True for a
positive literal) and a 64-bit decoration word.  Vertices carry words too.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as _rng
from .ksat import Formula


class DecoratedFactorGraph:
    def __init__(self, n, m, edge_var, edge_clause, edge_slot, edge_pol, vword, eword, k=None):
        self.n = int(n)
        self.m = int(m)
        self.k = k
        self.edge_var = np.asarray(edge_var, dtype=np.int64)
        self.edge_clause = np.asarray(edge_clause, dtype=np.int64)
        self.edge_slot = np.asarray(edge_slot, dtype=np.int64)
        self.edge_pol = np.asarray(edge_pol, dtype=bool)
        self.vword = np.asarray(vword, dtype=np.uint64)
        self.eword = np.asarray(eword, dtype=np.uint64)
        E = self.edge_var.size
        if self.vword.size != self.n + self.m or self.eword.size != E:
            raise ValueError("decoration arrays do not match graph size")
        for a in (self.edge_var, self.edge_clause, self.edge_slot, self.edge_pol, self.vword, self.eword):
            a.setflags(write=False)
        self._build_incidence()

    def _build_incidence(self):
        E = self.edge_var.size
        V = self.n + self.m
        cverts = self.edge_clause + self.n
        owner = np.concatenate([self.edge_var, cverts])
        other = np.concatenate([cverts, self.edge_var])
        eid = np.concatenate([np.arange(E), np.arange(E)])
        order = np.argsort(owner, kind="stable")
        self.inc_edge = eid[order]
        self.inc_other = other[order]
        self.inc_ptr = np.zeros(V + 1, dtype=np.int64)
        np.cumsum(np.bincount(owner, minlength=V), out=self.inc_ptr[1:])

    @property
    def num_vertices(self) -> int:
        return self.n + self.m

    @property
    def num_edges(self) -> int:
        return int(self.edge_var.size)

    def is_clause(self, u) -> bool:
        return u >= self.n

    def degree(self, u) -> int:
        return int(self.inc_ptr[u + 1] - self.inc_ptr[u])

    def degrees(self) -> np.ndarray:
        return np.diff(self.inc_ptr)

    def incident(self, u) -> np.ndarray:
        return self.inc_edge[self.inc_ptr[u]:self.inc_ptr[u + 1]]

    def neighbors(self, u) -> np.ndarray:
        return self.inc_other[self.inc_ptr[u]:self.inc_ptr[u + 1]]

    def clause_vertex(self, e):
        return self.edge_clause[e] + self.n

    def psi(self) -> np.ndarray:
        """Processing priorities in [0, 1): the high 32 bits of the vertex word."""
        return (self.vword >> np.uint64(32)).astype(np.float64) / 2.0**32

    def order(self) -> np.ndarray:
        """Vertices sorted by priority; the full word then the id break ties."""
        return np.lexsort((np.arange(self.num_vertices), self.vword))

    def to_formula(self) -> Formula:
        if self.k is None:
            raise ValueError("graph has non-uniform clause degree")
        lits = np.zeros((self.m, self.k), dtype=np.int64)
        lits[self.edge_clause, self.edge_slot] = 2 * self.edge_var + self.edge_pol
        return Formula(self.n, lits)

    def with_decorations(self, vword=None, eword=None) -> "DecoratedFactorGraph":
        return DecoratedFactorGraph(
            self.n, self.m, self.edge_var, self.edge_clause, self.edge_slot, self.edge_pol,
            self.vword if vword is None else vword, self.eword if eword is None else eword, self.k,
        )

    def redecorated(self, seed) -> "DecoratedFactorGraph":
        g = _rng.generator(seed)
        return self.with_decorations(_rng.words(g, self.num_vertices), _rng.words(g, self.num_edges))

    def dump(self) -> str:
        """Line-oriented text: V/C lines for vertices, E lines for edges."""
        out = [f"V {i} {int(self.vword[i])}" for i in range(self.n)]
        out += [f"C {i} {int(self.vword[self.n + i])}" for i in range(self.m)]
        for e in range(self.num_edges):
            pol = "T" if self.edge_pol[e] else "F"
            out.append(f"E {self.edge_var[e]} {self.edge_clause[e]} {self.edge_slot[e]} {pol} {int(self.eword[e])}")
        return "\n".join(out) + "\n"

    @classmethod
    def parse_dump(cls, text: str) -> "DecoratedFactorGraph":
        vw, cw, edges = {}, {}, []
        for line in text.splitlines():
            p = line.split()
            if not p:
                continue
            if p[0] == "V":
                vw[int(p[1])] = int(p[2])
            elif p[0] == "C":
                cw[int(p[1])] = int(p[2])
            elif p[0] == "E":
                edges.append((int(p[1]), int(p[2]), int(p[3]), p[4] == "T", int(p[5])))
            else:
                raise ValueError(f"unknown dump line {line!r}")
        n, m = len(vw), len(cw)
        words = [vw[i] for i in range(n)] + [cw[i] for i in range(m)]
        ev, ec, es, ep, ew = (list(c) for c in zip(*edges)) if edges else ([], [], [], [], [])
        degs = np.bincount(np.asarray(ec, dtype=np.int64), minlength=m) if m else np.zeros(0, int)
        k = int(degs[0]) if m and (degs == degs[0]).all() else None
        return cls(n, m, ev, ec, es, ep, np.array(words, np.uint64), np.array(ew, np.uint64), k)


def graph_from_formula(phi: Formula, vword, eword) -> DecoratedFactorGraph:
    m, k = phi.m, phi.k
    return DecoratedFactorGraph(
        phi.n, m,
        edge_var=phi.variables.ravel(),
        edge_clause=np.repeat(np.arange(m), k),
        edge_slot=np.tile(np.arange(k), m),
        edge_pol=phi.positive.ravel(),
        vword=vword, eword=eword, k=k,
    )


def build_factor_graph(phi: Formula, seed) -> DecoratedFactorGraph:
    g = _rng.generator(seed)
    vword = _rng.words(g, phi.n + phi.m)
    eword = _rng.words(g, phi.m * phi.k)
    return graph_from_formula(phi, vword, eword)


def permuted(g: DecoratedFactorGraph, seed):
    """Relabel variables, clauses, slots and edge order at random.

    Returns the new graph and the variable map ``old -> new``.
    """
    r = _rng.generator(seed)
    vp = r.permutation(g.n)
    cp = r.permutation(g.m)
    eo = r.permutation(g.num_edges)
    new_var = vp[g.edge_var][eo]
    new_cl = cp[g.edge_clause][eo]
    slot = np.zeros(g.num_edges, dtype=np.int64)
    seen: dict[int, int] = {}
    for idx, c in enumerate(new_cl):
        slot[idx] = seen.get(c, 0)
        seen[c] = slot[idx] + 1
    vword = np.zeros_like(g.vword)
    vword[vp] = g.vword[: g.n]
    vword[g.n + cp] = g.vword[g.n:]
    h = DecoratedFactorGraph(g.n, g.m, new_var, new_cl, slot, g.edge_pol[eo], vword, g.eword[eo], None)
    return h, vp


# ---------------------------------------------------------------- neighborhoods


def ball(g: DecoratedFactorGraph, root: int, r: int, edge_ok: Callable[[int], bool] | None = None):
    """BFS ball of radius r.

    Returns ``(vertices, depths, edges)``: vertices in discovery order (root
    first), their depths, and every edge scanned from a vertex of depth < r.
    """
    depth = {root: 0}
    verts = [root]
    edges = []
    seen_e = set()
    head = 0
    ptr, inc_e, inc_o = g.inc_ptr, g.inc_edge, g.inc_other
    while head < len(verts):
        u = verts[head]
        head += 1
        d = depth[u]
        if d >= r:
            continue
        lo, hi = ptr[u], ptr[u + 1]
        for e, w in zip(inc_e[lo:hi].tolist(), inc_o[lo:hi].tolist()):
            if edge_ok is not None and not edge_ok(e):
                continue
            if e not in seen_e:
                seen_e.add(e)
                edges.append(e)
            if w not in depth:
                depth[w] = d + 1
                verts.append(w)
    return verts, [depth[v] for v in verts], edges


def ball_vertices(g: DecoratedFactorGraph, root: int, r: int) -> dict:
    """Vertex -> distance for the unfiltered ball (cheap path, no edge list)."""
    depth = {root: 0}
    frontier = [root]
    ptr, inc_o = g.inc_ptr, g.inc_other
    for d in range(1, r + 1):
        nxt = []
        for u in frontier:
            for w in inc_o[ptr[u]:ptr[u + 1]].tolist():
                if w not in depth:
                    depth[w] = d
                    nxt.append(w)
        frontier = nxt
        if not frontier:
            break
    return depth


@dataclass(eq=False)
class RootedNeighborhood:
    """A rooted decorated ball.  After ``canonical()`` vertex 0 is the root and
    the order of vertices and edges depends only on the isomorphism class."""

    radius: int
    side: np.ndarray       # 0 = variable, 1 = clause
    depth: np.ndarray
    vword: np.ndarray
    edge_u: np.ndarray     # local index of the variable endpoint
    edge_c: np.ndarray     # local index of the clause endpoint
    edge_pol: np.ndarray
    edge_word: np.ndarray
    _vertex_ids: np.ndarray = field(repr=False, default=None)
    _edge_ids: np.ndarray = field(repr=False, default=None)
    _cert: tuple | None = field(repr=False, default=None)
    _inc: list | None = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return int(self.side.size)

    @property
    def num_edges(self) -> int:
        return int(self.edge_u.size)

    def is_tree(self) -> bool:
        return self.num_edges == self.size - 1

    def incident(self, i: int) -> list:
        """Local edge indices touching local vertex i."""
        if self._inc is None:
            inc = [[] for _ in range(self.size)]
            for e, (a, b) in enumerate(zip(self.edge_u.tolist(), self.edge_c.tolist())):
                inc[a].append(e)
                inc[b].append(e)
            self._inc = inc
        return self._inc[i]

    def other(self, e: int, i: int) -> int:
        a, b = int(self.edge_u[e]), int(self.edge_c[e])
        return b if a == i else a

    def root_polarities(self) -> np.ndarray:
        return self.edge_pol[self.incident(0)]

    def canonical(self) -> "RootedNeighborhood":
        if self._cert is not None:
            return self
        order = _canonical_order(self)
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        eu, ec = inv[self.edge_u], inv[self.edge_c]
        ekey = np.lexsort((self.edge_word, self.edge_pol, ec, eu))
        nb = RootedNeighborhood(
            self.radius, self.side[order], self.depth[order], self.vword[order],
            eu[ekey], ec[ekey], self.edge_pol[ekey], self.edge_word[ekey],
            None if self._vertex_ids is None else self._vertex_ids[order],
            None if self._edge_ids is None else self._edge_ids[ekey],
        )
        nb._cert = (
            nb.radius,
            tuple(zip(nb.depth.tolist(), nb.side.tolist(), nb.vword.tolist())),
            tuple(zip(nb.edge_u.tolist(), nb.edge_c.tolist(), nb.edge_pol.tolist(), nb.edge_word.tolist())),
        )
        return nb

    def certificate(self) -> tuple:
        return self.canonical()._cert

    def to_graph(self):
        """The ball as a stand-alone graph; returns (graph, local vertex id map)."""
        vars_ = np.flatnonzero(self.side == 0)
        cls = np.flatnonzero(self.side == 1)
        vmap = np.full(self.size, -1, dtype=np.int64)
        vmap[vars_] = np.arange(vars_.size)
        vmap[cls] = vars_.size + np.arange(cls.size)
        cl_idx = vmap[self.edge_c] - vars_.size
        slot = np.zeros(self.num_edges, dtype=np.int64)
        counter: dict[int, int] = {}
        for e, c in enumerate(cl_idx.tolist()):
            slot[e] = counter.get(c, 0)
            counter[c] = slot[e] + 1
        vword = np.zeros(self.size, dtype=np.uint64)
        vword[vmap] = self.vword
        g = DecoratedFactorGraph(vars_.size, cls.size, vmap[self.edge_u], cl_idx, slot,
                                 self.edge_pol, vword, self.edge_word, None)
        return g, vmap


def _canonical_order(nb: RootedNeighborhood) -> np.ndarray:
    """Colour refinement on (depth, side, word) with neighbour multisets."""
    V = nb.size
    init = list(zip(nb.depth.tolist(), nb.side.tolist(), nb.vword.tolist()))
    ranks = _ranks(init)
    adj = [[] for _ in range(V)]
    for a, b, p, w in zip(nb.edge_u.tolist(), nb.edge_c.tolist(), nb.edge_pol.tolist(), nb.edge_word.tolist()):
        adj[a].append((b, p, w))
        adj[b].append((a, p, w))
    classes = len(set(ranks))
    while classes < V:
        sig = [(ranks[v], tuple(sorted((ranks[o], p, w) for o, p, w in adj[v]))) for v in range(V)]
        new = _ranks(sig)
        c = len(set(new))
        ranks = new
        if c == classes:
            break
        classes = c
    # remaining ties: stable on BFS discovery order
    return np.array(sorted(range(V), key=lambda v: (ranks[v], v)), dtype=np.int64)


def _ranks(keys: list) -> list:
    table = {k: i for i, k in enumerate(sorted(set(keys)))}
    return [table[k] for k in keys]


def neighborhood(g: DecoratedFactorGraph, root: int, r: int, edge_ok=None, canonical: bool = True) -> RootedNeighborhood:
    verts, depths, edges = ball(g, root, r, edge_ok)
    local = {v: i for i, v in enumerate(verts)}
    e = np.asarray(edges, dtype=np.int64)
    vv = np.asarray(verts, dtype=np.int64)
    nb = RootedNeighborhood(
        radius=r,
        side=(vv >= g.n).astype(np.int8),
        depth=np.asarray(depths, dtype=np.int64),
        vword=g.vword[vv],
        edge_u=np.array([local[v] for v in g.edge_var[e].tolist()], dtype=np.int64),
        edge_c=np.array([local[c] for c in (g.edge_clause[e] + g.n).tolist()], dtype=np.int64),
        edge_pol=g.edge_pol[e],
        edge_word=g.eword[e],
        _vertex_ids=vv,
        _edge_ids=e,
    )
    return nb.canonical() if canonical else nb


def is_r_locally_small(g: DecoratedFactorGraph, r: int) -> bool:
    cap = g.n ** (1.0 / 3.0)
    for v in range(g.n):
        if len(ball_vertices(g, v, r)) > cap:
            return False
    return True


# ---------------------------------------------------------------- Galton-Watson


@dataclass
class GWTree:
    """Alternating tree: even layers are variables, odd layers clauses.

    ``parent[v]`` is -1 for the root; the edge to the parent has polarity
    ``pol[v]`` and word ``eword[v]``.
    """

    d1: float
    d2: int
    depth: int
    parent: np.ndarray
    layer: np.ndarray
    pol: np.ndarray
    vword: np.ndarray
    eword: np.ndarray
    offspring: np.ndarray

    @property
    def size(self) -> int:
        return int(self.parent.size)

    def layer_sizes(self) -> np.ndarray:
        return np.bincount(self.layer, minlength=self.depth + 1)

    def to_graph(self) -> DecoratedFactorGraph:
        """The tree as a factor graph; the root is variable 0."""
        is_var = self.layer % 2 == 0
        vars_ = np.flatnonzero(is_var)
        cls = np.flatnonzero(~is_var)
        vid = np.full(self.size, -1, dtype=np.int64)
        vid[vars_] = np.arange(vars_.size)
        vid[cls] = np.arange(cls.size)
        child = np.flatnonzero(self.parent >= 0)
        par = self.parent[child]
        var_end = np.where(is_var[child], child, par)
        cl_end = np.where(is_var[child], par, child)
        slot = np.zeros(child.size, dtype=np.int64)
        counter: dict[int, int] = {}
        for i, c in enumerate(vid[cl_end].tolist()):
            slot[i] = counter.get(c, 0)
            counter[c] = slot[i] + 1
        vword = np.concatenate([self.vword[vars_], self.vword[cls]])
        return DecoratedFactorGraph(vars_.size, cls.size, vid[var_end], vid[cl_end], slot,
                                    self.pol[child], vword, self.eword[child], None)


def sample_dgw(d1: float, d2: int, depth: int, seed) -> GWTree:
    """Root and every even-layer vertex spawn Pois(d1) children, odd layers d2.

    Vertices in the last layer (``depth``) spawn nothing.
    """
    if depth < 0 or d1 <= 0 or d2 < 1:
        raise ValueError("need depth >= 0, d1 > 0, d2 >= 1")
    g = _rng.generator(seed)
    parent = [-1]
    layer = [0]
    offspring = []
    frontier = [0]
    for lvl in range(depth):
        counts = g.poisson(d1, len(frontier)) if lvl % 2 == 0 else np.full(len(frontier), d2)
        nxt = []
        for v, c in zip(frontier, counts.tolist()):
            offspring.append(c)
            for _ in range(c):
                nxt.append(len(parent))
                parent.append(v)
                layer.append(lvl + 1)
        frontier = nxt
    size = len(parent)
    offspring += [0] * (size - len(offspring))
    return GWTree(
        d1, d2, depth,
        parent=np.asarray(parent, dtype=np.int64),
        layer=np.asarray(layer, dtype=np.int64),
        pol=g.random(size) < 0.5,
        vword=_rng.words(g, size),
        eword=_rng.words(g, size),
        offspring=np.asarray(offspring, dtype=np.int64),
    )


# ---------------------------------------------------------------- tail statistics


def dgw_ball_size_cdf(d1: float, d2: int, r: int, cap: int = 4000) -> np.ndarray:
    """Exact pmf of |N_{2r}(root)| in DGW(d1, d2) by layer convolution.

    Returns a pmf over sizes 0..cap (mass above cap is dropped).
    """
    from scipy import stats

    # state: distribution of (total size, current variable-layer size)
    states = {(1, 1): 1.0}
    for _ in range(r):
        nxt: dict = {}
        for (tot, width), p in states.items():
            # sum of `width` Poisson(d1) draws is Poisson(width * d1)
            lam = width * d1
            hi = int(lam + 12 * math.sqrt(lam + 1) + 12)
            pm = stats.poisson(lam).pmf(np.arange(hi + 1)) if width else np.array([1.0])
            for c, q in enumerate(pm.tolist()):
                if q < 1e-16:
                    continue
                t = tot + c + c * d2
                if t > cap:
                    continue
                key = (t, c * d2)
                nxt[key] = nxt.get(key, 0.0) + p * q
        states = nxt
    pmf = np.zeros(cap + 1)
    for (tot, _), p in states.items():
        pmf[tot] += p
    return pmf


@dataclass
class TailTable:
    lambdas: np.ndarray
    empirical: np.ndarray
    exact: np.ndarray | None
    threshold_base: float
    samples: int


def neighborhood_tail_stats(ensemble: dict, r: int, samples: int, lambdas, seed) -> TailTable:
    """Empirical P[|N_{2r}(o)| <= lambda (d1 d2)^r] over a lambda grid.

    ``ensemble`` is ``{"kind": "dgw", "d1", "d2"}`` or
    ``{"kind": "dfg", "n", "m", "k"}`` (then d1 = km/n, d2 = k - 1).
    """
    lambdas = np.asarray(lambdas, dtype=float)
    sizes = _sample_ball_sizes(ensemble, 2 * r, samples, seed)
    if ensemble["kind"] == "dgw":
        d1, d2 = ensemble["d1"], ensemble["d2"]
    else:
        d1, d2 = ensemble["k"] * ensemble["m"] / ensemble["n"], ensemble["k"] - 1
    base = (d1 * d2) ** r
    emp = np.array([(sizes <= lam * base).mean() for lam in lambdas])
    exact = None
    if ensemble["kind"] == "dgw":
        cdf = np.cumsum(dgw_ball_size_cdf(d1, d2, r, cap=int(lambdas.max() * base) + 1))
        exact = np.array([cdf[int(math.floor(lam * base))] for lam in lambdas])
    return TailTable(lambdas, emp, exact, base, samples)


def _sample_ball_sizes(ensemble, radius, samples, seed) -> np.ndarray:
    out = []
    for nb in sample_root_balls(ensemble, radius, samples, seed, canonical=False):
        out.append(nb.size)
    return np.asarray(out)


def sample_root_balls(ensemble: dict, radius: int, samples: int, seed, canonical=True, roots_per_graph=500):
    """Yield root neighborhoods from DGW trees or uniformly rooted DFG graphs."""
    from .ksat import sample_formula

    ss = _rng.seed_sequence(seed)
    if ensemble["kind"] == "dgw":
        for child in ss.spawn(samples):
            t = sample_dgw(ensemble["d1"], ensemble["d2"], radius, child)
            yield neighborhood(t.to_graph(), 0, radius, canonical=canonical)
        return
    n, m, k = ensemble["n"], ensemble["m"], ensemble["k"]
    left = samples
    while left > 0:
        child = ss.spawn(1)[0]
        gs, rs = child.spawn(2)
        g = build_factor_graph(sample_formula(n, m, k, gs), rs)
        roots = _rng.generator(rs).choice(n, size=min(left, roots_per_graph), replace=False)
        for v in roots.tolist():
            yield neighborhood(g, v, radius, canonical=canonical)
        left -= roots.size


def local_statistic_discrepancy(stat, dfg: dict, dgw: dict, radius: int, samples: int, seed):
    """Mean of a local statistic on DFG roots minus its mean on DGW roots.

    Returns ``(dfg_mean, dgw_mean, difference, standard_error)``.
    """
    a, b = _rng.spawn(seed, 2)
    x = np.array([stat(nb) for nb in sample_root_balls(dfg, radius, samples, a, canonical=False)], float)
    y = np.array([stat(nb) for nb in sample_root_balls(dgw, radius, samples, b, canonical=False)], float)
    se = math.sqrt(x.var(ddof=1) / x.size + y.var(ddof=1) / y.size)
    return float(x.mean()), float(y.mean()), float(x.mean() - y.mean()), se
