"""Degree-D polynomial simulation of a {T,F}-valued local rule.

The polynomial for variable v sums a coefficient h(S) over every edge set S
of the formula that forms a tree around v (depth <= r, at most D edges).
h is defined so that summing it over the rooted subtrees of S gives the rule
evaluated on the tree G(S).  Because rooted subtrees of S are the down-sets
of S's ancestry order, Möbius inversion only involves removing sets of leaf
edges:

    h(S) = sum over L ⊆ leaves(S) of (-1)^|L| g(S \\ L)

All coefficients are exact integers (T = +1, F = -1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng as _rng
from .factor_graph import DecoratedFactorGraph, ball_vertices, build_factor_graph, neighborhood
from .ksat import ERR, F, T, sample_formula
from .local_engine import LocalRule, run_local


def d_truncate(rule: LocalRule, D: int) -> LocalRule:
    """g where the r-ball is a tree with at most D vertices, err elsewhere."""
    if D < 1:
        raise ValueError("D must be at least 1")

    def fn(nb):
        if nb.is_tree() and nb.size <= D:
            return rule.fn(nb)
        return ERR

    return LocalRule(f"{rule.name}<= {D}", rule.radius, fn, "symbol", {"source": rule.name, "D": D, **rule.params})


@dataclass
class PolySimRule:
    source: LocalRule
    D: int
    cache: dict = field(default_factory=dict, repr=False)   # certificate -> g value

    def __post_init__(self):
        if self.source.codomain != "assignment":
            raise ValueError("degree-D simulation needs a {T,F}-valued rule")
        if self.D < 0:
            raise ValueError("D must be non-negative")

    @property
    def radius(self) -> int:
        return self.source.radius


def rooted_subtrees(g: DecoratedFactorGraph, root: int, r: int, D: int) -> list[tuple]:
    """Every edge set forming a tree that contains ``root``, has depth <= r and
    at most D edges.  Items are (frozenset of edges, {edge: child vertex})."""
    out = []
    ptr, inc_e, inc_o = g.inc_ptr, g.inc_edge, g.inc_other

    def cands(u, skip):
        lo, hi = ptr[u], ptr[u + 1]
        return [(e, u, w) for e, w in zip(inc_e[lo:hi].tolist(), inc_o[lo:hi].tolist()) if e != skip]

    def grow(edges: dict, depth: dict, frontier: list):
        out.append((frozenset(edges), dict(edges)))
        if len(edges) >= D:
            return
        for i, (e, u, w) in enumerate(frontier):
            if w in depth or depth[u] >= r:
                continue
            edges[e] = w
            depth[w] = depth[u] + 1
            grow(edges, depth, frontier[i + 1:] + cands(w, e))
            del edges[e]
            del depth[w]

    grow({}, {root: 0}, cands(root, -1) if r > 0 else [])
    return out


class _Evaluator:
    def __init__(self, rule: PolySimRule, g: DecoratedFactorGraph):
        self.rule, self.g = rule, g

    def value(self, v: int, S: frozenset) -> int:
        nb = neighborhood(self.g, v, self.rule.radius, edge_ok=S.__contains__)
        key = nb.certificate()
        cache = self.rule.cache
        if key not in cache:
            out = self.rule.source.fn(nb)
            if out == T:
                cache[key] = 1
            elif out == F:
                cache[key] = -1
            else:
                raise ValueError(f"rule {self.rule.source.name!r} returned {out!r}, not T/F")
        return cache[key]

    def coefficients(self, v: int) -> dict:
        trees = rooted_subtrees(self.g, v, self.rule.radius, self.rule.D)
        gval = {}
        out = {}
        for S, children in trees:
            # the parent vertex of each edge is whichever endpoint is not the child
            parent_vertices = set()
            for e, w in children.items():
                a = int(self.g.edge_var[e])
                b = int(self.g.edge_clause[e]) + self.g.n
                parent_vertices.add(b if w == a else a)
            leaves = [e for e, w in children.items() if w not in parent_vertices]
            h = 0
            for mask in range(1 << len(leaves)):
                drop = frozenset(leaves[i] for i in range(len(leaves)) if mask >> i & 1)
                sub = S - drop
                if sub not in gval:
                    gval[sub] = self.value(v, sub)
                h += -gval[sub] if len(drop) % 2 else gval[sub]
            out[S] = h
        return out

    def f(self, v: int) -> int:
        return sum(self.coefficients(v).values())


def coefficients(rule: PolySimRule, g: DecoratedFactorGraph, v: int) -> dict:
    """h(S) for every realised monomial S at variable v."""
    return _Evaluator(rule, g).coefficients(v)


def evaluate_polysim(rule: PolySimRule, g: DecoratedFactorGraph, variables=None) -> np.ndarray:
    ev = _Evaluator(rule, g)
    vs = range(g.n) if variables is None else variables
    return np.array([ev.f(int(v)) for v in vs], dtype=float)


def evaluate_along_path(rule: PolySimRule, path, steps) -> dict:
    """Outputs at the requested path steps, recomputing only variables within
    the rule radius of the slot that changed."""
    steps = sorted(set(int(t) for t in steps))
    out = {}
    prev_t, prev_g, prev_f = None, None, None
    r = rule.radius
    for t in steps:
        g = path.materialize_graph(t)
        if prev_g is None or t - prev_t > 1 or t == 0:
            f = evaluate_polysim(rule, g)
        else:
            slot = path.sigma(t)
            touched = set()
            for h in (prev_g, g):
                for u in (int(h.edge_var[slot]), int(h.edge_clause[slot]) + h.n):
                    touched.update(w for w in ball_vertices(h, u, r) if w < h.n)
            f = prev_f.copy()
            if touched:
                idx = sorted(touched)
                f[idx] = evaluate_polysim(rule, g, variables=idx)
        out[t] = f
        prev_t, prev_g, prev_f = t, g, f
    return out


def second_moment(rule, ensemble: dict, samples: int, seed=0) -> tuple[float, tuple]:
    """Monte Carlo E||f||^2 / n over random formulas with a 95% t interval.

    ``rule`` may be a PolySimRule or a plain local rule (outputs T/F as ±1).
    """
    n, m, k = ensemble["n"], ensemble["m"], ensemble["k"]
    vals = []
    for ss in _rng.spawn(seed, samples):
        a, b = ss.spawn(2)
        g = build_factor_graph(sample_formula(n, m, k, a), b)
        if isinstance(rule, PolySimRule):
            f = evaluate_polysim(rule, g)
        else:
            f = run_local(rule, g).astype(float)
        vals.append(float(f @ f) / n)
    v = np.array(vals)
    mean = float(v.mean())
    if samples < 2 or v.std() == 0:
        return mean, (mean, mean)
    half = float(stats.t.ppf(0.975, samples - 1) * v.std(ddof=1) / math.sqrt(samples))
    return mean, (mean - half, mean + half)
