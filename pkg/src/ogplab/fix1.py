"""Phase one of the Fix heuristic, directly and as a 3-local memory rule.

Clause order follows the clause-vertex words and the literal order inside a
clause follows the edge words, so both implementations see the same
randomness when run on the same decorated graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .factor_graph import DecoratedFactorGraph, build_factor_graph
from .ksat import F, T, Formula, count_satisfied
from .local_engine import MemoryContext, MemoryRule

HIT, SAFE, FORCED = "hit", "safe", "forced"


@dataclass
class Fix1Result:
    assignment: np.ndarray
    Z: np.ndarray
    trace: list = field(default_factory=list)  # (clause, branch, j, variable); j is 1-based

    def unsatisfied_fraction(self, phi: Formula) -> float:
        return 1.0 - count_satisfied(self.assignment, phi) / max(phi.m, 1)


def is_z_safe(i: int, Z, phi: Formula) -> bool:
    """True iff x_i is not the only true literal of any clause under
    (T off Z, F on Z)."""
    Z = set(int(z) for z in Z)
    if i in Z:
        raise ValueError(f"variable {i} is already in Z")
    for row in phi.lits.tolist():
        if not any(lit == 2 * i + 1 for lit in row):
            continue
        others = [lit for lit in row if (lit >> 1) != i and ((lit & 1) == ((lit >> 1) not in Z))]
        if not others:
            return False
    return True


def _occurrences(var: np.ndarray, clause: np.ndarray, n: int):
    """Per-variable (clause, multiplicity) lists in CSR form."""
    key = var * (clause.max(initial=0) + 1) + clause
    uniq, cnt = np.unique(key, return_counts=True)
    vs = uniq // (clause.max(initial=0) + 1)
    cs = uniq % (clause.max(initial=0) + 1)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(vs, minlength=n), out=ptr[1:])
    return ptr, cs, cnt


def fix1_on_graph(g: DecoratedFactorGraph) -> Fix1Result:
    if g.k is None:
        raise ValueError("Fix1 needs a uniform clause width")
    n, m, k = g.n, g.m, g.k
    if k < 3:
        raise ValueError("Fix1 needs k >= 3")
    var2d = g.edge_var.reshape(m, k)
    pol2d = g.edge_pol.reshape(m, k)
    lit_order = np.argsort(g.eword.reshape(m, k), axis=1, kind="stable")
    all_neg = ~pol2d.any(axis=1)

    flat_v, flat_c, flat_p = g.edge_var, g.edge_clause, g.edge_pol
    pptr, pcs, pcnt = _occurrences(flat_v[flat_p], flat_c[flat_p], n)
    nptr, ncs, ncnt = _occurrences(flat_v[~flat_p], flat_c[~flat_p], n)
    true_count = pol2d.sum(axis=1).astype(np.int64)
    in_z = np.zeros(n, dtype=bool)

    def safe(w):
        lo, hi = pptr[w], pptr[w + 1]
        return bool((true_count[pcs[lo:hi]] > pcnt[lo:hi]).all())

    def add(w):
        in_z[w] = True
        lo, hi = pptr[w], pptr[w + 1]
        true_count[pcs[lo:hi]] -= pcnt[lo:hi]
        lo, hi = nptr[w], nptr[w + 1]
        true_count[ncs[lo:hi]] += ncnt[lo:hi]

    order = g.order()
    clauses = order[order >= n] - n
    clauses = clauses[all_neg[clauses]]
    h = (k + 1) // 2
    trace = []
    for c in clauses.tolist():
        vs = var2d[c, lit_order[c]].tolist()
        hit = next((v for v in vs if in_z[v]), None)
        if hit is not None:
            trace.append((c, HIT, 0, hit))
            continue
        for j in range(h - 1):
            if safe(vs[j]):
                add(vs[j])
                trace.append((c, SAFE, j + 1, vs[j]))
                break
        else:
            add(vs[h - 1])
            trace.append((c, FORCED, h, vs[h - 1]))
    x = np.where(in_z, F, T).astype(np.int8)
    return Fix1Result(x, np.flatnonzero(in_z), trace)


def run_fix1(phi: Formula, seed) -> Fix1Result:
    return fix1_on_graph(build_factor_graph(phi, seed))


def _z_safe_local(ctx: MemoryContext, w) -> bool:
    e2 = ctx.incident(w)
    e2 = e2[ctx.pol(e2)]
    if e2.size == 0:
        return True
    cs = np.unique(ctx.clause_of(e2))
    e3, owner = ctx.incident_many(cs)
    v3 = ctx.var_of(e3)
    z = ctx.mu(v3) == 1
    true = np.where(ctx.pol(e3), ~z, z) & (v3 != w)
    return bool((np.bincount(owner, weights=true, minlength=cs.size) > 0).all())


def _fix1_step(ctx: MemoryContext) -> None:
    es = ctx.incident(ctx.root)
    if es.size == 0 or ctx.pol(es).any():
        return
    es = es[np.argsort(ctx.edge_word(es), kind="stable")]
    vs = ctx.var_of(es)
    if (ctx.mu(vs) == 1).any():
        return
    h = (es.size + 1) // 2
    for j in range(h - 1):
        if _z_safe_local(ctx, vs[j]):
            ctx.set_mu(vs[j], 1)
            return
    ctx.set_mu(vs[h - 1], 1)


def fix1_as_memory_rule() -> MemoryRule:
    """Clause vertices act; memory 1 on a variable means it is in Z."""
    return MemoryRule("fix1", 3, _fix1_step, lambda v: F if v == 1 else T, acts_on="clause")
