"""Named rule plugins.

Rules are created through :func:`get_rule` so that run manifests can record
``{"name", "version", "params"}`` and rebuild the same rule later.
"""
from __future__ import annotations

import hashlib
from typing import Callable

import numpy as np

from .ksat import F, T
from .local_engine import LocalRule, MemoryContext, MemoryRule

_REGISTRY: dict[str, tuple[int, Callable]] = {}


def register(name: str, version: int = 1):
    def deco(factory):
        _REGISTRY[name] = (version, factory)
        return factory
    return deco


def get_rule(name: str, **params):
    try:
        _, factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown rule {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(**params)


def available() -> list[str]:
    return sorted(_REGISTRY)


def manifest(name: str, **params) -> dict:
    version, _ = _REGISTRY[name]
    return {"name": name, "version": version, "params": params}


# ---------------------------------------------------------------- local rules


@register("const_true")
def const_true() -> LocalRule:
    return LocalRule("const_true", 0, lambda nb: T)


@register("majority_polarity")
def majority_polarity() -> LocalRule:
    """T iff the root has more positive than negative occurrences."""

    def fn(nb):
        pol = nb.root_polarities()
        return T if 2 * int(pol.sum()) > pol.size else F

    return LocalRule("majority_polarity", 1, fn)


@register("random_bit")
def random_bit() -> LocalRule:
    return LocalRule("random_bit", 0, lambda nb: T if int(nb.vword[0]) & 1 else F)


@register("certificate_hash")
def certificate_hash(radius: int = 2) -> LocalRule:
    """An arbitrary local function: one bit of a digest of the canonical ball."""

    def fn(nb):
        digest = hashlib.blake2b(repr(nb.certificate()).encode(), digest_size=8).digest()
        return T if digest[0] & 1 else F

    return LocalRule("certificate_hash", radius, fn, params={"radius": radius})


@register("biased_majority")
def biased_majority(radius: int = 1) -> LocalRule:
    """Probability rule (1 + #pos) / (2 + deg) at the root."""

    def fn(nb):
        pol = nb.root_polarities()
        return (1 + int(pol.sum())) / (2 + pol.size)

    return LocalRule("biased_majority", radius, fn, "probability", {"radius": radius})


@register("bp_decimation")
def bp_decimation(radius: int = 2, iterations: int = 10) -> LocalRule:
    """Root marginal of belief propagation for uniform solutions, run inside the ball."""

    def fn(nb):
        return _bp_marginal(nb, iterations)

    return LocalRule("bp_decimation", radius, fn, "probability", {"radius": radius, "iterations": iterations})


def _bp_marginal(nb, iterations: int) -> float:
    E = nb.num_edges
    if E == 0:
        return 0.5
    ev, ec, pol = nb.edge_u, nb.edge_c, nb.edge_pol
    # p_viol[e]: message var->clause, probability the var violates its literal
    p_viol = np.full(E, 0.5)
    nv = nb.size
    for _ in range(iterations):
        # clause -> var warnings: product of the other vars' violation probabilities
        logp = np.log(np.maximum(p_viol, 1e-300))
        tot = np.bincount(ec, weights=logp, minlength=nv)
        warn = np.exp(tot[ec] - logp)
        # var -> clause: combine warnings from the other clauses
        # factor for value "satisfies e's literal" vs "violates"
        bad_if_true = np.log(np.maximum(1 - warn * (~pol), 1e-300))
        bad_if_false = np.log(np.maximum(1 - warn * pol, 1e-300))
        st = np.bincount(ev, weights=bad_if_true, minlength=nv)
        sf = np.bincount(ev, weights=bad_if_false, minlength=nv)
        lt = st[ev] - bad_if_true
        lf = sf[ev] - bad_if_false
        pt = 1.0 / (1.0 + np.exp(np.clip(lf - lt, -700, 700)))
        p_viol = np.where(pol, 1 - pt, pt)
    logp = np.log(np.maximum(p_viol, 1e-300))
    tot = np.bincount(ec, weights=logp, minlength=nv)
    warn = np.exp(tot[ec] - logp)
    root = ev == 0
    lt = np.log(np.maximum(1 - warn[root] * (~pol[root]), 1e-300)).sum()
    lf = np.log(np.maximum(1 - warn[root] * pol[root], 1e-300)).sum()
    p = 1.0 / (1.0 + np.exp(np.clip(lf - lt, -700, 700)))
    return float(p) if np.isfinite(p) else 0.5


# ---------------------------------------------------------------- memory rules


@register("write_one")
def write_one() -> MemoryRule:
    def step(ctx: MemoryContext):
        ctx.set_mu(ctx.root, 1)

    return MemoryRule("write_one", 0, step, lambda v: F if v == 1 else T)


@register("clause_claim")
def clause_claim() -> MemoryRule:
    """1-local: an unclaimed clause claims its lowest-word variable with a
    positive occurrence (memory 1), or marks its lowest-word variable false
    (memory 2) when it has none.  Claimed variables end T, marked ones F."""

    def step(ctx: MemoryContext):
        es = ctx.incident(ctx.root)
        if es.size == 0:
            return
        vs = ctx.var_of(es)
        if (ctx.mu(vs) != 0).any():
            return
        words = ctx.edge_word(es)
        pos = ctx.pol(es)
        if pos.any():
            e = es[pos][np.argmin(words[pos])]
            ctx.set_mu(ctx.var_of(e), 1)
        else:
            ctx.set_mu(ctx.var_of(es[np.argmin(words)]), 2)

    return MemoryRule("clause_claim", 1, step, lambda v: F if v == 2 else T, acts_on="clause")


@register("sequential")
def sequential(inner: str = "biased_majority", **inner_params) -> MemoryRule:
    from .local_engine import sequential_as_memory_rule

    return sequential_as_memory_rule(get_rule(inner, **inner_params))


@register("fix1")
def fix1_rule() -> MemoryRule:
    from .fix1 import fix1_as_memory_rule

    return fix1_as_memory_rule()
