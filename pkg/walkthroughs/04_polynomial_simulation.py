"""Coefficients of the degree-D polynomial that reproduces a local rule on
tree-shaped neighbourhoods, and a check against the D-truncated rule."""
import numpy as np

from ogplab import factor_graph as fg
from ogplab import local_engine as le
from ogplab import polysim as ps
from ogplab import rules
from ogplab.ksat import ERR, sample_formula, strict_round

src = rules.get_rule("majority_polarity")
rule = ps.PolySimRule(src, 4)
g = fg.build_factor_graph(sample_formula(20, 8, 3, 1), 1)
coef = ps.coefficients(rule, g, 0)
print(f"variable 0: {len(coef)} monomials, non-zero {sum(1 for h in coef.values() if h)}")
for S, h in sorted(coef.items(), key=lambda kv: len(kv[0]))[:8]:
    print(f"  edges {sorted(S)} -> {h:+d}")

tr = ps.d_truncate(src, 4)
bad = checked = 0
for s in range(200):
    g = fg.build_factor_graph(sample_formula(30, 10, 3, s), [s, 1])
    t = le.run_local(tr, g)
    ok = t != ERR
    bad += int((strict_round(ps.evaluate_polysim(rule, g)[ok]) != t[ok]).sum())
    checked += int(ok.sum())
print(f"{checked} tree-shaped coordinates checked, {bad} mismatches")
print("second moment E|f|^2/n at n=60:", ps.second_moment(rule, {"n": 60, "m": 40, "k": 3}, 16, seed=0))
