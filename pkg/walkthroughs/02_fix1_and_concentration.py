"""Fix1 two ways (direct and as a 3-local memory rule) and the spread of
the satisfied-clause count across independent formulas."""
import math
import time

import numpy as np

from ogplab import factor_graph as fg
from ogplab import harness as hs
from ogplab import local_engine as le
from ogplab.fix1 import fix1_as_memory_rule, fix1_on_graph
from ogplab.ksat import count_satisfied, sample_formula

n, k = 5000, 5
m = math.floor(0.8 * 2 ** k * math.log(k) / k * n)
phi = sample_formula(n, m, k, [0, 0])
g = fg.build_factor_graph(phi, [0, 1])

t = time.perf_counter()
res = fix1_on_graph(g)
t_direct = time.perf_counter() - t
t = time.perf_counter()
x = le.run_local_memory(fix1_as_memory_rule(), g)
t_mem = time.perf_counter() - t
print(f"n={n} k={k} m={m}")
print(f"direct   {t_direct:.2f}s  |Z|/n = {res.Z.size / n:.4f}")
print(f"memory   {t_mem:.2f}s  identical output: {np.array_equal(x, res.assignment)}")
print(f"unsatisfied fraction {1 - count_satisfied(x, phi) / m:.5f}")
print(f"first trace entries: {res.trace[:3]}")
print()

for n in (1000, 10_000):
    rep = hs.concentration_experiment("fix1", {"n": n, "m": 2 * n, "k": 3}, 0.0, range(20))
    print(f"n={n:>6}: mean Y={rep.mean:.1f}  max|Y-mean|={rep.max_dev:.1f}  "
          f"yardstick m/log n={rep.yardstick:.1f}  flagged={len(rep.flagged)}")
