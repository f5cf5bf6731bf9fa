import numpy as np
import pytest

from ogplab import factor_graph as fg
from ogplab import fix1
from ogplab import local_engine as le
from ogplab.ksat import F, T, Formula, clause_satisfied, literal, sample_formula


def lits(*rows):
    return np.array([[literal(abs(v) - 1, v > 0) for v in row] for row in rows])


def test_z_safe_hand_cases():
    assert fix1.is_z_safe(0, set(), Formula(3, np.zeros((0, 3), int)))
    assert not fix1.is_z_safe(0, set(), Formula(3, lits([1, -2, -3])))
    assert fix1.is_z_safe(0, set(), Formula(3, lits([-1, -2, -3])))
    # x1 shares the clause with x2 true: not sole
    assert fix1.is_z_safe(0, set(), Formula(3, lits([1, 2, -3])))
    # x2 in Z makes x̄2 true, so x1 is not alone
    assert fix1.is_z_safe(0, {1}, Formula(3, lits([1, -2, 3]))) is True
    with pytest.raises(ValueError):
        fix1.is_z_safe(0, {0}, Formula(3, lits([1, 2, 3])))


def test_duplicate_positive_occurrence_is_still_sole():
    assert not fix1.is_z_safe(0, set(), Formula(2, lits([1, 1, -2])))


def test_single_negative_clause():
    phi = Formula(3, lits([-1, -2, -3]))
    for s in range(20):
        g = fg.build_factor_graph(phi, s)
        res = fix1.fix1_on_graph(g)
        first = int(g.edge_var[np.argsort(g.eword, kind="stable")[0]])
        assert list(res.Z) == [first]
        assert res.trace == [(0, fix1.SAFE, 1, first)]
        assert clause_satisfied(res.assignment, phi).all()


def test_all_positive_formula():
    phi = Formula(5, lits([1, 2, 3], [4, 5, 1], [2, 2, 3]))
    res = fix1.run_fix1(phi, 3)
    assert res.Z.size == 0 and (res.assignment == T).all()
    g = fg.build_factor_graph(phi, 3)
    assert (le.run_local_memory(fix1.fix1_as_memory_rule(), g) == T).all()


def test_forced_branch():
    # x1 is sole true literal of (x1 ∨ x̄4 ∨ x̄5), so slot 1 is unsafe and slot 2 is forced (k=3)
    phi = Formula(5, lits([-1, -2, -3], [1, -4, -5]))
    for s in range(40):
        g = fg.build_factor_graph(phi, s)
        order = np.argsort(g.eword[:3], kind="stable")
        first, second = int(g.edge_var[order[0]]), int(g.edge_var[order[1]])
        res = fix1.fix1_on_graph(g)
        if first == 0:
            assert res.trace == [(0, fix1.FORCED, 2, second)]
        else:
            assert res.trace == [(0, fix1.SAFE, 1, first)]


def test_invariants_random():
    for s in range(60):
        phi = sample_formula(40, 60, 3, s)
        res = fix1.run_fix1(phi, s + 1)
        neg = ~phi.positive.any(axis=1)
        neg_vars = set(phi.variables[neg].ravel().tolist())
        assert set(res.Z.tolist()) <= neg_vars
        assert clause_satisfied(res.assignment, phi)[neg].all()
        assert np.array_equal(res.assignment == F, np.isin(np.arange(40), res.Z))
        added = [t for t in res.trace if t[1] != fix1.HIT]
        assert len(added) == res.Z.size
        assert len(res.trace) == int(neg.sum())


def test_deterministic():
    phi = sample_formula(40, 80, 4, 9)
    a, b = fix1.run_fix1(phi, 2), fix1.run_fix1(phi, 2)
    assert a.trace == b.trace and np.array_equal(a.assignment, b.assignment)


def test_memory_rule_matches_direct():
    rule = fix1.fix1_as_memory_rule()
    assert rule.radius == 3
    for s in range(1000):
        phi = sample_formula(40, 60, 3, s)
        g = fg.build_factor_graph(phi, [s, 1])
        direct = fix1.fix1_on_graph(g).assignment
        assert np.array_equal(direct, le.run_local_memory(rule, g, checked=(s % 50 == 0)))


def test_memory_rule_is_three_local_checked():
    rule = fix1.fix1_as_memory_rule()
    for s in range(30):
        g = fg.build_factor_graph(sample_formula(30, 90, 4, s), s)
        le.run_local_memory(rule, g, checked=True)
