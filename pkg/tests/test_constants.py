import math
import time

import numpy as np
import pytest

from ogplab import constants as C


def test_beta_star_and_kappa_star():
    t = time.perf_counter()
    b = C.beta_star()
    k = C.kappa_star()
    assert abs(b - 3.513) <= 1e-3
    assert abs(k - 4.911) <= 1e-3
    assert abs(b * b * math.exp(-(b - 1)) - 1) <= 1e-10
    assert C.iota(b) == pytest.approx(k, abs=1e-12)
    assert time.perf_counter() - t < 1.0


def test_iota_domain_and_divergence():
    assert C.iota(1.001) > 1e3
    with pytest.raises(ValueError):
        C.iota(1.0)
    with pytest.raises(ValueError):
        C.iota(0.5)


def test_iota_strictly_convex():
    grid = np.linspace(1.05, 12, 2000)
    vals = np.array([C.iota(b) for b in grid])
    assert np.all(np.diff(vals, 2) > 0)


def test_solve_kappa_six():
    sol = C.solve_kappa(6.0)
    assert sol.beta_min < C.beta_star() < sol.beta_max
    assert abs(C.iota(sol.beta_min) - 6) <= 1e-10
    assert abs(C.iota(sol.beta_max) - 6) <= 1e-10
    assert sol.beta_minus == pytest.approx((sol.beta_min + C.beta_star()) / 2)
    assert sol.beta_plus == pytest.approx((sol.beta_max + C.beta_star()) / 2)


@pytest.mark.parametrize("kappa", [5.0, 5.5, 6.0, 8.0])
def test_epsilon_positive(kappa):
    sol = C.solve_kappa(kappa)
    assert sol.epsilon > 0
    grid = np.linspace(sol.beta_minus, sol.beta_plus, 501)
    lhs = (grid + sol.epsilon) / (1 - grid * np.exp(-(grid - 1)))
    assert np.all(lhs <= kappa + 1e-9)


def test_solve_kappa_near_tangency_and_errors():
    sol = C.solve_kappa(C.kappa_star() + 1e-6)
    assert abs(sol.beta_min - C.beta_star()) < 1e-2
    assert abs(sol.beta_max - C.beta_star()) < 1e-2
    with pytest.raises(ValueError):
        C.solve_kappa(4.9)


def test_psi_values():
    lam1, v1 = C.psi_star(1)
    lam2, v2 = C.psi_star(2)
    assert abs(v1 - 1.675) <= 1e-3
    assert abs(v2 - 1.716) <= 1e-3
    for N, lam in ((1, lam1), (2, lam2)):
        h = 1e-5
        assert abs(C.psi(N, lam + h) - C.psi(N, lam - h)) / (2 * h) < 1e-5
    assert C.psi(1, 1e-4) > 1e3
    with pytest.raises(ValueError):
        C.psi(1, 0.0)


def test_psi_one_closed_form():
    lam = 2.7
    assert C.psi(1, lam) == pytest.approx((lam / 2) / (1 - (1 + lam) * math.exp(-lam)), rel=1e-13)


def test_psi_zero_increasing_from_one():
    lams = np.geomspace(1e-6, 20, 200)
    vals = np.array([C.psi(0, x) for x in lams])
    assert np.all(np.diff(vals) > 0)
    assert abs(vals[0] - 1) < 1e-5


def test_psi_star_two_is_largest_of_small_N():
    vals = [C.psi_star(N)[1] for N in range(1, 6)]
    assert int(np.argmax(vals)) == 1


def test_entropy_target_solver():
    k = 10_000
    s = C.solve_entropy_target(2, C.beta_star(), k)
    model = C.p_family(2, s)
    assert model.mean_entropy() == pytest.approx(C.beta_star() * math.log(k) / k, rel=1e-10)
    with pytest.raises(ValueError):
        C.solve_entropy_target(2, 1000.0, 10)


def test_chernoff_half_model_always_succeeds():
    res = C.chernoff_experiment(C.QModel([1.0], [0.5]), 50, 2000, seed=1)
    assert res.p_hat == 1.0


def test_chernoff_mc_matches_exact():
    k = 1000
    s = C.solve_entropy_target(1, C.beta_star(), k)
    res = C.chernoff_experiment(C.p_family(1, s), k, 40_000, seed=3)
    assert res.exact is not None
    assert abs(res.p_hat - res.exact) <= 4 * math.sqrt(res.exact * (1 - res.exact) / 40_000) + 1e-9
    assert res.ci[0] <= res.p_hat <= res.ci[1]


def test_chernoff_exact_against_bruteforce_small():
    # tiny k: enumerate all outcomes of the k i.i.d. u draws
    import itertools

    k = 6
    model = C.QModel([0.3, 0.7], [0.2, 0.45])
    vals, probs = model.u_distribution()
    L = math.log(k) + math.log(math.log(k))
    brute = 0.0
    for combo in itertools.product(range(len(vals)), repeat=k):
        if sum(vals[c] for c in combo) >= L - 1e-12:
            brute += math.prod(probs[c] for c in combo)
    assert C.success_probability_exact(model, k) == pytest.approx(brute, abs=1e-12)


def test_free_entropy_bracket_independent_assignments():
    from ogplab.overlap import energy, entropy, profile

    rng = np.random.default_rng(0)
    k, n = 3, 4000
    ys = rng.choice([-1, 1], size=(k + 1, n)).astype(np.int8)
    prof = profile(ys)
    assert entropy(prof) == pytest.approx(k * math.log(2), abs=0.01)
    val = C.free_entropy_bracket(prof, 5.0, k)
    e = energy(ys)
    assert val == pytest.approx(math.log(2) + entropy(prof) - 5.0 * math.log(k) / k * e, abs=1e-12)
    # slope in kappa is -(log k / k) * energy
    assert C.free_entropy_bracket(prof, 6.0, k) < val


def test_energy_increment_bound_trend():
    sol = C.solve_kappa(6.0)
    for k in (50, 100, 500):
        for beta in np.linspace(sol.beta_minus, sol.beta_plus, 11):
            incr = beta * math.log(k) / k - 6.0 * (math.log(k) / k) * (1 - beta * math.exp(-(beta - 1)))
            assert incr <= -sol.epsilon * math.log(k) / k + 1e-12
