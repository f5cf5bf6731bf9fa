"""Numerical constants of the overlap-gap threshold and the dart-game experiment.

Everything scalar is found by bracketed root finding or golden-section
search so the digits are reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special, stats

from . import rng as _rng

ROOT_TOL = 1e-15
EPS_GRID = 10_001


def iota(beta: float) -> float:
    if not beta > 1:
        raise ValueError(f"iota needs beta > 1, got {beta}")
    return beta / (1.0 - beta * math.exp(-(beta - 1.0)))


def _denominator(beta):
    return 1.0 - beta * np.exp(-(beta - 1.0))


@lru_cache(maxsize=None)
def beta_star() -> float:
    """Root of beta^2 exp(-(beta-1)) = 1 above 1, solved in log form."""
    return optimize.brentq(lambda b: 2 * math.log(b) - (b - 1), 2.0, 10.0, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps)


@lru_cache(maxsize=None)
def kappa_star() -> float:
    return iota(beta_star())


@dataclass(frozen=True)
class KappaSolution:
    kappa: float
    kappa_star: float
    beta_star: float
    beta_min: float
    beta_max: float
    beta_minus: float
    beta_plus: float
    epsilon: float
    grid_step: float
    residual: float          # max |iota(root) - kappa|
    star_residual: float     # |beta*^2 exp(-(beta*-1)) - 1|


def _root(f, lo, hi):
    return optimize.brentq(f, lo, hi, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps, maxiter=500)


def solve_kappa(kappa: float, grid: int = EPS_GRID) -> KappaSolution:
    bs, ks = beta_star(), kappa_star()
    if not kappa > ks:
        raise ValueError(f"kappa must exceed kappa* = {ks:.6f}, got {kappa}")
    f = lambda b: iota(b) - kappa
    # left branch is decreasing on (1, beta*); iota(1 + d) ~ 2 / d^2
    lo = 1.0 + min(1e-3, 1.0 / math.sqrt(kappa))
    while f(lo) <= 0:
        lo = 1.0 + (lo - 1.0) / 10
    b_min = _root(f, lo, bs)
    hi = 2 * bs
    while f(hi) <= 0:
        hi *= 2
    b_max = _root(f, bs, hi)
    b_minus, b_plus = (b_min + bs) / 2, (b_max + bs) / 2

    margin = lambda b: kappa * _denominator(b) - b
    xs = np.linspace(b_minus, b_plus, grid)
    vals = margin(xs)
    i = int(np.argmin(vals))
    eps = float(vals[i])
    # polish between the neighbouring grid points
    a, c = xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)]
    if c > a:
        res = optimize.minimize_scalar(margin, bounds=(a, c), method="bounded", options={"xatol": 1e-12})
        eps = min(eps, float(res.fun))
    residual = max(abs(iota(b_min) - kappa), abs(iota(b_max) - kappa))
    return KappaSolution(
        kappa, ks, bs, b_min, b_max, b_minus, b_plus, eps,
        (b_plus - b_minus) / (grid - 1), residual, abs(bs * bs * math.exp(-(bs - 1)) - 1),
    )


# ------------------------------------------------------------------ psi_N


def psi(N: int, lam: float) -> float:
    """(lam/(N+1)) / P[Pois(lam) > N]."""
    if N < 0 or int(N) != N:
        raise ValueError("N must be a non-negative integer")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return (lam / (N + 1)) / special.gammainc(N + 1, lam)


def psi_star(N: int, lam_max: float = 100.0) -> tuple[float, float]:
    """Minimiser and minimum of psi(N, .) over lam > 0.

    For N = 0 the function is increasing, so the infimum 1 sits at lam -> 0
    and (0.0, 1.0) is returned.
    """
    if N == 0:
        return 0.0, 1.0
    grid = np.geomspace(1e-3, lam_max, 4000)
    vals = np.array([psi(N, x) for x in grid])
    i = int(np.argmin(vals))
    if i == 0 or i == grid.size - 1:
        raise RuntimeError(f"psi_{N} minimum not bracketed on (1e-3, {lam_max})")
    res = optimize.minimize_scalar(lambda x: psi(N, x), bracket=(grid[i - 1], grid[i], grid[i + 1]),
                                   method="golden", tol=1e-12)
    lam = float(res.x)
    h = 1e-6 * max(lam, 1.0)
    slope = (psi(N, lam + h) - psi(N, lam - h)) / (2 * h)
    if abs(slope) > 1e-5:
        raise RuntimeError(f"psi_{N} derivative residual {slope:.2e} at the minimiser")
    return lam, float(res.fun)


# ------------------------------------------------------------------ free entropy


def free_entropy_bracket(prof, kappa: float, k: int, energy_mode: str = "auto", **energy_kw) -> float:
    """log 2 + H(profile) - kappa (log k / k) * energy for one overlap profile."""
    from .overlap import entropy, profile_energy

    e = profile_energy(prof, k, mode=energy_mode, **energy_kw)
    return math.log(2) + entropy(prof) - kappa * math.log(k) / k * e


# ------------------------------------------------------------------ dart game


def binary_entropy(q):
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(special.xlogy(q, q) + special.xlog1py(1 - q, -q))
    return h


@dataclass(frozen=True)
class QModel:
    """Finite model for xi: category j has probability weights[j] and the
    dart lands on the likely side with probability qs[j] (0 <= q <= 1)."""

    weights: tuple
    qs: tuple

    def __init__(self, weights, qs):
        w = np.asarray(weights, dtype=float)
        q = np.asarray(qs, dtype=float)
        if w.shape != q.shape or w.ndim != 1 or w.size == 0:
            raise ValueError("weights and qs must be equal-length 1-d sequences")
        if (w < 0).any() or abs(w.sum() - 1) > 1e-9:
            raise ValueError("weights must be a probability vector")
        if ((q < 0) | (q > 1)).any():
            raise ValueError("q values must lie in [0, 1]")
        object.__setattr__(self, "weights", tuple(w.tolist()))
        object.__setattr__(self, "qs", tuple(q.tolist()))

    def mean_entropy(self) -> float:
        return float(np.dot(self.weights, binary_entropy(self.qs)))

    def u_distribution(self):
        """Distinct values of u = -log P(outcome) and their probabilities."""
        acc: dict[float, float] = {}
        for w, q in zip(self.weights, self.qs):
            for p in (q, 1 - q):
                if p > 0 and w > 0:
                    u = -math.log(p)
                    u = 0.0 if u == 0 else u
                    acc[u] = acc.get(u, 0.0) + w * p
        vals = sorted(acc, reverse=True)
        return np.array(vals), np.array([acc[v] for v in vals])


def p_family(N: int, s: float) -> QModel:
    """q = min(s, 1/2) when xi <= s^N, else q = 0."""
    if not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    w = s ** N
    q = min(s, 0.5)
    if w >= 1:
        return QModel([1.0], [q])
    return QModel([w, 1 - w], [q, 0.0])


def solve_entropy_target(N: int, beta: float, k: int) -> float:
    """s in (0, 1/2] with s^N H(s) = beta log k / k."""
    target = beta * math.log(k) / k
    top = 0.5 ** N * math.log(2)
    if not 0 < target <= top:
        raise ValueError(f"entropy target {target:.4g} unreachable for the p_{N} family (max {top:.4g})")
    if target == top:
        return 0.5
    return _root(lambda s: s ** N * float(binary_entropy(s)) - target, 1e-300, 0.5)


def success_threshold(k: int) -> float:
    return math.log(k) + math.log(math.log(k))


def success_probability_exact(model: QModel, k: int, max_work: int = 5_000_000, cut: float = 1e-20):
    """P[sum of k i.i.d. u draws >= log k + log log k] by nested binomials.

    Returns None when the number of non-zero u values makes this too costly.
    """
    L = success_threshold(k)
    vals, probs = model.u_distribution()
    nz = vals > 0
    vals, probs = vals[nz], probs[nz]
    if vals.size == 0:
        return 1.0 if L <= 0 else 0.0
    if (k + 1) ** (vals.size - 1) > max_work and vals.size > 2:
        return None

    def rec(j, left, need, rest):
        # rest: probability mass of categories j.. (including the zero category)
        if need <= 1e-12:
            return 1.0
        if left == 0 or j == vals.size:
            return 0.0
        p = min(probs[j] / rest, 1.0) if rest > 0 else 0.0
        if j == vals.size - 1:
            cmin = math.ceil(need / vals[j] - 1e-12)
            return float(stats.binom.sf(cmin - 1, left, p))
        cs = np.arange(left + 1)
        pmf = stats.binom.pmf(cs, left, p)
        total = 0.0
        for c in np.flatnonzero(pmf > cut).tolist():
            total += pmf[c] * rec(j + 1, left - c, need - c * vals[j], rest - probs[j])
        return total

    return rec(0, k, L - 1e-12, 1.0)


@dataclass(frozen=True)
class ChernoffResult:
    k: int
    samples: int
    p_hat: float
    ci: tuple
    exact: float | None
    beta: float
    bound: float
    F: float
    mean_entropy: float


def _mc_successes(vals, probs, k, samples, seed, batch=20_000):
    L = success_threshold(k)
    probs = probs / probs.sum()
    nb = -(-samples // batch)
    hits = 0
    for i, g in enumerate(_rng.spawn(seed, nb)):
        size = min(batch, samples - i * batch)
        counts = np.random.default_rng(g).multinomial(k, probs, size=size)
        hits += int((counts @ vals >= L - 1e-12).sum())
    return hits


def chernoff_experiment(model: QModel, k: int, samples: int, seed=0, beta: float | None = None,
                        exact: bool = True) -> ChernoffResult:
    if k < 2:
        raise ValueError("k must be at least 2")
    vals, probs = model.u_distribution()
    eh = model.mean_entropy()
    if beta is None:
        beta = k * eh / math.log(k)
    elif abs(k * eh / math.log(k) - beta) > 1e-6 * max(beta, 1):
        raise ValueError(f"model entropy gives beta = {k * eh / math.log(k):.6g}, not {beta}")
    hits = _mc_successes(vals, probs, k, samples, seed)
    p_hat = hits / samples
    ci = stats.binomtest(hits, samples).proportion_ci(method="wilson")
    ex = success_probability_exact(model, k) if exact else None
    bound = 1 - beta * math.exp(-(beta - 1))
    F = (math.log(2) + k * eh) / math.log(k) / p_hat if p_hat > 0 else math.inf
    return ChernoffResult(k, samples, p_hat, (float(ci.low), float(ci.high)), ex, beta, bound, F, eh)


def F_exact(N: int, s: float, k: int) -> float:
    model = p_family(N, s)
    p = success_probability_exact(model, k)
    return (math.log(2) + k * model.mean_entropy()) / math.log(k) / p if p else math.inf


def minimize_F(N: int, k: int, points: int = 400, s_min: float = 1e-5) -> tuple[float, float]:
    """Grid search of the exact F over s for the p_N family; returns (s, F)."""
    ss = np.geomspace(s_min, 0.5, points)
    vals = np.array([F_exact(N, s, k) for s in ss])
    i = int(np.argmin(vals))
    return float(ss[i]), float(vals[i])


def constants_table(kappa: float | None = None, psi_N=(1, 2), chernoff=None, seed=0) -> list[tuple]:
    """Rows of (name, value, residual) for the CLI."""
    bs = beta_star()
    rows = [
        ("beta_star", bs, abs(bs * bs * math.exp(-(bs - 1)) - 1)),
        ("kappa_star", kappa_star(), 0.0),
    ]
    if kappa is not None:
        sol = solve_kappa(kappa)
        rows += [
            ("beta_min", sol.beta_min, abs(iota(sol.beta_min) - kappa)),
            ("beta_max", sol.beta_max, abs(iota(sol.beta_max) - kappa)),
            ("beta_minus", sol.beta_minus, 0.0),
            ("beta_plus", sol.beta_plus, 0.0),
            ("epsilon", sol.epsilon, sol.grid_step),
        ]
    for N in psi_N:
        lam, v = psi_star(N)
        h = 1e-6 * max(lam, 1.0)
        slope = (psi(N, lam + h) - psi(N, lam - h)) / (2 * h) if lam > 0 else 0.0
        rows += [(f"lambda_star_{N}", lam, 0.0), (f"psi_star_{N}", v, abs(slope))]
    if chernoff is not None:
        k, samples = chernoff
        s = solve_entropy_target(0, bs, k)
        res = chernoff_experiment(p_family(0, s), k, samples, seed=seed)
        rows += [
            ("chernoff_p_hat", res.p_hat, (res.ci[1] - res.ci[0]) / 2),
            ("chernoff_bound", res.bound, 0.0),
            ("chernoff_F", res.F, 0.0),
        ]
    return rows


def format_table(rows) -> str:
    lines = [f"{'name':<16} {'value':>22} {'residual':>12}"]
    lines += [f"{n:<16} {v:>22.15g} {r:>12.3e}" for n, v, r in rows]
    return "\n".join(lines)
