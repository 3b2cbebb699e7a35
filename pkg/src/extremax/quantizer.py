"""Scalar quantizer design and exact evaluation for argmax, max and pair targets.

Homogeneous quantizers (HomSQ) share one set of decision boundaries across
users; heterogeneous ones (HetSQ) carry one row per user. Two-user Bayes
estimators are evaluated exactly, with 1-D root finding where the optimal
estimate has no closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .errors import ConvergenceError, DegenerateIntervalError, DomainError
from .lossless import merge_pattern
from .sources import (ContinuousSource, binary_entropy, conditional_mean, entropy,
                      expected_max, partial_moment)

TARGETS = ("argmax", "max", "pair")


@dataclass(frozen=True)
class HomSQ:
    boundaries: tuple

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        if len(b) < 2:
            raise DomainError("a quantizer needs at least two boundaries")
        if any(y < x for x, y in zip(b, b[1:])):
            raise DomainError("boundaries must be nondecreasing")
        object.__setattr__(self, "boundaries", b)

    @property
    def k(self) -> int:
        return len(self.boundaries) - 1

    def as_het(self, n_users: int = 2) -> "HetSQ":
        return HetSQ(tuple(self.boundaries for _ in range(n_users)))

    def quantize(self, x: np.ndarray) -> np.ndarray:
        """0-based bin index for each sample."""
        inner = np.asarray(self.boundaries[1:-1])
        return np.searchsorted(inner, x, side="right")


@dataclass(frozen=True)
class HetSQ:
    rows: tuple

    def __post_init__(self):
        rows = tuple(tuple(float(x) for x in r) for r in self.rows)
        if not rows:
            raise DomainError("need at least one user row")
        for r in rows:
            if len(r) < 2 or any(y < x for x, y in zip(r, r[1:])):
                raise DomainError("each row must be a nondecreasing boundary list")
        if len({(r[0], r[-1]) for r in rows}) != 1:
            raise DomainError("all rows must share the support endpoints")
        object.__setattr__(self, "rows", rows)

    @property
    def n_users(self) -> int:
        return len(self.rows)

    def bins(self, user: int) -> int:
        return len(self.rows[user - 1]) - 1

    def quantize(self, user: int, x: np.ndarray) -> np.ndarray:
        inner = np.asarray(self.rows[user - 1][1:-1])
        return np.searchsorted(inner, x, side="right")


@dataclass(frozen=True)
class RatePoint:
    rate_bits: float
    rate_per_user: tuple
    distortion: float
    normalized_distortion: float
    k: int
    label: str
    boundaries: tuple = field(default=(), compare=False)

    @property
    def rate_per_user_mean(self) -> float:
        return self.rate_bits / len(self.rate_per_user)

    def to_dict(self) -> dict:
        return {"label": self.label, "k": self.k, "rate_bits": self.rate_bits,
                "rate_per_user_bits": self.rate_per_user_mean,
                "rate_per_user": list(self.rate_per_user), "distortion": self.distortion,
                "normalized_distortion": self.normalized_distortion,
                "boundaries": [list(r) for r in self.boundaries]}


# ---------------------------------------------------------------- bin statistics

@dataclass(frozen=True)
class _Bins:
    edges: np.ndarray    # l_0..l_K
    F: np.ndarray        # F(l_0)..F(l_K)
    p: np.ndarray        # p_1..p_K
    M: np.ndarray        # partial first moments per bin


def _check_support(boundaries: Sequence[float], src: ContinuousSource) -> None:
    if abs(boundaries[0] - src.x_min) > 1e-12 or abs(boundaries[-1] - src.x_max) > 1e-12:
        raise DomainError("outer boundaries must equal the support endpoints")


def bin_stats(boundaries: Sequence[float], src: ContinuousSource) -> _Bins:
    _check_support(boundaries, src)
    edges = np.asarray(boundaries, dtype=float)
    F = np.array([src.cdf(x) for x in edges])
    F[0], F[-1] = 0.0, 1.0
    p = np.diff(F)
    M = np.array([partial_moment(src, a, b) if b > a else 0.0 for a, b in zip(edges[:-1], edges[1:])])
    return _Bins(edges, F, p, M)


def bin_probabilities(boundaries: Sequence[float], src: ContinuousSource) -> np.ndarray:
    F = np.array([src.cdf(x) for x in boundaries])
    F[0], F[-1] = 0.0, 1.0
    return np.clip(np.diff(F), 0.0, None)


# ---------------------------------------------------------------- HomSQ argmax

def argmax_estimator_mean(q: HomSQ, src: ContinuousSource, n: int) -> float:
    """E[X at the estimated argmax] = sum_j E_j (F_j^N - F_{j-1}^N)."""
    if n < 1:
        raise DomainError("n must be at least 1")
    b = bin_stats(q.boundaries, src)
    total = []
    for j in range(q.k):
        if b.p[j] <= 0:
            continue
        total.append(b.M[j] / b.p[j] * (b.F[j + 1] ** n - b.F[j] ** n))
    return math.fsum(total)


def homsq_argmax_distortion(q: HomSQ, src: ContinuousSource, n: int) -> float:
    return expected_max(src, n) - argmax_estimator_mean(q, src, n)


def argmax_mean_gradient(q: HomSQ, src: ContinuousSource, n: int, k: int) -> float:
    """Derivative of E[X at the estimated argmax] with respect to interior boundary k."""
    if not 1 <= k <= q.k - 1:
        raise DomainError("k must index an interior boundary")
    b = bin_stats(q.boundaries, src)
    pk, pk1 = b.p[k - 1], b.p[k]
    if pk <= 0 or pk1 <= 0:
        raise DegenerateIntervalError("a bin next to the boundary has zero probability")
    lk = b.edges[k]
    Ek, Ek1 = b.M[k - 1] / pk, b.M[k] / pk1
    Fm, F0, Fp = b.F[k - 1], b.F[k], b.F[k + 1]
    fk = src.pdf(lk)
    return fk * ((Fp ** n - F0 ** n) * (Ek1 - lk) / pk1
                 + (F0 ** n - Fm ** n) * (lk - Ek) / pk
                 - n * F0 ** (n - 1) * (Ek1 - Ek))


def argmax_mean_gradient_two_users(q: HomSQ, src: ContinuousSource, k: int) -> float:
    """N = 2 form: f(l_k) times the integral of (x - l_k) f(x) over [l_{k-1}, l_{k+1}]."""
    if not 1 <= k <= q.k - 1:
        raise DomainError("k must index an interior boundary")
    lo, mid, hi = q.boundaries[k - 1], q.boundaries[k], q.boundaries[k + 1]
    mass = src.cdf(hi) - src.cdf(lo)
    return src.pdf(mid) * (partial_moment(src, lo, hi) - mid * mass)


def argmax_distortion_gradient(q: HomSQ, src: ContinuousSource, n: int, k: int) -> float:
    return -argmax_mean_gradient(q, src, n, k)


def _distortion_gradient_vector(q: HomSQ, src: ContinuousSource, n: int) -> np.ndarray:
    return np.array([argmax_distortion_gradient(q, src, n, k) for k in range(1, q.k)])


def homsq_rate(q: HomSQ, src: ContinuousSource, n: int) -> float:
    return n * entropy(bin_probabilities(q.boundaries, src))


def rate_gradient(q: HomSQ, src: ContinuousSource, n: int, k: int) -> float:
    """d(N H(U))/d l_k = N f_k log2(p_{k+1} / p_k)."""
    if not 1 <= k <= q.k - 1:
        raise DomainError("k must index an interior boundary")
    p = bin_probabilities(q.boundaries, src)
    if p[k - 1] <= 0 or p[k] <= 0:
        raise DegenerateIntervalError("a bin next to the boundary has zero probability")
    return n * src.pdf(q.boundaries[k]) * math.log2(p[k] / p[k - 1])


def homsq_rate_point(q: HomSQ, src: ContinuousSource, n: int, label: str = "HomSQ") -> RatePoint:
    h = entropy(bin_probabilities(q.boundaries, src))
    d = homsq_argmax_distortion(q, src, n)
    return RatePoint(n * h, tuple([h] * n), d, d / expected_max(src, n), q.k, label,
                     tuple([q.boundaries]))


# ---------------------------------------------------------------- HomSQ design

def _from_interior(src: ContinuousSource, interior: Sequence[float]) -> HomSQ:
    return HomSQ((src.x_min, *interior, src.x_max))


def _quasi_random_starts(src: ContinuousSource, k: int, count: int, seed: int) -> list:
    if k < 2 or count <= 0:
        return []
    m = max(int(math.ceil(math.log2(count))), 0)
    pts = qmc.Sobol(d=k - 1, scramble=True, seed=seed).random_base2(m)[:count]
    width = src.x_max - src.x_min
    return [np.sort(src.x_min + width * row) for row in pts]


def _equal_probability_interior(src: ContinuousSource, k: int) -> np.ndarray:
    u = np.arange(1, k) / k
    if src.ppf is not None:
        return np.asarray(src.ppf(u), dtype=float)
    return np.array([optimize.brentq(lambda x, t=t: src.cdf(x) - t, src.x_min, src.x_max) for t in u])


def _polish_stationary(src: ContinuousSource, n: int, interior: np.ndarray, tol: float):
    """Solve grad D = 0 from a nearby point; returns (interior, residual) or None."""
    def resid(x):
        if np.any(np.diff(np.concatenate(([src.x_min], x, [src.x_max]))) <= 0):
            return np.full_like(x, 1e3)
        return _distortion_gradient_vector(_from_interior(src, x), src, n)

    sol = optimize.root(resid, interior, method="hybr", tol=1e-15)
    x = sol.x
    full = np.concatenate(([src.x_min], x, [src.x_max]))
    if np.any(np.diff(full) <= 0):
        return None
    r = float(np.max(np.abs(resid(x)))) if len(x) else 0.0
    return x, r


def design_min_distortion_homsq(src: ContinuousSource, n: int, k_bins: int, n_starts: int = 50,
                                seed: int = 0, tol: float = 1e-9, patience: int = 6) -> HomSQ:
    """Minimum-distortion HomSQ for argmax, from interior stationary points of D.

    Multistart: equal-probability and equal-width boundaries, then Sobol
    points. Each start runs L-BFGS-B on D (with the analytic gradient) and is
    then polished by a root solve of the first-order conditions. The search
    stops once ``patience`` consecutive converged starts fail to improve D.
    """
    if k_bins < 1:
        raise DomainError("k_bins must be at least 1")
    if n < 1:
        raise DomainError("n must be at least 1")
    if k_bins == 1:
        return HomSQ((src.x_min, src.x_max))
    emax = expected_max(src, n)
    width = src.x_max - src.x_min

    def objective(x):
        xs = np.sort(np.clip(x, src.x_min, src.x_max))
        q = _from_interior(src, xs)
        d = emax - argmax_estimator_mean(q, src, n)
        try:
            g = _distortion_gradient_vector(q, src, n)
        except DegenerateIntervalError:
            g = np.zeros_like(xs)
        order = np.argsort(x)
        grad = np.empty_like(g)
        grad[order] = g
        return d, grad

    starts = [_equal_probability_interior(src, k_bins),
              src.x_min + width * np.arange(1, k_bins) / k_bins]
    starts += _quasi_random_starts(src, k_bins, max(n_starts - 2, 0), seed)
    best, best_d = None, math.inf
    best_any, best_any_d = None, math.inf
    stale = 0
    bounds = [(src.x_min, src.x_max)] * (k_bins - 1)
    for x0 in starts:
        res = optimize.minimize(objective, np.asarray(x0, dtype=float), jac=True, method="L-BFGS-B",
                                bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 2000})
        x = np.sort(res.x)
        d = objective(x)[0]
        if d < best_any_d:
            best_any, best_any_d = x, d
        polished = _polish_stationary(src, n, x, tol)
        if polished is None or polished[1] >= tol:
            continue
        dp = objective(polished[0])[0]
        if dp < best_d - 1e-13:
            best, best_d, stale = polished[0], dp, 0
        else:
            stale += 1
            if stale >= patience:
                break
    if best is None:
        raise ConvergenceError("no start met the stationarity tolerance",
                               best=_from_interior(src, best_any))
    return _from_interior(src, best)


def stationarity_residual(q: HomSQ, src: ContinuousSource, n: int) -> float:
    if q.k < 2:
        return 0.0
    return float(np.max(np.abs(_distortion_gradient_vector(q, src, n))))


# ---------------------------------------------------------------- uniform multiuser design

def uniform_argmax_distortion(boundaries: Sequence[float], n: int) -> float:
    """D(l) = N/(N+1) - sum_j (l_{j-1} + l_j)(l_j^N - l_{j-1}^N)/2 for Uniform(0, 1)."""
    l = np.asarray(boundaries, dtype=float)
    return n / (n + 1) - float(np.sum((l[:-1] + l[1:]) * (l[1:] ** n - l[:-1] ** n))) / 2


def _uniform_fixed_point_residual(l: np.ndarray, n: int) -> np.ndarray:
    lo, mid, hi = l[:-2], l[1:-1], l[2:]
    return mid ** (n - 1) - (hi ** n - lo ** n) / (n * (hi - lo))


def _next_boundary(prev: float, cur: float, n: int) -> float:
    target = n * cur ** (n - 1)

    def g(y):
        # (y^N - prev^N)/(y - prev) as a sum of powers, stable near y = prev
        return sum(y ** (n - 1 - i) * prev ** i for i in range(n)) - target

    hi = max(2 * cur, cur + 1e-12, 1.0)
    while g(hi) < 0:
        hi *= 2
        if hi > 1e6:
            return math.inf
    return optimize.brentq(g, cur, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)


def multiuser_uniform_argmax_design(n: int, k_bins: int, tol: float = 1e-9) -> HomSQ:
    """Optimal argmax HomSQ for N i.i.d. Uniform(0, 1) users.

    Interior boundaries satisfy l_j^{N-1} = (l_{j+1}^N - l_{j-1}^N) / (N (l_{j+1} - l_{j-1})).
    Solved by shooting on l_1 (the recursion is monotone in l_1), then
    polished with a Newton-type root solve of the whole system.
    """
    if n < 1 or k_bins < 1:
        raise DomainError("need n >= 1 and k_bins >= 1")
    if k_bins == 1:
        return HomSQ((0.0, 1.0))
    if n == 1:
        # D does not depend on the boundaries; return the uniform grid
        return HomSQ(tuple(np.arange(k_bins + 1) / k_bins))

    def shoot(s):
        l = [0.0, s]
        for _ in range(k_bins - 1):
            nxt = _next_boundary(l[-2], l[-1], n)
            l.append(nxt)
            if not math.isfinite(nxt) or nxt > 2.0:
                return l, math.inf
        return l, l[-1]

    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        _, end = shoot(mid)
        if end > 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-17:
            break
    l, _ = shoot(lo)
    l = np.array(l[:k_bins] + [1.0])
    l[0] = 0.0

    def resid(x):
        return _uniform_fixed_point_residual(np.concatenate(([0.0], x, [1.0])), n)

    sol = optimize.root(resid, l[1:-1], method="hybr", tol=1e-15)
    x = sol.x if np.max(np.abs(resid(sol.x))) <= np.max(np.abs(resid(l[1:-1]))) else l[1:-1]
    full = np.concatenate(([0.0], x, [1.0]))
    r = float(np.max(np.abs(resid(x))))
    if r >= tol or np.any(np.diff(full) <= 0):
        raise ConvergenceError(f"fixed-point residual {r:.3e}", best=HomSQ(tuple(full)))
    return HomSQ(tuple(full))


# ---------------------------------------------------------------- entropy-constrained design

@dataclass(frozen=True)
class ConstrainedDesign:
    quantizer: HomSQ
    distortion: float
    rate_bits: float
    mu_rate: float
    kkt_residual: float
    active: bool


def _kkt(q: HomSQ, src: ContinuousSource, n: int):
    """Least-squares rate multiplier and stationarity residual over nondegenerate boundaries."""
    p = bin_probabilities(q.boundaries, src)
    gd, gr = [], []
    for k in range(1, q.k):
        if p[k - 1] > 1e-14 and p[k] > 1e-14:
            gd.append(argmax_distortion_gradient(q, src, n, k))
            gr.append(rate_gradient(q, src, n, k))
    if not gd:
        return 0.0, 0.0
    gd, gr = np.array(gd), np.array(gr)
    denom = float(gr @ gr)
    mu = max(0.0, -float(gd @ gr) / denom) if denom > 0 else 0.0
    return mu, float(np.max(np.abs(gd + mu * gr)))


def design_entropy_constrained_homsq(src: ContinuousSource, n: int, k_bins: int, r0: float,
                                     n_starts: int = 20, seed: int = 0) -> ConstrainedDesign:
    """Minimize D subject to N H(U) <= r0 with at most k_bins bins (bins may collapse)."""
    if r0 < 0:
        raise DomainError("rate limit must be nonnegative")
    if k_bins < 1:
        raise DomainError("k_bins must be at least 1")
    emax = expected_max(src, n)
    free = design_min_distortion_homsq(src, n, k_bins, n_starts=min(n_starts, 10), seed=seed)
    r_free = homsq_rate(free, src, n)
    if r_free <= r0 + 1e-9:
        mu, res = _kkt(free, src, n)
        return ConstrainedDesign(free, emax - argmax_estimator_mean(free, src, n), r_free, 0.0, res, False)

    def D(x):
        return emax - argmax_estimator_mean(_from_interior(src, np.sort(np.clip(x, src.x_min, src.x_max))), src, n)

    def R(x):
        return homsq_rate(_from_interior(src, np.sort(np.clip(x, src.x_min, src.x_max))), src, n)

    starts = []
    # smaller designs padded with collapsed bins are feasible whenever their rate fits
    for k in range(1, k_bins):
        qk = design_min_distortion_homsq(src, n, k, n_starts=5, seed=seed)
        if homsq_rate(qk, src, n) <= r0 + 1e-12:
            pad = list(qk.boundaries[1:-1]) + [src.x_max] * (k_bins - k)
            starts.append(np.array(pad[:k_bins - 1], dtype=float))
    starts += [np.asarray(free.boundaries[1:-1]), _equal_probability_interior(src, k_bins)]
    starts += _quasi_random_starts(src, k_bins, n_starts, seed)
    cons = [{"type": "ineq", "fun": lambda x: r0 - R(x)},
            {"type": "ineq", "fun": lambda x: np.diff(np.concatenate(([src.x_min], x, [src.x_max])))}]
    best = None
    for x0 in starts:
        if k_bins == 1:
            break
        res = optimize.minimize(D, x0, method="SLSQP", constraints=cons,
                                bounds=[(src.x_min, src.x_max)] * (k_bins - 1),
                                options={"ftol": 1e-15, "maxiter": 500})
        x = np.sort(np.clip(res.x, src.x_min, src.x_max))
        if R(x) > r0 + 1e-9:
            x = _project_rate(src, n, x, r0)
            if x is None:
                continue
        x = _polish_constrained(src, n, x, r0)
        d = D(x)
        if best is None or d < best[0] - 1e-13:
            best = (d, x)
    if best is None:
        q1 = HomSQ((src.x_min, src.x_max))
        return ConstrainedDesign(q1, emax - argmax_estimator_mean(q1, src, n), 0.0, 0.0, 0.0, True)
    q = _from_interior(src, best[1])
    mu, res = _kkt(q, src, n)
    return ConstrainedDesign(q, best[0], homsq_rate(q, src, n), mu, res, True)


def _project_rate(src, n, x, r0):
    # shrink toward the collapsed quantizer until the rate fits
    top = np.full_like(x, src.x_max)
    for t in np.linspace(0, 1, 101)[1:]:
        y = np.sort((1 - t) * x + t * top)
        if homsq_rate(_from_interior(src, y), src, n) <= r0 + 1e-12:
            return y
    return None


def _polish_constrained(src, n, x, r0):
    """Newton polish of the active KKT system when all bins are nondegenerate."""
    q = _from_interior(src, x)
    p = bin_probabilities(q.boundaries, src)
    if np.any(p < 1e-9) or abs(homsq_rate(q, src, n) - r0) > 1e-4:
        return x
    mu0, _ = _kkt(q, src, n)

    def sys(z):
        y, mu = z[:-1], z[-1]
        full = np.concatenate(([src.x_min], y, [src.x_max]))
        if np.any(np.diff(full) <= 0):
            return np.full_like(z, 1e3)
        qq = _from_interior(src, y)
        g = [argmax_distortion_gradient(qq, src, n, k) + mu * rate_gradient(qq, src, n, k)
             for k in range(1, qq.k)]
        return np.array(g + [homsq_rate(qq, src, n) - r0])

    sol = optimize.root(sys, np.concatenate((x, [mu0])), method="hybr", tol=1e-15)
    y = sol.x[:-1]
    full = np.concatenate(([src.x_min], y, [src.x_max]))
    if np.any(np.diff(full) <= 0) or sol.x[-1] < 0:
        return x
    if homsq_rate(_from_interior(src, y), src, n) > r0 + 1e-9:
        return x
    if np.max(np.abs(sys(sol.x))) < np.max(np.abs(sys(np.concatenate((x, [mu0]))))):
        return y
    return x


# ---------------------------------------------------------------- HetSQ from coloring

def staggered_rate(p: Sequence[float], n: int) -> float:
    """(N - 2) H(U) + delta, delta = sum_k p_k log2 1/((p_{k-1}+p_k)(p_k+p_{k+1}))."""
    p = [float(x) for x in p if x > 0]
    padded = [0.0] + p + [0.0]
    delta = math.fsum(padded[k] * -math.log2((padded[k - 1] + padded[k]) * (padded[k] + padded[k + 1]))
                      for k in range(1, len(padded) - 1))
    return (n - 2) * entropy(p) + delta


def hetsq_from_homsq(q: HomSQ, src: ContinuousSource, n: int, distortion: Optional[float] = None,
                     offset: int = 0):
    """Merge consecutive bins per user following the optimal argmax coloring.

    ``offset`` 0 gives user 1 the merges whose lower bin index has the parity
    of n; offset 1 swaps the patterns of users 1 and 2 (the mirror labeling,
    equally optimal). Returns (HetSQ, RatePoint). The distortion is that of
    the HomSQ because the CEO still recovers the same argmax decision.
    """
    if n < 2:
        raise DomainError("needs at least two users")
    if offset not in (0, 1):
        raise DomainError("offset must be 0 or 1")
    pattern = merge_pattern(n, q.k)
    if offset:
        pattern[0], pattern[1] = pattern[1], pattern[0]
    rows, per_user = [], []
    for user in range(n):
        merged = set(pattern[user])
        row = [q.boundaries[0]] + [q.boundaries[i] for i in range(1, q.k) if i not in merged] + [q.boundaries[-1]]
        rows.append(tuple(row))
        per_user.append(entropy(bin_probabilities(row, src)))
    het = HetSQ(tuple(rows))
    if distortion is None:
        distortion = homsq_argmax_distortion(q, src, n)
    point = RatePoint(math.fsum(per_user), tuple(per_user), distortion,
                      distortion / expected_max(src, n), q.k, "staggered HetSQ", het.rows)
    return het, point


def _base_boundaries(het: HetSQ) -> list:
    return sorted(set().union(*[set(r) for r in het.rows]))


def stagger_offset(het: HetSQ) -> int:
    """Recover the offset a staggered HetSQ was built with (0 when undetectable)."""
    base = _base_boundaries(het)
    k = len(base) - 1
    missing = {i for i in range(1, k) if base[i] not in set(het.rows[0])}
    return 1 if missing and missing == set(merge_pattern(het.n_users, k)[1]) else 0


def staggered_tops(het: HetSQ) -> list:
    """Per user, the 1-based index of the top original bin of each cell."""
    base = _base_boundaries(het)
    return [[base.index(r[c]) for c in range(1, len(r))] for r in het.rows]


def staggered_decision(het: HetSQ, cells: Sequence[int]) -> int:
    """Argmax decision of an N-user staggered HetSQ from per-user cell indices (1-based).

    Each user's cell is mapped back to its top original bin and the argmax
    function that generated the coloring is applied to those bins.
    """
    from .lossless import _f_star
    tops = staggered_tops(het)
    top = [tops[u][c - 1] for u, c in enumerate(cells)]
    if stagger_offset(het):
        top[0], top[1] = top[1], top[0]
        w = _f_star(tuple(top))
        return {1: 2, 2: 1}.get(w, w)
    return _f_star(tuple(top))


# ---------------------------------------------------------------- two-user Bayes estimators

def _require_two(het: HetSQ) -> None:
    if het.n_users != 2:
        raise DomainError("two-user estimators need exactly two rows")


def _cell(het: HetSQ, user: int, u: int):
    row = het.rows[user - 1]
    if not 1 <= u <= len(row) - 1:
        raise DomainError(f"bin {u} outside 1..{len(row) - 1}")
    return row[u - 1], row[u]


def bayes_argmax_2user(het: HetSQ, src: ContinuousSource, u1: int, u2: int) -> int:
    """1 iff E[X | cell of user 1] >= E[X | cell of user 2]."""
    _require_two(het)
    m1 = conditional_mean(src, *_cell(het, 1, u1))
    m2 = conditional_mean(src, *_cell(het, 2, u2))
    return 1 if m1 >= m2 else 2


class _CondCDF:
    """Conditional CDF and density of X given X in [a, b]."""

    def __init__(self, src: ContinuousSource, a: float, b: float):
        self.src, self.a, self.b = src, a, b
        self.Fa = src.cdf(a)
        self.p = src.cdf(b) - self.Fa
        if self.p <= 0:
            raise DegenerateIntervalError(f"cell [{a}, {b}] has zero probability")

    def G(self, z):
        if z <= self.a:
            return 0.0
        if z >= self.b:
            return 1.0
        return min(max((self.src.cdf(z) - self.Fa) / self.p, 0.0), 1.0)

    def g(self, z):
        if z < self.a or z > self.b:
            return 0.0
        return self.src.pdf(z) / self.p


def _maximize_score(cells: list, lo: float, hi: float, grid: int = 48):
    """Maximize w(z) = z (1 - prod_i G_i(z)) on [lo, hi].

    Candidates are all breakpoints, every bracketed root of w' on each smooth
    piece, and a bounded refinement around the best grid point.
    """
    def w(z):
        prod = 1.0
        for c in cells:
            prod *= c.G(z)
        return z * (1.0 - prod)

    def dw(z):
        Gs = [c.G(z) for c in cells]
        prod = math.prod(Gs)
        dprod = 0.0
        for i, c in enumerate(cells):
            other = math.prod(Gs[:i] + Gs[i + 1:])
            dprod += c.g(z) * other
        return (1.0 - prod) - z * dprod

    if hi <= lo:
        return lo, w(lo)
    breaks = sorted({lo, hi, *[x for c in cells for x in (c.a, c.b) if lo < x < hi]})
    cands = list(breaks)
    best_grid = (lo, -math.inf)
    for a, b in zip(breaks[:-1], breaks[1:]):
        eps = (b - a) * 1e-12
        zs = np.linspace(a + eps, b - eps, grid)
        ds = [dw(z) for z in zs]
        for z0, z1, d0, d1 in zip(zs[:-1], zs[1:], ds[:-1], ds[1:]):
            if d0 == 0.0:
                cands.append(z0)
            elif d0 > 0 > d1:
                cands.append(optimize.brentq(dw, z0, z1, xtol=1e-14, rtol=1e-15))
        for z in zs:
            v = w(z)
            if v > best_grid[1]:
                best_grid = (z, v)
    step = (hi - lo) / grid
    ref = optimize.minimize_scalar(lambda z: -w(z), bounds=(max(lo, best_grid[0] - step), min(hi, best_grid[0] + step)),
                                   method="bounded", options={"xatol": 1e-13})
    vals = [(w(z), -z) for z in cands]
    v, negz = max(vals)
    # the refinement only wins when it beats every exact candidate, not on rounding
    vr = w(float(ref.x))
    if vr > v + 1e-14 * max(1.0, abs(v)):
        return float(ref.x), vr
    return -negz, v


def _max_estimate(src: ContinuousSource, c1: tuple, c2: tuple):
    cells = [_CondCDF(src, *c1), _CondCDF(src, *c2)]
    lo = max(c1[0], c2[0])
    hi = max(c1[1], c2[1])
    return _maximize_score(cells, lo, hi)


def bayes_max_2user(het: HetSQ, src: ContinuousSource, u1: int, u2: int) -> float:
    """Estimate of the max maximizing z P(max >= z | cells)."""
    _require_two(het)
    z, _ = _max_estimate(src, _cell(het, 1, u1), _cell(het, 2, u2))
    return z


def _pair_estimate(src: ContinuousSource, c1: tuple, c2: tuple):
    best = None
    for user, c in ((1, c1), (2, c2)):
        z, v = _maximize_score([_CondCDF(src, *c)], c[0], c[1])
        if best is None or v > best[2] + 1e-15:
            best = (z, user, v)
    return best


def bayes_pair_2user(het: HetSQ, src: ContinuousSource, u1: int, u2: int):
    """(z, i) maximizing z P(X_i >= z | cell_i) jointly over the estimate and the user."""
    _require_two(het)
    z, i, _ = _pair_estimate(src, _cell(het, 1, u1), _cell(het, 2, u2))
    return z, i


@dataclass(frozen=True)
class EstimatorTable:
    """Per cell-pair estimates with the exact expected distortion."""
    target: str
    z: np.ndarray            # max estimate (nan for argmax)
    i: np.ndarray            # chosen user, 1-based (0 for max)
    distortion: float


def _cells(het: HetSQ, user: int):
    row = het.rows[user - 1]
    return [(a, b) for a, b in zip(row[:-1], row[1:])]


def estimator_table(het: HetSQ, src: ContinuousSource, target: str) -> EstimatorTable:
    """Tabulate the Bayes estimator over all cell pairs and the exact expected distortion.

    Expected distortion is E[max] minus the sum over cell pairs of
    P(cell pair) times the optimal conditional score: E[X_i | cell_i] for
    argmax, max_z z P(max >= z) for max, max_{z,i} z P(X_i >= z) for pair.
    """
    _require_two(het)
    if target not in TARGETS:
        raise DomainError(f"unknown target {target!r}")
    cells1, cells2 = _cells(het, 1), _cells(het, 2)
    p1 = bin_probabilities(het.rows[0], src)
    p2 = bin_probabilities(het.rows[1], src)
    K1, K2 = len(cells1), len(cells2)
    z = np.full((K1, K2), np.nan)
    idx = np.zeros((K1, K2), dtype=int)
    gains = []
    if target == "argmax":
        means1 = [conditional_mean(src, *c) if p > 0 else -math.inf for c, p in zip(cells1, p1)]
        means2 = [conditional_mean(src, *c) if p > 0 else -math.inf for c, p in zip(cells2, p2)]
        for a in range(K1):
            for b in range(K2):
                choose1 = means1[a] >= means2[b]
                idx[a, b] = 1 if choose1 else 2
                if p1[a] > 0 and p2[b] > 0:
                    gains.append(p1[a] * p2[b] * (means1[a] if choose1 else means2[b]))
    else:
        for a in range(K1):
            for b in range(K2):
                if p1[a] <= 0 or p2[b] <= 0:
                    continue
                if target == "max":
                    zz, v = _max_estimate(src, cells1[a], cells2[b])
                    ii = 0
                else:
                    zz, ii, v = _pair_estimate(src, cells1[a], cells2[b])
                z[a, b], idx[a, b] = zz, ii
                gains.append(p1[a] * p2[b] * v)
    return EstimatorTable(target, z, idx, expected_max(src, 2) - math.fsum(gains))


def hetsq_argmax_distortion(het: HetSQ, src: ContinuousSource) -> float:
    return estimator_table(het, src, "argmax").distortion


def hetsq_max_distortion(het: HetSQ, src: ContinuousSource) -> float:
    return estimator_table(het, src, "max").distortion


def hetsq_pair_distortion(het: HetSQ, src: ContinuousSource) -> float:
    return estimator_table(het, src, "pair").distortion


def hetsq_distortion(het: HetSQ, src: ContinuousSource, target: str) -> float:
    return estimator_table(het, src, target).distortion


def hetsq_rate_point(het: HetSQ, src: ContinuousSource, target: str, label: str = "HetSQ") -> RatePoint:
    per_user = tuple(entropy(bin_probabilities(r, src)) for r in het.rows)
    d = hetsq_distortion(het, src, target)
    n = het.n_users
    return RatePoint(math.fsum(per_user), per_user, d, d / expected_max(src, n),
                     max(het.bins(u) for u in range(1, n + 1)), label, het.rows)


# ---------------------------------------------------------------- two-user design

def _interior_from_logits(src: ContinuousSource, theta: np.ndarray) -> np.ndarray:
    w = np.exp(np.concatenate(([0.0], theta)) - np.max(np.concatenate(([0.0], theta))))
    cum = np.cumsum(w / w.sum())[:-1]
    return src.x_min + (src.x_max - src.x_min) * cum


def _logits_from_interior(src: ContinuousSource, interior: np.ndarray) -> np.ndarray:
    full = np.concatenate(([src.x_min], interior, [src.x_max]))
    gaps = np.maximum(np.diff(full), 1e-9)
    lg = np.log(gaps)
    return lg[1:] - lg[0]


def optimize_hetsq(src: ContinuousSource, target: str, k_bins: int, n_users: int = 2,
                   homogeneous: bool = False, n_starts: int = 3, seed: int = 0,
                   n_check: int = 50):
    """Numerically minimize the exact two-user distortion over decision boundaries.

    With ``homogeneous`` both users share one boundary set. For argmax with
    more than two users the optimal HomSQ is staggered instead. The result is
    checked to be no worse than ``n_check`` random feasible designs.
    Returns (HetSQ, RatePoint).
    """
    if target not in TARGETS:
        raise DomainError(f"unknown target {target!r}")
    if k_bins < 1:
        raise DomainError("k_bins must be at least 1")
    if n_users != 2:
        if target != "argmax":
            raise DomainError("max and pair designs are two-user only")
        q = design_min_distortion_homsq(src, n_users, k_bins, seed=seed)
        return hetsq_from_homsq(q, src, n_users)
    label = ("HomSQ" if homogeneous else "HetSQ") + f" {target}"
    if k_bins == 1:
        het = HetSQ(((src.x_min, src.x_max),) * 2)
        return het, hetsq_rate_point(het, src, target, label)
    m = k_bins - 1
    users = 1 if homogeneous else 2

    def build(x):
        rows = []
        for u in range(2):
            part = x[(0 if homogeneous else u * m):(0 if homogeneous else u * m) + m]
            rows.append((src.x_min, *np.sort(np.clip(part, src.x_min, src.x_max)), src.x_max))
        return HetSQ(tuple(rows))

    def D(x):
        try:
            return hetsq_distortion(build(x), src, target)
        except DegenerateIntervalError:
            return math.inf

    rng = np.random.default_rng(seed)
    width = src.x_max - src.x_min
    base = src.x_min + width * np.arange(1, k_bins) / k_bins
    eqp = _equal_probability_interior(src, k_bins)
    starts = [np.tile(base, users), np.tile(eqp, users)]
    if target == "argmax" and not homogeneous:
        # staggered start from the optimal HomSQ on a finer grid
        fine = design_min_distortion_homsq(src, 2, 2 * k_bins - 1, n_starts=4, seed=seed)
        het0, _ = hetsq_from_homsq(fine, src, 2)
        if all(len(r) == k_bins + 1 for r in het0.rows):
            starts.append(np.concatenate([np.array(r[1:-1]) for r in het0.rows]))
    # sample first, then refine the deterministic starts and the best samples
    samples = [np.sort(src.x_min + width * rng.random((users, m)), axis=1).ravel() for _ in range(n_check)]
    scored = sorted(((D(x), i) for i, x in enumerate(samples)))
    starts += [samples[i] for _, i in scored[:n_starts]]
    best = None
    for x0 in starts:
        if m == 1 and users == 1:
            # one free boundary: dense scan then bounded refinement
            grid = np.linspace(src.x_min, src.x_max, 81)[1:-1]
            vals = [D(np.array([g])) for g in grid]
            g0 = grid[int(np.argmin(vals))]
            step = grid[1] - grid[0]
            res = optimize.minimize_scalar(lambda t: D(np.array([t])), bounds=(g0 - step, g0 + step),
                                           method="bounded", options={"xatol": 1e-12})
            best = (float(res.fun), np.array([res.x]))
            break
        res = optimize.minimize(D, x0, method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 1000 * len(x0),
                                         "adaptive": True})
        d = D(res.x)
        if best is None or d < best[0]:
            best = (d, res.x)
    het = build(best[1])
    point = hetsq_rate_point(het, src, target, label)
    if scored and scored[0][0] < point.distortion - 1e-12:
        raise ConvergenceError("a random feasible design beat the optimizer", best=(het, point))
    return het, point


# ---------------------------------------------------------------- low-rate Hamming segment

def hamming_lowrate_segment(src: ContinuousSource, ell: float, d_hamming: float):
    """Rate and estimator mean when user 1's single indicator bit goes through a lossy code.

    Returns (rate_bits, E[X at the estimated argmax]).
    """
    if not src.x_min < ell < src.x_max:
        raise DomainError("threshold must be interior to the support")
    p2 = 1.0 - src.cdf(ell)
    limit = min(p2, 1.0 - p2)
    if d_hamming < 0 or d_hamming > limit + 1e-15:
        raise DomainError(f"Hamming distortion must lie in [0, {limit}]")
    d_hamming = min(d_hamming, limit)
    if d_hamming >= limit:
        rate = 0.0
    else:
        rate = max(binary_entropy(p2) - binary_entropy(d_hamming), 0.0)
    if d_hamming == 0.5:
        # only reachable with p2 = 1/2, where the ratio extends continuously to 1/2
        p_hat = 0.5
    else:
        p_hat = (p2 - d_hamming) / (1.0 - 2.0 * d_hamming)
    mean = src.mean()
    lower = conditional_mean(src, src.x_min, ell)
    upper = conditional_mean(src, ell, src.x_max)
    value = (1 - p_hat) * mean + p_hat * (d_hamming * lower + (1 - d_hamming) * upper)
    return rate, value
