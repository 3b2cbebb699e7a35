"""Rate-distortion lower bounds for the max, argmax and pair targets.

The users' sources are discretized and treated as one product source seen by
a single joint encoder. Its rate-distortion function under the target
distortion lower-bounds any distributed scheme, and is computed with the
Blahut-Arimoto alternating minimization.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .distortion import discrete_expected_max
from .errors import ConvergenceError, DomainError, SizeError
from .sources import ContinuousSource, DiscreteSource, discretize, expected_max

ALPHABET_CAP = 4_000_000
LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class RDProblem:
    pmf: np.ndarray           # joint probabilities of the source atoms
    dist: np.ndarray          # distortion table, atoms x reconstructions
    recon: tuple              # reconstruction labels
    target: str
    n_users: int
    k_disc: int
    expected_max: float       # normalizer for reported distortions

    @property
    def d_ceiling(self) -> float:
        return float(self.dist.max())

    @property
    def zero_rate_distortion(self) -> float:
        """Distortion of the best constant reconstruction."""
        return float(np.min(self.pmf @ self.dist))

    @classmethod
    def from_table(cls, pmf: Sequence[float], dist, target: str = "custom") -> "RDProblem":
        p = np.asarray(pmf, dtype=float)
        d = np.asarray(dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != p.size or d.shape[1] == 0:
            raise DomainError("distortion table must be atoms x reconstructions")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("pmf must be a probability vector")
        if not np.all(np.isfinite(d)):
            raise DomainError("distortion table must be finite")
        return cls(p, d, tuple(range(d.shape[1])), target, 1, p.size, 1.0)


@dataclass(frozen=True)
class RDPoint:
    mu: float
    rate_bits: float
    distortion: float
    iterations: int
    residual: float


def build_rd_problem(src, n: int, k_disc: int, target: str,
                     representative: str = "midpoint", cap: int = ALPHABET_CAP) -> RDProblem:
    """Product-source problem for n users.

    A ContinuousSource is discretized into k_disc equal cells; a
    DiscreteSource is used as is (k_disc is then ignored).
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    if isinstance(src, ContinuousSource):
        if k_disc < 2:
            raise DomainError("k_disc must be at least 2")
        disc = discretize(src, k_disc, representative)
        emax = expected_max(src, n)
    elif isinstance(src, DiscreteSource):
        disc = src
        emax = discrete_expected_max(src, n)
    else:
        raise DomainError("unsupported source type")
    vals = np.asarray(disc.support)
    k = disc.size
    if target == "argmax":
        recon = tuple(range(1, n + 1))
    elif target == "max":
        recon = tuple(float(v) for v in vals)
    elif target == "pair":
        recon = tuple((float(v), i) for v in vals for i in range(1, n + 1))
    else:
        raise DomainError(f"unknown target {target!r}")
    size = k ** n * len(recon)
    if size > cap:
        raise SizeError(f"{k}^{n} atoms x {len(recon)} reconstructions = {size} exceeds cap {cap}")
    idx = np.array(list(itertools.product(range(k), repeat=n)), dtype=int).reshape(-1, n)
    x = vals[idx]
    pmf = np.prod(np.asarray(disc.pmf)[idx], axis=1)
    zmax = x.max(axis=1)
    if target == "argmax":
        dist = zmax[:, None] - x
    elif target == "max":
        z = vals[None, :]
        dist = np.where(z <= zmax[:, None], zmax[:, None] - z, zmax[:, None])
    else:
        z = np.repeat(vals, n)[None, :]
        users = np.tile(np.arange(n), k)
        chosen = x[:, users]
        dist = np.where(z <= chosen, zmax[:, None] - z, zmax[:, None])
    pmf = pmf / math.fsum(pmf)
    return RDProblem(pmf, dist, recon, target, n, k, emax)


def _gap(p: np.ndarray, A: np.ndarray, r: np.ndarray):
    """Blahut's bound gap in bits and the multipliers c_z."""
    c = A.T @ (p / (A @ r))
    live = r > 0
    cl = c[live]
    return (math.log(c.max()) - float(np.sum(r[live] * cl * np.log(cl)))) / LN2, c


def _newton_polish(p: np.ndarray, A: np.ndarray, r: np.ndarray, tol: float, steps: int = 60):
    """Active-set Newton on F(r) = -sum_x p(x) log (A r)(x) over the simplex.

    At the optimum c_z = 1 on the support of r and c_z <= 1 off it. Symbols
    violating that are added, those driven to zero are dropped.
    """
    r = r.copy()
    for _ in range(steps):
        gap, c = _gap(p, A, r)
        if gap < tol:
            return r
        support = r > 1e-15
        enter = (~support) & (c > 1.0 + 1e-12)
        if np.any(enter):
            j = int(np.argmax(np.where(enter, c, -np.inf)))
            r[j] = 1e-9
            r /= r.sum()
            support = r > 1e-15
        S = np.flatnonzero(support)
        denom = A @ r
        As = A[:, S]
        H = As.T @ (As * (p / denom ** 2)[:, None])
        m = len(S)
        # Newton step restricted to sum(delta) = 0, pseudo-inverse keeps it a descent direction
        Z = np.eye(m)[:, :-1] - np.eye(m)[:, -1:]
        Hr = Z.T @ H @ Z
        gr = -(Z.T @ c[S])
        w, V = np.linalg.eigh(Hr)
        keep = w > 1e-12 * max(w.max(), 1e-300)
        step = -Z @ (V[:, keep] @ ((V[:, keep].T @ gr) / w[keep]))
        t = 1.0
        neg = step < 0
        if np.any(neg):
            ratio = -r[S][neg] / step[neg]
            t = min(1.0, float(np.min(ratio)))
            if t < 1e-3:
                # symbols blocking the step are on their way out: drop them
                blocked = S[neg][ratio < 1e-3]
                r[blocked] = 0.0
                r /= r.sum()
                continue
        f0 = -float(p @ np.log(denom))
        while t > 1e-12:
            trial = r.copy()
            trial[S] = np.maximum(r[S] + t * step, 0.0)
            trial /= trial.sum()
            if -float(p @ np.log(A @ trial)) <= f0 + 1e-15:
                r = trial
                break
            t *= 0.5
        else:
            return r
    return r


def blahut_arimoto(problem: RDProblem, mu: float, tol: float = 1e-10, max_iter: int = 200_000,
                   r0: Optional[np.ndarray] = None, warmup: int = 300):
    """One slope. Returns (RDPoint, output marginal).

    The residual is the gap between Blahut's upper and lower bounds on the
    rate at this slope (in bits). Plain alternating updates run first; if
    they stall, an active-set Newton step on the same convex objective
    finishes, and alternating updates resume if that fails as well.
    Reconstructions whose marginal mass falls below 1e-300 are pruned.
    """
    if not (mu > 0 and math.isfinite(mu)):
        raise DomainError("slope must be positive and finite")
    p, d = problem.pmf, problem.dist
    A = np.exp(-mu * d)
    r = np.full(d.shape[1], 1.0 / d.shape[1]) if r0 is None else np.asarray(r0, dtype=float).copy()
    gap = math.inf
    it = 0
    polished = False
    while it < max_iter:
        it += 1
        gap, c = _gap(p, A, r)
        if gap < tol:
            break
        r = r * c
        r[r < 1e-300] = 0.0
        r /= r.sum()
        if it == warmup and not polished:
            polished = True
            r = _newton_polish(p, A, r, tol)
    point = _point(problem, mu, r, A, it, gap)
    if gap >= tol:
        raise ConvergenceError(f"slope {mu}: bound gap {gap:.3e} after {max_iter} iterations", best=point)
    return point, r


def _point(problem: RDProblem, mu: float, r: np.ndarray, A: np.ndarray, it: int, gap: float) -> RDPoint:
    denom = A @ r
    q = (A * r[None, :]) / denom[:, None]
    D = float(problem.pmf @ np.sum(q * problem.dist, axis=1))
    # I(X;Z) = -mu D - sum_x p(x) log denom(x), in nats
    rate = (-mu * D - float(problem.pmf @ np.log(denom))) / LN2
    if rate < 0 or D >= problem.zero_rate_distortion - 1e-12:
        rate = max(rate, 0.0)
    if rate < 1e-12:
        rate = 0.0
    return RDPoint(float(mu), rate, D, it, gap)


def default_slopes(problem: RDProblem, count: int = 64) -> np.ndarray:
    """Log-spaced slopes from where R = 0 to where D is essentially 0."""
    positive = problem.dist[problem.dist > 0]
    if positive.size == 0:
        return np.array([1.0])
    d_small, d_big = float(positive.min()), float(positive.max())
    lo = 0.002 / d_big
    hi = 40.0 / d_small
    return np.geomspace(lo, hi, count)


def ba_sweep(problem: RDProblem, slopes: Optional[Sequence[float]] = None, tol: float = 1e-10,
             max_iter: int = 200_000) -> list:
    """Points for each slope, ordered by decreasing slope (increasing distortion)."""
    if slopes is None:
        slopes = default_slopes(problem)
    slopes = sorted((float(s) for s in slopes), reverse=True)
    if any(not (s > 0 and math.isfinite(s)) for s in slopes):
        raise DomainError("slopes must be positive and finite")
    out = []
    r = None
    for mu in slopes:
        # warm start from the neighbouring slope; pruned symbols are revived
        start = None if r is None else np.maximum(r, 1e-12) / np.maximum(r, 1e-12).sum()
        point, r = blahut_arimoto(problem, mu, tol, max_iter, start)
        out.append(point)
    return out


@dataclass(frozen=True)
class RDCurve:
    """Piecewise-linear lower bound through the computed points, labeled as such."""
    distortion: np.ndarray
    rate_bits: np.ndarray
    zero_rate_distortion: float
    label: str = "joint-encoder lower bound"

    def rate(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        out = np.interp(d, self.distortion, self.rate_bits, left=self.rate_bits[0], right=0.0)
        return np.where(d >= self.zero_rate_distortion, 0.0, out)

    @property
    def d_min(self) -> float:
        return float(self.distortion[0])


def curve_from_points(problem: RDProblem, points: Sequence[RDPoint]) -> RDCurve:
    d0 = problem.zero_rate_distortion
    pts = sorted(((p.distortion, p.rate_bits) for p in points if p.distortion < d0), key=lambda t: t[0])
    D = [x for x, _ in pts] + [d0]
    R = [y for _, y in pts] + [0.0]
    # drop duplicated distortions keeping the smaller rate
    keep_d, keep_r = [], []
    for x, y in zip(D, R):
        if keep_d and x - keep_d[-1] <= 1e-15:
            keep_r[-1] = min(keep_r[-1], y)
            continue
        keep_d.append(x)
        keep_r.append(y)
    return RDCurve(np.array(keep_d), np.array(keep_r), d0)


def rd_curve(src, n: int, k_disc: int, target: str, slopes=None, tol: float = 1e-10) -> RDCurve:
    problem = build_rd_problem(src, n, k_disc, target)
    return curve_from_points(problem, ba_sweep(problem, slopes, tol))


def curve_gap(a: RDCurve, b: RDCurve, grid: int = 400) -> float:
    """Max vertical distance over the common distortion range."""
    lo = max(a.d_min, b.d_min)
    hi = min(a.zero_rate_distortion, b.zero_rate_distortion)
    if hi <= lo:
        return 0.0
    d = np.linspace(lo, hi, grid)
    return float(np.max(np.abs(a.rate(d) - b.rate(d))))


def is_convex_nonincreasing(curve: RDCurve, tol: float = 1e-6) -> bool:
    D, R = curve.distortion, curve.rate_bits
    if np.any(np.diff(R) > tol):
        return False
    slopes = np.diff(R) / np.diff(D)
    return bool(np.all(np.diff(slopes) >= -tol * np.maximum(1.0, np.abs(slopes[1:]))))


def discretization_convergence(src: ContinuousSource, n: int, target: str, k_list: Sequence[int],
                               tol: float = 1e-10) -> dict:
    """Gaps between curves at successive discretization sizes."""
    ks = list(k_list)
    if any(b < a for a, b in zip(ks, ks[1:])):
        raise DomainError("k_list must be nondecreasing")
    curves = {k: rd_curve(src, n, k, target, tol=tol) for k in dict.fromkeys(ks)}
    gaps = [(a, b, 0.0 if a == b else curve_gap(curves[a], curves[b])) for a, b in zip(ks, ks[1:])]
    return {"k": ks, "gaps": gaps, "curves": curves,
            "shrinking": all(g2 <= g1 for (_, _, g1), (_, _, g2) in zip(gaps, gaps[1:]))}
