"""Discrete and continuous source laws and the interval statistics built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DegenerateIntervalError, DomainError

QUAD_ABS_TOL = 1e-10
QUAD_REL_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteSource:
    """Finite ordered support alpha_1 < ... < alpha_L with a strictly positive pmf."""

    support: tuple
    pmf: tuple

    def __post_init__(self):
        support = tuple(float(a) for a in self.support)
        pmf = tuple(float(p) for p in self.pmf)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "pmf", pmf)
        if len(support) == 0:
            raise DomainError("support must be nonempty")
        if len(support) != len(pmf):
            raise DomainError("support and pmf lengths differ")
        if any(b <= a for a, b in zip(support, support[1:])):
            raise DomainError("support must be strictly increasing")
        if support[0] < 0:
            raise DomainError("support values must be nonnegative")
        if any(p <= 0 for p in pmf):
            raise DomainError("all probabilities must be positive")
        if abs(math.fsum(pmf) - 1.0) > 1e-12:
            raise DomainError(f"pmf sums to {math.fsum(pmf)!r}, not 1")

    @property
    def size(self) -> int:
        return len(self.support)

    @property
    def probs(self) -> np.ndarray:
        return np.asarray(self.pmf)

    @property
    def cdf(self) -> np.ndarray:
        """F(alpha_i) for i = 1..L."""
        return np.cumsum(self.pmf)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw support indices (0-based)."""
        return rng.choice(self.size, size=size, p=self.probs)

    @classmethod
    def uniform(cls, levels: int, start: float = 1.0, step: float = 1.0) -> "DiscreteSource":
        if levels < 1:
            raise DomainError("need at least one level")
        support = [start + step * i for i in range(levels)]
        return cls(tuple(support), tuple([1.0 / levels] * levels))

    @classmethod
    def normalized(cls, support: Sequence[float], weights: Sequence[float]) -> "DiscreteSource":
        """Build from unnormalized positive weights (renormalized with fsum)."""
        w = [float(x) for x in weights]
        total = math.fsum(w)
        return cls(tuple(support), tuple(x / total for x in w))


@dataclass(frozen=True, eq=False)
class ContinuousSource:
    """Bounded-support density with its CDF.

    ``moment`` optionally gives the closed form of the partial first moment
    (integral of x f(x) over [a, b]); ``ppf`` optionally gives the inverse CDF
    used for sampling. When absent, quadrature and root finding are used.
    """

    pdf: Callable[[float], float]
    cdf: Callable[[float], float]
    x_min: float
    x_max: float
    f_max: float
    moment: Optional[Callable[[float, float], float]] = None
    ppf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    dpdf: Optional[Callable[[float], float]] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise DomainError("x_max must exceed x_min")
        if abs(self.cdf(self.x_min)) > 1e-9 or abs(self.cdf(self.x_max) - 1.0) > 1e-9:
            raise DomainError("cdf must run from 0 to 1 over the support")

    def check_range(self, a: float, b: float, slack: float = 1e-12) -> None:
        if a < self.x_min - slack or b > self.x_max + slack or a > b + slack:
            raise DomainError(f"interval [{a}, {b}] not inside [{self.x_min}, {self.x_max}]")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        u = rng.random(size)
        if self.ppf is not None:
            return self.ppf(u)
        return _numeric_ppf(self, u)

    def mean(self) -> float:
        return partial_moment(self, self.x_min, self.x_max)

    def to_config(self) -> dict:
        return {"kind": self.name, **self.params}


def _numeric_ppf(src: ContinuousSource, u: np.ndarray) -> np.ndarray:
    # vectorized bisection; 60 halvings reach double precision on any bounded support
    lo = np.full(np.shape(u), src.x_min, dtype=float)
    hi = np.full(np.shape(u), src.x_max, dtype=float)
    cdf = np.vectorize(src.cdf)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def uniform(a: float = 0.0, b: float = 1.0) -> ContinuousSource:
    if not b > a:
        raise DomainError("uniform needs b > a")
    width = b - a

    def pdf(x):
        return 1.0 / width if a <= x <= b else 0.0

    def cdf(x):
        return min(max((x - a) / width, 0.0), 1.0)

    def moment(lo, hi):
        return (hi * hi - lo * lo) / (2.0 * width)

    def ppf(u):
        return a + width * np.asarray(u)

    return ContinuousSource(pdf, cdf, a, b, 1.0 / width, moment=moment, ppf=ppf,
                            dpdf=lambda x: 0.0, name="uniform", params={"a": a, "b": b})


def truncated_exponential(rate: float = 1.0, bound: float = 10.0) -> ContinuousSource:
    """Exponential(rate) restricted to (0, bound) and renormalized."""
    if rate <= 0 or bound <= 0:
        raise DomainError("rate and truncation bound must be positive")
    z = -math.expm1(-rate * bound)

    def pdf(x):
        return rate * math.exp(-rate * x) / z if 0.0 <= x <= bound else 0.0

    def dpdf(x):
        return -rate * pdf(x)

    def cdf(x):
        x = min(max(x, 0.0), bound)
        return -math.expm1(-rate * x) / z

    def antideriv(x):
        return -(x + 1.0 / rate) * math.exp(-rate * x)

    def moment(lo, hi):
        return (antideriv(hi) - antideriv(lo)) / z

    def ppf(u):
        return -np.log1p(-np.asarray(u) * z) / rate

    return ContinuousSource(pdf, cdf, 0.0, bound, rate / z, moment=moment, ppf=ppf, dpdf=dpdf,
                            name="exponential", params={"rate": rate, "truncate": bound})


def interval_prob(src: ContinuousSource, a: float, b: float) -> float:
    src.check_range(a, b)
    return max(src.cdf(b) - src.cdf(a), 0.0)


def partial_moment(src: ContinuousSource, a: float, b: float) -> float:
    """Integral of x f(x) over [a, b]."""
    src.check_range(a, b)
    if b <= a:
        return 0.0
    if src.moment is not None:
        return src.moment(a, b)
    return quad_moment(src, a, b)


def quad_moment(src: ContinuousSource, a: float, b: float) -> float:
    """Partial first moment by adaptive Gauss-Kronrod quadrature."""
    val, _ = integrate.quad(lambda x: x * src.pdf(x), a, b,
                            epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=200)
    return val


def conditional_mean(src: ContinuousSource, a: float, b: float) -> float:
    p = interval_prob(src, a, b)
    if p <= 0.0 or b <= a:
        raise DegenerateIntervalError(f"interval [{a}, {b}] has zero probability")
    m = partial_moment(src, a, b) / p
    return min(max(m, a), b)


def expected_max(src: ContinuousSource, n: int) -> float:
    """E[max of n i.i.d. draws] = integral of x n F^{n-1} f."""
    if n < 1:
        raise DomainError("n must be at least 1")
    if n == 1:
        return src.mean()
    # x_max - integral of F^n is the same quantity with a smoother integrand
    val, _ = integrate.quad(lambda x: src.cdf(x) ** n, src.x_min, src.x_max,
                            epsabs=QUAD_ABS_TOL * 1e-2, epsrel=QUAD_REL_TOL, limit=400)
    return src.x_max - val


def expected_max_density_form(src: ContinuousSource, n: int) -> float:
    """Same as expected_max but integrating x n F^{n-1} f directly."""
    if n < 1:
        raise DomainError("n must be at least 1")
    val, _ = integrate.quad(lambda x: x * n * src.cdf(x) ** (n - 1) * src.pdf(x),
                            src.x_min, src.x_max, epsabs=QUAD_ABS_TOL * 1e-2,
                            epsrel=QUAD_REL_TOL, limit=400)
    return val


def discretize(src: ContinuousSource, k: int, representative: str = "midpoint") -> DiscreteSource:
    """K equal-width cells; pmf from CDF differences, one representative per cell.

    ``representative`` is "midpoint" or "mean" (the conditional mean of the cell).
    Cells of zero probability are rejected since DiscreteSource needs p > 0.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    edges = np.linspace(src.x_min, src.x_max, k + 1)
    cdf_vals = np.array([src.cdf(x) for x in edges])
    cdf_vals[0], cdf_vals[-1] = 0.0, 1.0
    probs = np.diff(cdf_vals)
    if np.any(probs <= 0):
        raise DegenerateIntervalError("a discretization cell has zero probability")
    probs = probs / math.fsum(probs)
    if representative == "midpoint":
        reps = 0.5 * (edges[:-1] + edges[1:])
    elif representative == "mean":
        reps = np.array([conditional_mean(src, a, b) for a, b in zip(edges[:-1], edges[1:])])
    else:
        raise DomainError(f"unknown representative rule {representative!r}")
    # renormalize once more with fsum so the 1e-12 check holds for large k
    probs = probs / math.fsum(probs)
    return DiscreteSource(tuple(reps), tuple(probs))


def entropy(src) -> float:
    """Shannon entropy in bits of a DiscreteSource or a probability vector."""
    p = np.asarray(src.pmf if isinstance(src, DiscreteSource) else src, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) + 0.0


def binary_entropy(p: float) -> float:
    if p < 0 or p > 1:
        raise DomainError("probability outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return float(-p * math.log2(p) - (1 - p) * math.log2(1 - p))


def source_from_config(cfg: dict):
    """Parse {"kind": "uniform"|"exponential"|"discrete", ...}."""
    kind = cfg.get("kind")
    if kind == "uniform":
        return uniform(float(cfg.get("a", 0.0)), float(cfg.get("b", 1.0)))
    if kind == "exponential":
        return truncated_exponential(float(cfg.get("rate", 1.0)), float(cfg.get("truncate", 10.0)))
    if kind == "discrete":
        return DiscreteSource(tuple(cfg["support"]), tuple(cfg["pmf"]))
    raise DomainError(f"unknown source kind {kind!r}")
