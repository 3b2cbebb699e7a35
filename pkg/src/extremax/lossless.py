"""Lossless extremization: candidate functions, characteristic graphs, colorings and rates.

Support values are referred to by 1-based level indices 1..L and users by 1..N.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Hashable, Iterator, Optional, Sequence

import numpy as np

from .errors import DomainError, SizeError
from .sources import DiscreteSource, binary_entropy, entropy

ENUMERATION_CAP = 200_000
TABLE_CAP = 2_000_000


@lru_cache(maxsize=None)
def _f_star(x: tuple) -> int:
    n = len(x)
    if n == 1:
        return 1
    first, rest = x[0], x[1:]
    top = max(rest)
    if top < first:
        return 1
    if top == first:
        if n % 2 == first % 2:
            return 1
        return _f_star(rest) + 1
    return _f_star(rest) + 1


@dataclass(frozen=True, eq=False)
class CandidateArgmaxFunction:
    """A total map from level tuples in [L]^N to a maximizing user."""

    n_users: int
    levels: int
    rule: Callable[[tuple], int]
    label: str = "custom"

    def __call__(self, x: Sequence[int]) -> int:
        x = tuple(int(v) for v in x)
        if len(x) != self.n_users:
            raise DomainError("tuple length differs from the number of users")
        return self.rule(x)

    def table(self) -> np.ndarray:
        return tabulate(self)


@dataclass(frozen=True, eq=False)
class ExtremumFunction:
    """Generic zero-distortion function for max or pair targets (values are hashable)."""

    n_users: int
    levels: int
    rule: Callable[[tuple], Hashable]
    label: str = "custom"

    def __call__(self, x: Sequence[int]):
        return self.rule(tuple(int(v) for v in x))


def optimal_argmax_function(n: int, levels: int) -> CandidateArgmaxFunction:
    """The recursive tie-breaking argmax function f*_n."""
    if n < 1 or levels < 1:
        raise DomainError("need n >= 1 and L >= 1")
    return CandidateArgmaxFunction(n, levels, _f_star, label=f"f*_{n}")


def merge_pattern(n: int, levels: int) -> list:
    """Per-user list of i such that {alpha_i, alpha_{i+1}} share a color under f*_n.

    User 1 merges pairs whose lower index has the parity of n, user 2 the
    opposite parity, and every other user's graph is complete.
    """
    if n < 1 or levels < 1:
        raise DomainError("need n >= 1 and L >= 1")
    pattern = [[] for _ in range(n)]
    if n == 1:
        return pattern
    pattern[0] = [i for i in range(1, levels) if i % 2 == n % 2]
    pattern[1] = [i for i in range(1, levels) if i % 2 != n % 2]
    return pattern


def color_cells(levels: int, merges: Sequence[int]) -> list:
    """Turn a set of merged consecutive pairs into a list of color cells (tuples of levels)."""
    merged = set(merges)
    cells, i = [], 1
    while i <= levels:
        if i in merged and i + 1 <= levels:
            cells.append((i, i + 1))
            i += 2
        else:
            cells.append((i,))
            i += 1
    return cells


def alternative_argmax_function(n: int, levels: int) -> CandidateArgmaxFunction:
    """Non-recursive optimal family: users 1 and 2 follow f*_2, the rest are uncolored.

    The decoder only needs user 1 and 2 colors: between those two f*_2 picks a
    winner w, and any other user whose value reaches the top of w's color cell
    takes over.
    """
    if n < 2:
        raise DomainError("needs at least two users")
    pattern = merge_pattern(2, levels)
    tops = []
    for user in range(2):
        top = {}
        for cell in color_cells(levels, pattern[user]):
            for v in cell:
                top[v] = max(cell)
        tops.append(top)

    def rule(x: tuple) -> int:
        w = _f_star(x[:2])
        if n == 2:
            return w
        rest = x[2:]
        r = max(rest)
        if r >= tops[w - 1][x[w - 1]]:
            return 3 + rest.index(r)
        return w

    return CandidateArgmaxFunction(n, levels, rule, label=f"alt_{n}")


def max_function(n: int, levels: int, zero_merge: bool = False) -> ExtremumFunction:
    """Zero-distortion max function on level indices.

    With ``zero_merge`` (meaningful when alpha_1 = 0) the all-zero tuple maps
    to level 2, which is free because d_M vanishes whenever the true max is 0.
    """
    def rule(x: tuple):
        m = max(x)
        if zero_merge and m == 1 and levels >= 2:
            return 2
        return m

    return ExtremumFunction(n, levels, rule, label="max0" if zero_merge else "max")


def pair_function(n: int, levels: int, zero_merge: bool = False) -> ExtremumFunction:
    fmax = max_function(n, levels, zero_merge)

    def rule(x: tuple):
        return (_f_star(x), fmax.rule(x))

    return ExtremumFunction(n, levels, rule, label="pair0" if zero_merge else "pair")


def tabulate(f) -> np.ndarray:
    """Evaluate f on every tuple in [L]^N; result[i1-1, ..., iN-1] = f(i1, ..., iN) encoded as ints."""
    n, L = f.n_users, f.levels
    if L ** n > TABLE_CAP:
        raise SizeError(f"L^N = {L ** n} exceeds the table cap")
    codes: dict = {}
    out = np.empty(L ** n, dtype=np.int64)
    for idx, x in enumerate(itertools.product(range(1, L + 1), repeat=n)):
        v = f(x)
        out[idx] = codes.setdefault(v, len(codes))
    return out.reshape((L,) * n)


@dataclass(frozen=True)
class CharacteristicGraph:
    user: int
    levels: int
    edges: frozenset  # pairs (i, j), i < j, 1-based levels

    def adjacent(self, i: int, j: int) -> bool:
        a, b = min(i, j), max(i, j)
        return (a, b) in self.edges

    @property
    def non_edges(self) -> list:
        return [(i, j) for i in range(1, self.levels + 1) for j in range(i + 1, self.levels + 1)
                if (i, j) not in self.edges]

    @property
    def is_complete(self) -> bool:
        return len(self.edges) == self.levels * (self.levels - 1) // 2

    def is_independent(self, cell: Sequence[int]) -> bool:
        return all(not self.adjacent(a, b) for a, b in itertools.combinations(cell, 2))


def graph_from_table(table: np.ndarray, user: int) -> CharacteristicGraph:
    L = table.shape[0]
    t = np.moveaxis(table, user - 1, 0).reshape(L, -1)
    edges = set()
    for i in range(L):
        for j in range(i + 1, L):
            if not np.array_equal(t[i], t[j]):
                edges.add((i + 1, j + 1))
    return CharacteristicGraph(user, L, frozenset(edges))


def characteristic_graph(f, user: int, table: Optional[np.ndarray] = None) -> CharacteristicGraph:
    """Vertices are levels; i ~ j iff some assignment of the other users makes f differ."""
    if not 1 <= user <= f.n_users:
        raise DomainError("user index out of range")
    if table is None:
        table = tabulate(f)
    return graph_from_table(table, user)


@dataclass(frozen=True)
class Coloring:
    cells: tuple        # tuple of tuples of levels; one tuple per color
    probs: tuple        # color pmf

    @property
    def entropy(self) -> float:
        return entropy(self.probs)

    def color_of(self, level: int) -> int:
        for c, cell in enumerate(self.cells):
            if level in cell:
                return c
        raise DomainError(f"level {level} not colored")


def _set_partitions(items: list) -> Iterator[list]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def min_entropy_coloring(g: CharacteristicGraph, src: DiscreteSource) -> Coloring:
    """Minimum-entropy proper coloring.

    When non-edges form a matching (always true for argmax graphs) each
    maximal independent set gets its own color. Otherwise small graphs are
    solved by enumerating set partitions into independent sets.
    """
    if src.size != g.levels:
        raise DomainError("graph and source sizes differ")
    p = src.pmf
    free = g.non_edges
    counts: dict = {}
    for a, b in free:
        counts[a] = counts.get(a, 0) + 1
        counts[b] = counts.get(b, 0) + 1
    if all(c == 1 for c in counts.values()):
        paired = {a: b for a, b in free}
        cells, seen = [], set()
        for v in range(1, g.levels + 1):
            if v in seen:
                continue
            if v in paired:
                cells.append((v, paired[v]))
                seen.update((v, paired[v]))
            else:
                cells.append((v,))
                seen.add(v)
        return Coloring(tuple(cells), tuple(math.fsum(p[v - 1] for v in c) for c in cells))
    if g.levels > 10:
        raise SizeError("general min-entropy coloring is only enumerated for L <= 10")
    best = None
    for part in _set_partitions(list(range(1, g.levels + 1))):
        if not all(g.is_independent(c) for c in part):
            continue
        probs = tuple(math.fsum(p[v - 1] for v in c) for c in part)
        h = entropy(probs)
        if best is None or h < best[0] - 1e-15:
            best = (h, tuple(tuple(sorted(c)) for c in part), probs)
    return Coloring(best[1], best[2])


def coloring_rate(f, src: DiscreteSource) -> float:
    """Sum over users of the minimum coloring entropy of their characteristic graphs."""
    table = tabulate(f)
    return math.fsum(min_entropy_coloring(graph_from_table(table, u), src).entropy
                     for u in range(1, f.n_users + 1))


def pairwise_savings(src: DiscreteSource) -> float:
    """Sum over consecutive pairs of (p_i + p_{i+1}) h2(p_i / (p_i + p_{i+1}))."""
    p = src.pmf
    return math.fsum((a + b) * binary_entropy(a / (a + b)) for a, b in zip(p, p[1:]))


def rate_argmax(src: DiscreteSource, n: int) -> float:
    if n < 2:
        raise DomainError("argmax rate needs n >= 2")
    p = np.asarray(src.pmf)
    if len(p) == 1:
        return 0.0
    pair = p[:-1] + p[1:]
    terms = [-(n - 2) * float(np.sum(p * np.log2(p))),
             -float(np.sum(pair * np.log2(pair))),
             -p[0] * math.log2(p[0]),
             -p[-1] * math.log2(p[-1])]
    return math.fsum(terms)


def _zero_merge_term(src: DiscreteSource) -> float:
    if src.size < 2 or src.support[0] != 0.0:
        return 0.0
    p1, p2 = src.pmf[0], src.pmf[1]
    return (p1 + p2) * binary_entropy(p1 / (p1 + p2))


def rate_max(src: DiscreteSource, n: int) -> float:
    if n < 1:
        raise DomainError("n must be at least 1")
    if src.size == 1:
        return 0.0
    return n * entropy(src) - n * _zero_merge_term(src)


def rate_pair(src: DiscreteSource, n: int) -> float:
    if n < 1:
        raise DomainError("n must be at least 1")
    if src.size == 1:
        return 0.0
    return n * entropy(src) - _zero_merge_term(src)


def savings(src: DiscreteSource, n: int, target: str) -> float:
    if n < 2:
        raise DomainError("savings need n >= 2")
    naive = n * entropy(src)
    if target == "argmax":
        return naive - rate_argmax(src, n)
    if target == "max":
        return naive - rate_max(src, n)
    if target == "pair":
        return naive - rate_pair(src, n)
    raise DomainError(f"unknown target {target!r}")


def count_ambiguous(j: int, n: int, k: int) -> int:
    """Number of tuples in [K]^N whose max (above the bottom level) is attained by exactly j users."""
    if not 1 <= j <= n or k < 1:
        raise DomainError("need 1 <= j <= n and k >= 1")
    return math.comb(n, j) * sum(i ** (n - j) for i in range(1, k))


def count_candidates(n: int, k: int) -> int:
    """Number of candidate argmax functions on [K]^N (exact integer)."""
    if n < 1 or k < 1:
        raise DomainError("need n, k >= 1")
    total = n
    for j in range(1, n + 1):
        total *= j ** count_ambiguous(j, n, k)
    return total


def candidate_tables(n: int, levels: int) -> Iterator[dict]:
    """Yield every candidate argmax function as a dict from ambiguous tuples to the chosen user."""
    ambiguous = []
    for x in itertools.product(range(1, levels + 1), repeat=n):
        m = max(x)
        winners = tuple(i + 1 for i, v in enumerate(x) if v == m)
        if len(winners) > 1:
            ambiguous.append((x, winners))
    keys = [x for x, _ in ambiguous]
    for choice in itertools.product(*[w for _, w in ambiguous]):
        yield dict(zip(keys, choice))


def function_from_choices(n: int, levels: int, choices: dict) -> CandidateArgmaxFunction:
    def rule(x: tuple) -> int:
        if x in choices:
            return choices[x]
        return x.index(max(x)) + 1
    return CandidateArgmaxFunction(n, levels, rule, label="table")


@dataclass(frozen=True)
class BruteForceResult:
    rate: float
    minimizers: tuple   # tie-break choice dicts attaining the minimum (as sorted item tuples)


def brute_force_min_rate(src: DiscreteSource, n: int, keep_minimizers: bool = False):
    """Exact minimum over all candidate argmax functions and all colorings.

    Refuses instances with more than ENUMERATION_CAP candidate functions.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    L = src.size
    if n > 3 or L > 4:
        raise SizeError("brute force is limited to N <= 3 and L <= 4")
    if count_candidates(n, L) > ENUMERATION_CAP:
        raise SizeError(f"{count_candidates(n, L)} candidate functions exceed the cap")
    if L == 1 or n == 1:
        res = BruteForceResult(0.0, ())
        return res if keep_minimizers else res.rate
    best, argbest = math.inf, []
    for choices in candidate_tables(n, L):
        r = coloring_rate(function_from_choices(n, L, choices), src)
        if r < best - 1e-12:
            best, argbest = r, [choices]
        elif abs(r - best) <= 1e-12:
            argbest.append(choices)
    if keep_minimizers:
        return BruteForceResult(best, tuple(tuple(sorted(c.items())) for c in argbest))
    return best
