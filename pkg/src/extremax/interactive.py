"""Multi-threshold interactive scheme and the relay baselines.

The CEO broadcasts a threshold; every online user replies one bit saying
whether its value reaches it. Users replying 1 stay online with the support
truncated from the threshold up; if nobody replies 1 everyone stays online
with the support below the threshold. The state is (online count, support
index range) because users are i.i.d.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.special import comb

from .errors import DomainError, ProtocolViolationError, SizeError
from .lossless import rate_argmax
from .sources import DiscreteSource, entropy

TARGETS = ("argmax", "max", "pair")
COST_MODELS = ("sw", "count", "huffman-count", "plain")
STATE_CAP = 200_000
STOP = ("stop",)


@dataclass(frozen=True, order=True)
class InteractiveState:
    """Online count and the support as an inclusive 0-based index range."""
    n_online: int
    lo: int
    hi: int

    def __post_init__(self):
        if self.n_online < 1:
            raise DomainError("at least one user must be online")
        if not 0 <= self.lo <= self.hi:
            raise DomainError("support range must be nonempty")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def conditional_pmf(self, src: DiscreteSource) -> np.ndarray:
        p = src.probs[self.lo:self.hi + 1]
        return p / p.sum()


def is_terminal(s: InteractiveState, target: str) -> bool:
    if target == "argmax":
        return s.n_online == 1 or s.size == 1
    if target in ("max", "pair"):
        return s.size == 1
    raise DomainError(f"unknown target {target!r}")


def state_update(s: InteractiveState, threshold: int, replies_above: int) -> InteractiveState:
    """Next state after broadcasting support index ``threshold``."""
    if s.size == 1:
        raise ProtocolViolationError("support is a single point; the state is terminal")
    if not s.lo < threshold <= s.hi:
        raise ProtocolViolationError(f"threshold {threshold} outside ({s.lo}, {s.hi}]")
    if not 0 <= replies_above <= s.n_online:
        raise ProtocolViolationError(f"{replies_above} replies from {s.n_online} online users")
    if replies_above >= 1:
        return InteractiveState(replies_above, threshold, s.hi)
    return InteractiveState(s.n_online, s.lo, threshold - 1)


def _transitions(src: DiscreteSource, s: InteractiveState, t: int):
    """[(child, P(child), P(child and reference user replied 1))]."""
    p = src.probs
    mass = p[s.lo:s.hi + 1].sum()
    F = p[s.lo:t].sum() / mass
    q = 1.0 - F
    n = s.n_online
    out = [(InteractiveState(n, s.lo, t - 1), F ** n, 0.0)]
    for i in range(1, n + 1):
        pi = comb(n, i, exact=True) * q ** i * F ** (n - i)
        p1 = comb(n - 1, i - 1, exact=True) * q ** i * F ** (n - i)
        out.append((InteractiveState(i, t, s.hi), pi, p1))
    return out, q


def huffman_lengths(probs: Dict) -> Dict:
    """Codeword lengths of a binary Huffman code; a lone symbol gets length 0."""
    items = [(v, k) for k, v in probs.items() if v > 0]
    if len(items) <= 1:
        return {k: 0 for _, k in items}
    heap = [(v, i, [k]) for i, (v, k) in enumerate(items)]
    heapq.heapify(heap)
    lengths = {k: 0 for _, k in items}
    counter = len(heap)
    while len(heap) > 1:
        v1, _, a = heapq.heappop(heap)
        v2, _, b = heapq.heappop(heap)
        for k in a + b:
            lengths[k] += 1
        heapq.heappush(heap, (v1 + v2, counter, a + b))
        counter += 1
    return lengths


@dataclass(frozen=True, eq=False)
class Policy:
    src: DiscreteSource
    n_users: int
    target: str
    cost: str
    threshold: dict            # state -> support index of the broadcast threshold
    value: dict                # state -> expected remaining bits R*
    charge: dict = field(repr=False)   # state -> {(reference bit, message): bits}
    broadcast: dict = field(repr=False)  # state -> expected broadcast bits charged there

    @property
    def root(self) -> InteractiveState:
        return InteractiveState(self.n_users, 0, self.src.size - 1)

    @property
    def expected_bits(self) -> float:
        return self.value[self.root]


def _message(child: InteractiveState, target: str, cost: str, threshold: dict):
    if is_terminal(child, target):
        return STOP
    if cost == "sw":
        return ("threshold", threshold[child])
    return ("count", child.n_online)


def _entropy_of(d: dict) -> float:
    return entropy(np.array([v for v in d.values() if v > 0]))


def _broadcast_terms(trans, q: float, target: str, cost: str, threshold: dict):
    """Expected broadcast bits for the message that follows, and per-outcome charges."""
    if cost == "sw":
        # the receiving user knows its own reply bit: charge H(message | bit)
        joint: Dict = {}
        for child, pc, p1 in trans:
            m = _message(child, target, cost, threshold)
            p0 = pc - p1
            if p1 > 0:
                joint[(1, m)] = joint.get((1, m), 0.0) + p1
            if p0 > 0:
                joint[(0, m)] = joint.get((0, m), 0.0) + p0
        pu = {0: 1.0 - q, 1: q}
        bits = _entropy_of(joint) - entropy(np.array([v for v in pu.values() if v > 0]))
        charge = {k: -math.log2(v / pu[k[0]]) for k, v in joint.items()}
        return max(bits, 0.0), charge
    dist: Dict = {}
    for child, pc, _ in trans:
        m = _message(child, target, cost, threshold)
        dist[m] = dist.get(m, 0.0) + pc
    if cost == "count":
        bits = _entropy_of(dist)
        per = {m: -math.log2(v) for m, v in dist.items() if v > 0}
    else:
        lengths = huffman_lengths(dist)
        bits = math.fsum(dist[m] * lengths[m] for m in lengths)
        per = {m: float(l) for m, l in lengths.items()}
    return bits, {(u, m): b for m, b in per.items() for u in (0, 1)}


def dp_optimal_policy(src: DiscreteSource, n: int, target: str = "argmax", cost: str = "sw",
                      cap: int = STATE_CAP) -> Policy:
    """Threshold policy minimizing expected total bits.

    Per round: n_online reply bits plus the broadcast cost. For "plain" the
    threshold is sent uncoded (log2 of the support size, first round
    included). For the other models the CEO's next message (the child's
    threshold, or the online count, or STOP) is charged at the state that
    produces it; the first threshold is known in advance and free.
    Ties between thresholds go to the lowest one.
    """
    if target not in TARGETS:
        raise DomainError(f"unknown target {target!r}")
    if cost not in COST_MODELS:
        raise DomainError(f"unknown cost model {cost!r}")
    if n < 1:
        raise DomainError("n must be at least 1")
    L = src.size
    if n * L * L > cap:
        raise SizeError(f"state space n*L^2 = {n * L * L} exceeds cap {cap}")
    threshold: dict = {}
    value: dict = {}
    charge: dict = {}
    broadcast: dict = {}
    for size in range(1, L + 1):
        for lo in range(0, L - size + 1):
            hi = lo + size - 1
            for k in range(1, n + 1):
                s = InteractiveState(k, lo, hi)
                if is_terminal(s, target):
                    value[s] = 0.0
                    continue
                best = None
                for t in range(lo + 1, hi + 1):
                    trans, q = _transitions(src, s, t)
                    future = math.fsum(pc * value[c] for c, pc, _ in trans if pc > 0)
                    if cost == "plain":
                        b, ch = math.log2(size), {}
                    else:
                        b, ch = _broadcast_terms(trans, q, target, cost, threshold)
                    total = k + b + future
                    if best is None or total < best[0] - 1e-12:
                        best = (total, t, b, ch)
                value[s], threshold[s], broadcast[s], charge[s] = best[0], best[1], best[2], best[3]
    return Policy(src, n, target, cost, threshold, value, charge, broadcast)


def broadcast_cost(policy: Policy, s: InteractiveState) -> float:
    """Expected broadcast bits charged at a non-terminal state under the policy's model."""
    if is_terminal(s, policy.target):
        return 0.0
    return policy.broadcast[s]


@dataclass(frozen=True)
class Transcript:
    bits: float
    rounds: int
    result: float
    correct: bool


@dataclass(frozen=True)
class SimulationSummary:
    mean_bits: float
    std_bits: float
    stderr_bits: float
    rounds_mean: float
    all_correct: bool
    trials: int
    seed: int

    def to_dict(self) -> dict:
        return {"simulated_mean_bits": self.mean_bits, "simulated_std": self.std_bits,
                "simulated_stderr": self.stderr_bits, "rounds_mean": self.rounds_mean,
                "all_correct": self.all_correct, "trials": self.trials, "seed": self.seed}


def run_mtis(values: np.ndarray, policy: Policy) -> Transcript:
    """One protocol run on support indices ``values`` (0-based, one per user)."""
    src, target = policy.src, policy.target
    online = list(range(len(values)))
    s = policy.root
    bits, rounds = 0.0, 0
    while not is_terminal(s, target):
        t = policy.threshold[s]
        replies = [u for u in online if values[u] >= t]
        ref_bit = 1 if values[online[0]] >= t else 0
        nxt = state_update(s, t, len(replies))
        if replies:
            online = replies
        if policy.cost == "plain":
            bits += math.log2(s.size)
        else:
            bits += policy.charge[s][(ref_bit, _message(nxt, target, policy.cost, policy.threshold))]
        bits += s.n_online
        s = nxt
        rounds += 1
    top = max(values)
    if target == "argmax":
        winner = online[0]
        return Transcript(bits, rounds, float(winner + 1), bool(values[winner] == top))
    return Transcript(bits, rounds, src.support[s.lo], bool(s.lo == top))


def _summary(bits: np.ndarray, rounds: np.ndarray, ok: bool, seed: int) -> SimulationSummary:
    n = len(bits)
    std = float(bits.std(ddof=1)) if n > 1 else 0.0
    return SimulationSummary(float(bits.mean()), std, std / math.sqrt(n), float(rounds.mean()), ok, n, seed)


def simulate_mtis(src: DiscreteSource, n: int, policy: Policy, seed: int = 0,
                  trials: int = 1) -> SimulationSummary:
    if policy.n_users != n or policy.src != src:
        raise DomainError("policy was built for a different source or user count")
    rng = np.random.Generator(np.random.Philox(seed))
    draws = src.sample(rng, (trials, n))
    bits = np.empty(trials)
    rounds = np.empty(trials)
    ok = True
    for j in range(trials):
        tr = run_mtis(draws[j], policy)
        bits[j], rounds[j] = tr.bits, tr.rounds
        ok &= tr.correct
    return _summary(bits, rounds, ok, seed)


def median_scheme_2user(L: int) -> float:
    """Expected-bits recursion for the two-user median-halving scheme, uniform support of size L.

    Each round both users say which half they are in (2 bits) and the CEO
    answers whether they share it (1 bit):
    R(L) = 3 + p1 p2 (R(ceil(L/2)) + R(floor(L/2))), R(1) = 0, with p1, p2
    the probabilities of the two halves. For even splits this is the exact
    expectation; for odd ones see median_scheme_2user_exact.
    """
    if L < 1:
        raise DomainError("L must be at least 1")
    memo = {1: 0.0}

    def R(m: int) -> float:
        if m not in memo:
            lo, hi = (m + 1) // 2, m // 2
            memo[m] = 3.0 + (lo / m) * (hi / m) * (R(lo) + R(hi))
        return memo[m]

    for m in range(2, L + 1):
        R(m)
    return memo[L]


def median_scheme_2user_exact(L: int) -> float:
    """Exact expected bits of the same scheme: both users land in the lower half
    (ceil(L/2) points) with probability p1^2 and in the upper half with p2^2."""
    if L < 1:
        raise DomainError("L must be at least 1")
    memo = {1: 0.0}

    def R(m: int) -> float:
        if m not in memo:
            lo, hi = (m + 1) // 2, m // 2
            memo[m] = 3.0 + (lo / m) ** 2 * R(lo) + (hi / m) ** 2 * R(hi)
        return memo[m]

    for m in range(2, L + 1):
        R(m)
    return memo[L]


def median_bound(L: int) -> float:
    return 6.0 - 6.0 * 0.5 ** math.ceil(math.log2(L)) if L > 1 else 0.0


def _running_max_entropies(src: DiscreteSource, n: int) -> list:
    cdf = src.cdf
    prev = np.concatenate(([0.0], cdf[:-1]))
    return [entropy(np.clip(cdf ** k - prev ** k, 0.0, None)) for k in range(1, n + 1)]


@dataclass(frozen=True)
class BaselineSummary:
    scheme: str
    bits: float
    phases: int
    all_correct: bool
    trials: int
    seed: int

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "bits": self.bits, "phases": self.phases,
                "all_correct": self.all_correct, "trials": self.trials, "seed": self.seed}


def ris_bits(src: DiscreteSource, n: int) -> float:
    """User k < N forwards the running max (entropy of max of k draws) and, for k >= 2,
    its index (log2 k); user N sends the final index to the CEO (log2 N)."""
    if n < 2:
        raise DomainError("needs at least two users")
    h = _running_max_entropies(src, n)
    return math.fsum(h[:n - 1]) + math.fsum(math.log2(k) for k in range(2, n)) + math.log2(n)


def nbis_bits(src: DiscreteSource, n: int) -> float:
    """Every running max goes user -> CEO -> next user, the last one only to the CEO."""
    if n < 2:
        raise DomainError("needs at least two users")
    h = _running_max_entropies(src, n)
    return 2.0 * math.fsum(h[:n - 1]) + h[n - 1]


def _relay_correct(draws: np.ndarray, via_ceo: bool) -> bool:
    # replay the relay: running max and its index, ties keep the earlier user
    run_val = draws[:, 0].copy()
    run_idx = np.zeros(len(draws), dtype=int)
    for k in range(1, draws.shape[1]):
        better = draws[:, k] > run_val
        run_val = np.where(better, draws[:, k], run_val)
        run_idx = np.where(better, k, run_idx)
    chosen = draws[np.arange(len(draws)), run_idx]
    return bool(np.all(chosen == draws.max(axis=1)))


def simulate_ris(src: DiscreteSource, n: int, seed: int = 0, trials: int = 1000) -> BaselineSummary:
    draws = src.sample(np.random.Generator(np.random.Philox(seed)), (trials, n))
    return BaselineSummary("ris", ris_bits(src, n), n, _relay_correct(draws, False), trials, seed)


def simulate_nbis(src: DiscreteSource, n: int, seed: int = 0, trials: int = 1000) -> BaselineSummary:
    draws = src.sample(np.random.Generator(np.random.Philox(seed)), (trials, n))
    return BaselineSummary("nbis", nbis_bits(src, n), 2 * n - 1, _relay_correct(draws, True), trials, seed)


def send_max_rate(src: DiscreteSource, n: int) -> float:
    """Expected bits when every threshold is the top of the current support.

    R_U(top L levels) = (1 - p_L)^N R_U(top L-1 levels) + H(X) + N with R_U(one level) = 0,
    p_L the conditional probability of the current top level and H(X) the
    entropy of the original source charged for each threshold.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    h = entropy(src)
    p = src.probs
    r = 0.0
    for m in range(2, src.size + 1):
        top = p[m - 1] / p[:m].sum()
        r = (1.0 - top) ** n * r + h + n
    return r


def per_user_saving_bound(src: DiscreteSource, n: int) -> dict:
    """Non-interactive argmax rate, the send-max upper bound, and the induced per-user saving."""
    if n < 2:
        raise DomainError("needs at least two users")
    ra = rate_argmax(src, n)
    ru = send_max_rate(src, n)
    return {"n": n, "rate_noninteractive": ra, "rate_send_max": ru,
            "saving": ra - ru, "saving_per_user": (ra - ru) / n, "asymptote": entropy(src) - 1.0}
