import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extremax import interactive as it
from extremax.errors import DomainError, ProtocolViolationError, SizeError
from extremax.lossless import rate_argmax
from extremax.sources import DiscreteSource, entropy

S = it.InteractiveState


def test_state_update_examples():
    s = S(3, 0, 3)                      # uniform L=4, all three users online
    assert it.state_update(s, 2, 2) == S(2, 2, 3)
    assert it.state_update(s, 2, 0) == S(3, 0, 1)
    with pytest.raises(ProtocolViolationError):
        it.state_update(S(2, 1, 1), 1, 1)
    with pytest.raises(ProtocolViolationError):
        it.state_update(s, 0, 1)        # threshold at the bottom would not split the support
    with pytest.raises(ProtocolViolationError):
        it.state_update(s, 2, 4)


def test_state_invariants():
    with pytest.raises(DomainError):
        S(0, 0, 3)
    with pytest.raises(DomainError):
        S(2, 3, 1)
    src = DiscreteSource.normalized(range(5), [1, 2, 3, 4, 5])
    assert S(2, 1, 3).conditional_pmf(src).sum() == pytest.approx(1.0)


def test_terminal_rules():
    assert it.is_terminal(S(1, 0, 5), "argmax")
    assert not it.is_terminal(S(1, 0, 5), "max")
    assert all(it.is_terminal(S(4, 2, 2), t) for t in it.TARGETS)


def test_boundary_conditions():
    src = DiscreteSource.uniform(6)
    for target in it.TARGETS:
        pol = it.dp_optimal_policy(src, 3, target)
        for s, v in pol.value.items():
            if s.size == 1:
                assert v == 0.0
            if target == "argmax" and s.n_online == 1:
                assert v == 0.0
            assert v >= 0.0
    assert it.dp_optimal_policy(src, 1, "argmax").expected_bits == 0.0
    assert it.dp_optimal_policy(DiscreteSource((1.0,), (1.0,)), 4, "max").expected_bits == 0.0


@pytest.mark.parametrize("cost", it.COST_MODELS)
def test_max_and_pair_share_values(cost):
    src = DiscreteSource.normalized(range(1, 8), [3, 1, 4, 1, 5, 9, 2])
    a = it.dp_optimal_policy(src, 4, "max", cost)
    b = it.dp_optimal_policy(src, 4, "pair", cost)
    assert a.value.keys() == b.value.keys()
    assert all(a.value[s] == b.value[s] for s in a.value)


def test_policy_thresholds_inside_support():
    pol = it.dp_optimal_policy(DiscreteSource.uniform(9), 3, "argmax", "count")
    for s, t in pol.threshold.items():
        assert s.lo < t <= s.hi


def test_dp_validation():
    with pytest.raises(SizeError):
        it.dp_optimal_policy(DiscreteSource.uniform(64), 64)
    with pytest.raises(DomainError):
        it.dp_optimal_policy(DiscreteSource.uniform(4), 2, "median")
    with pytest.raises(DomainError):
        it.dp_optimal_policy(DiscreteSource.uniform(4), 2, "argmax", "morse")


def test_broadcast_cost_examples():
    src = DiscreteSource.uniform(16)
    plain = it.dp_optimal_policy(src, 8, "argmax", "plain")
    assert it.broadcast_cost(plain, plain.root) == 4.0
    # a lone online user knows its own reply, so the next message is determined
    solo = it.dp_optimal_policy(src, 1, "max", "sw")
    assert all(abs(it.broadcast_cost(solo, s)) < 1e-12 for s in solo.threshold)
    sw = it.dp_optimal_policy(src, 8, "argmax", "sw")
    assert sw.expected_bits < plain.expected_bits
    assert it.broadcast_cost(sw, S(1, 0, 15)) == 0.0


def test_cost_model_ordering():
    src = DiscreteSource.uniform(12)
    v = {c: it.dp_optimal_policy(src, 5, "argmax", c).expected_bits for c in it.COST_MODELS}
    assert v["sw"] <= v["count"] + 1e-12
    assert v["count"] <= v["huffman-count"] + 1e-12


def test_huffman_lengths():
    probs = {"a": 0.5, "b": 0.25, "c": 0.125, "d": 0.125}
    assert it.huffman_lengths(probs) == {"a": 1, "b": 2, "c": 3, "d": 3}
    assert it.huffman_lengths({"x": 1.0}) == {"x": 0}


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12))
def test_huffman_within_one_bit_of_entropy(w):
    total = math.fsum(w)
    probs = {i: x / total for i, x in enumerate(w)}
    lengths = it.huffman_lengths(probs)
    assert math.fsum(2.0 ** -l for l in lengths.values()) == pytest.approx(1.0)
    mean = math.fsum(probs[k] * lengths[k] for k in probs)
    h = entropy(list(probs.values()))
    assert h - 1e-12 <= mean < h + 1


def test_single_user_simulation_is_free():
    src = DiscreteSource.uniform(8)
    pol = it.dp_optimal_policy(src, 1, "argmax")
    sim = it.simulate_mtis(src, 1, pol, seed=1, trials=200)
    assert sim.mean_bits == 0.0 and sim.rounds_mean == 0.0 and sim.all_correct


def replay_supports(values, policy):
    """Independent replay of the protocol returning the support size per round."""
    s = policy.root
    online = list(range(len(values)))
    sizes = [s.size]
    while not it.is_terminal(s, policy.target):
        t = policy.threshold[s]
        up = [u for u in online if values[u] >= t]
        if up:
            online, s = up, S(len(up), t, s.hi)
        else:
            s = S(s.n_online, s.lo, t - 1)
        sizes.append(s.size)
    return sizes, online, s


@pytest.mark.parametrize("target", it.TARGETS)
def test_protocol_correct_and_support_shrinks(target):
    src = DiscreteSource.normalized(range(10), np.arange(1, 11))
    pol = it.dp_optimal_policy(src, 5, target)
    rng = np.random.Generator(np.random.Philox(21))
    for _ in range(2000):
        x = src.sample(rng, 5)
        sizes, online, s = replay_supports(x, pol)
        assert all(b < a for a, b in zip(sizes, sizes[1:]))
        tr = it.run_mtis(x, pol)
        assert tr.correct
        if target == "argmax":
            assert x[int(tr.result) - 1] == x.max()
        else:
            assert tr.result == src.support[x.max()]


@pytest.mark.parametrize("n,L,cost", [(2, 8, "sw"), (4, 10, "count"), (3, 16, "huffman-count"),
                                      (5, 6, "plain"), (8, 12, "sw")])
def test_dp_matches_simulation(n, L, cost):
    src = DiscreteSource.normalized(range(L), np.linspace(1, 2, L))
    pol = it.dp_optimal_policy(src, n, "argmax", cost)
    sim = it.simulate_mtis(src, n, pol, seed=100 + n, trials=20_000)
    assert sim.all_correct
    assert abs(sim.mean_bits - pol.expected_bits) < max(0.01 * pol.expected_bits, 3 * sim.stderr_bits)


def test_simulation_is_seed_deterministic():
    src = DiscreteSource.uniform(8)
    pol = it.dp_optimal_policy(src, 3)
    a = it.simulate_mtis(src, 3, pol, seed=9, trials=500)
    b = it.simulate_mtis(src, 3, pol, seed=9, trials=500)
    assert a == b
    with pytest.raises(DomainError):
        it.simulate_mtis(src, 4, pol)


def test_mtis_below_noninteractive():
    src = DiscreteSource.uniform(16)
    assert it.dp_optimal_policy(src, 8).expected_bits < rate_argmax(src, 8)


# median-halving scheme

def simulate_median(L, trials, seed):
    """Monte-Carlo of the two-user halving scheme: 3 bits per round until the users separate."""
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.integers(0, L, size=(trials, 2))
    bits = np.zeros(trials)
    lo = np.zeros(trials, dtype=int)
    hi = np.full(trials, L - 1)
    active = hi > lo
    while active.any():
        bits[active] += 3
        mid = lo + (hi - lo + 2) // 2          # lower half holds ceil(size/2) points
        a, b = x[:, 0] >= mid, x[:, 1] >= mid
        same = (a == b) & active
        lo = np.where(same & a, mid, lo)
        hi = np.where(same & ~a, mid - 1, hi)
        active = same & (hi > lo)
    return bits.mean(), bits.std(ddof=1) / math.sqrt(trials)


def test_median_examples():
    assert it.median_scheme_2user(1) == 0.0
    assert it.median_scheme_2user(2) == 3.0
    assert all(it.median_scheme_2user(L) < 6 for L in range(1, 300))
    with pytest.raises(DomainError):
        it.median_scheme_2user(0)


@pytest.mark.parametrize("L", [2, 5, 7, 11, 16])
def test_median_exact_expectation_by_simulation(L):
    mean, se = simulate_median(L, 200_000, seed=L)
    assert abs(mean - it.median_scheme_2user_exact(L)) < 4 * se + 1e-12


def test_median_recursion_equals_exact_on_even_splits():
    for m in range(0, 11):
        L = 2 ** m
        assert it.median_scheme_2user(L) == pytest.approx(it.median_scheme_2user_exact(L), abs=1e-12)


# relay baselines

def test_ris_and_nbis_accounting():
    src = DiscreteSource.uniform(16)
    assert it.ris_bits(src, 2) == pytest.approx(entropy(src) + 1.0)
    r = it.simulate_ris(src, 2, seed=3, trials=5000)
    assert r.phases == 2 and r.all_correct
    nb = it.simulate_nbis(src, 2, seed=3, trials=5000)
    assert nb.phases == 3 and nb.all_correct
    one = DiscreteSource((2.0,), (1.0,))
    assert it.ris_bits(one, 3) == pytest.approx(math.log2(2) + math.log2(3))
    assert it.nbis_bits(one, 3) == 0.0
    with pytest.raises(DomainError):
        it.ris_bits(src, 1)


def test_mtis_beats_baselines_for_larger_n():
    src = DiscreteSource.uniform(8)
    for n in (3, 4, 6, 8):
        mt = it.dp_optimal_policy(src, n).expected_bits
        assert mt < it.ris_bits(src, n) and mt < it.nbis_bits(src, n)


# send-max scaling

def send_max_oracle(src, n):
    """E[rounds] (H(X) + N): rounds = min(L - M, L - 1) with M the 0-based index of the max."""
    L = src.size
    cdf = src.cdf
    prev = np.concatenate(([0.0], cdf[:-1]))
    pm = cdf ** n - prev ** n
    rounds = np.minimum(L - np.arange(L), L - 1)
    return float(pm @ rounds) * (entropy(src) + n)


@pytest.mark.parametrize("n", [1, 2, 5, 32])
def test_send_max_rate_oracle(n):
    for src in (DiscreteSource.uniform(16), DiscreteSource.normalized(range(7), [5, 1, 1, 2, 3, 1, 4])):
        assert it.send_max_rate(src, n) == pytest.approx(send_max_oracle(src, n), rel=1e-12)


def test_per_user_saving_trend():
    src = DiscreteSource.uniform(16)
    vals = [it.per_user_saving_bound(src, n)["saving_per_user"] for n in (8, 16, 32, 64, 128, 256)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - 3.0) < 0.1
    assert it.per_user_saving_bound(DiscreteSource.uniform(2), 4)["asymptote"] == 0.0
