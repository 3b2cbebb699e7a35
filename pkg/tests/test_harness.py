import json
import math

import pytest

from extremax import harness as hx, quantizer as qz
from extremax.errors import DomainError
from extremax.sources import expected_max, truncated_exponential, uniform

U = uniform()


def within(mean, se, value, k=3.0):
    return abs(mean - value) <= k * se


def test_mc_distortion_examples():
    mean, se = hx.mc_distortion(qz.HomSQ((0.0, 0.5, 1.0)), U, 2, "argmax", 200_000, seed=1)
    assert within(mean, se, 1 / 24)
    mean, se = hx.mc_distortion(qz.HomSQ((0.0, 1.0)), U, 2, "argmax", 200_000, seed=2)
    assert within(mean, se, 1 / 6)
    het = qz.HomSQ((0.0, 0.7257, 1.0)).as_het(2)
    mean, se = hx.mc_distortion(het, U, 2, "max", 200_000, seed=3)
    assert within(mean, se, qz.hetsq_max_distortion(het, U))
    assert abs(qz.hetsq_max_distortion(het, U) - 0.1742) < 1e-4


def test_mc_distortion_validation_and_determinism():
    q = qz.HomSQ((0.0, 0.5, 1.0))
    with pytest.raises(DomainError):
        hx.mc_distortion(q, U, 2, "argmax", trials=10)
    with pytest.raises(DomainError):
        hx.mc_distortion(q, U, 3, "max", trials=1000)
    with pytest.raises(DomainError):
        hx.mc_distortion(q, U, 2, "median", trials=1000)
    assert hx.mc_distortion(q, U, 2, "argmax", 5000, 7) == hx.mc_distortion(q, U, 2, "argmax", 5000, 7)


def test_mc_staggered_multiuser():
    E = truncated_exponential()
    q = qz.design_min_distortion_homsq(E, 4, 4)
    het, pt = qz.hetsq_from_homsq(q, E, 4)
    mean, se = hx.mc_distortion(het, E, 4, "argmax", 300_000, seed=4)
    assert within(mean, se, pt.distortion)


def test_result_row_schema():
    row = hx.ResultRow({"K": 2}, {"rate": 1.0}, 0.5, 0.01, {"seed": 3})
    assert row.flat() == {"K": 2, "analytic_rate": 1.0, "mc_mean": 0.5, "mc_stderr": 0.01, "seed": 3}
    with pytest.raises(DomainError):
        hx.ResultRow({}, {}, 0.1, -1.0)
    with pytest.raises(DomainError):
        hx.ExperimentSpec("fig-user8", trials=0)


SMALL = {
    "fig-quant-argmax": dict(sweep=(1, 2, 3), trials=20_000),
    "fig-quant-max": dict(sweep=(1, 2), trials=20_000),
    "fig-quant-pair": dict(sweep=(2,), trials=20_000),
    "tbl-rate-savings": dict(sweep=(2,)),
    "fig-user8": dict(sweep=(2, 5, 9), trials=3000),
    "fig-level16": dict(sweep=(2, 4), trials=3000),
    "fig-users8total": dict(sweep=(4, 8), trials=3000),
    "fig-levels16total": dict(sweep=(2, 3), trials=3000),
    "fig-uni-rdf": dict(sweep=(8, 16)),
    "scaling-saving": dict(sweep=(8, 16)),
    "median-bound": dict(sweep=(2, 7, 11)),
}


def test_every_experiment_is_registered():
    assert set(SMALL) == set(hx.EXPERIMENTS)


@pytest.mark.parametrize("eid", sorted(SMALL))
def test_experiment_reruns_are_byte_identical(eid, tmp_path):
    paths = []
    for i in range(2):
        p = tmp_path / f"{eid}-{i}.csv"
        hx.run_experiment(hx.ExperimentSpec(eid, out=str(p), seed=5, **SMALL[eid]))
        paths.append(p)
    a, b = (p.read_bytes() for p in paths)
    assert a == b and len(a) > 0
    header = a.decode().splitlines()[0].split(",")
    assert any(c.startswith("analytic_") for c in header)


def test_json_lines_output(tmp_path):
    p = tmp_path / "median.json"
    rows = hx.run_experiment(hx.ExperimentSpec("median-bound", sweep=(2, 4), out=str(p)))
    lines = p.read_text().splitlines()
    assert len(lines) == len(rows) == 2
    assert json.loads(lines[0])["analytic_median_recursion_bits"] == 3.0


def test_unknown_experiment():
    with pytest.raises(DomainError):
        hx.run_experiment(hx.ExperimentSpec("fig-nonexistent"))


def test_analytic_and_simulated_columns_agree():
    rows = hx.run_experiment(hx.ExperimentSpec("fig-quant-argmax", sweep=(1, 2, 4), trials=200_000, seed=11))
    for r in rows:
        assert within(r.simulated_mean, r.simulated_stderr, r.analytic["homsq_distortion"])
        assert r.analytic["rd_lower_bound_bits"] <= r.analytic["hetsq_rate_bits"] + 1e-6
    rows = hx.run_experiment(hx.ExperimentSpec("fig-quant-pair", sweep=(2,), trials=200_000, seed=12))
    for r in rows:
        assert within(r.simulated_mean, r.simulated_stderr, r.analytic["distortion"])
    rows = hx.run_experiment(hx.ExperimentSpec("fig-user8", sweep=(4, 8), trials=20_000, seed=13))
    for r in rows:
        exp = r.analytic["mtis_sw_bits"]
        assert abs(r.simulated_mean - exp) <= max(0.01 * exp, 3 * r.simulated_stderr)
        assert r.metadata["all_correct"]


def test_rate_savings_helpers():
    row = hx.rate_savings_row(2, staggered=False)
    assert row["rate_at_low_distortion"] > row["rate_at_high_distortion"] > 0
    # at the exact design points the per-user rate is log2 K
    n = 2
    q = qz.multiuser_uniform_argmax_design(n, 5)
    d = qz.uniform_argmax_distortion(q.boundaries, n) / (n / (n + 1))
    assert hx.rate_at_distortion(n, d, staggered=False) == pytest.approx(math.log2(5), abs=1e-9)
