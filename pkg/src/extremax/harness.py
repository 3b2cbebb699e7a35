"""Monte-Carlo checks of the distortion formulas and the experiment runner.

Every experiment is a deterministic function of its spec: reruns with the
same seed write byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from . import interactive as inter
from . import quantizer as qz
from . import rdf
from .distortion import d_argmax_batch, d_max_batch, d_pair_batch
from .errors import DomainError
from .lossless import _f_star, rate_argmax
from .sources import ContinuousSource, DiscreteSource, entropy, expected_max, source_from_config, uniform

DEFAULT_TRIALS = 100_000
BATCH = 250_000


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based generator so shards and reruns are reproducible."""
    return np.random.Generator(np.random.Philox(seed))


def _homsq_argmax_choice(bins: np.ndarray) -> np.ndarray:
    # highest bin wins; among equal bins the lowest user index
    return np.argmax(bins, axis=1)


def _staggered_choice(het: qz.HetSQ, cells: np.ndarray) -> np.ndarray:
    """Vectorized staggered decision via a cache over distinct cell tuples."""
    tops = [np.array(t) for t in qz.staggered_tops(het)]
    top = np.stack([tops[u][cells[:, u]] for u in range(het.n_users)], axis=1)
    uniq, inv = np.unique(top, axis=0, return_inverse=True)
    if qz.stagger_offset(het):
        swap = np.array([1, 0] + list(range(2, het.n_users)))
        dec = np.array([swap[_f_star(tuple(int(v) for v in row[swap])) - 1] for row in uniq])
    else:
        dec = np.array([_f_star(tuple(int(v) for v in row)) - 1 for row in uniq])
    return dec[inv.ravel()]


def mc_distortion(q: Union[qz.HomSQ, qz.HetSQ], src: ContinuousSource, n: int, target: str,
                  trials: int = DEFAULT_TRIALS, seed: int = 0):
    """Sample, quantize, apply the Bayes estimator, average the distortion.

    Returns (mean, standard error). HomSQ argmax works for any n. HetSQ
    argmax with more than two rows uses the staggered decision. Max and
    pair need two users.
    """
    if trials < 1000:
        raise DomainError("use at least 1000 trials")
    if target not in qz.TARGETS:
        raise DomainError(f"unknown target {target!r}")
    table = None
    if isinstance(q, qz.HomSQ) and target != "argmax":
        if n != 2:
            raise DomainError("max and pair estimators are two-user only")
        q = q.as_het(2)
    if isinstance(q, qz.HetSQ):
        if q.n_users != n:
            raise DomainError("quantizer rows do not match the user count")
        if n == 2:
            table = qz.estimator_table(q, src, target)
        elif target != "argmax":
            raise DomainError("max and pair estimators are two-user only")
    rng = rng_for(seed)
    total, total_sq, done = 0.0, 0.0, 0
    while done < trials:
        m = min(BATCH, trials - done)
        x = src.sample(rng, (m, n))
        if isinstance(q, qz.HomSQ):
            d = d_argmax_batch(x, _homsq_argmax_choice(q.quantize(x)))
        else:
            cells = np.stack([q.quantize(u + 1, x[:, u]) for u in range(n)], axis=1)
            if table is None:
                d = d_argmax_batch(x, _staggered_choice(q, cells))
            elif target == "argmax":
                d = d_argmax_batch(x, table.i[cells[:, 0], cells[:, 1]] - 1)
            elif target == "max":
                d = d_max_batch(x, table.z[cells[:, 0], cells[:, 1]])
            else:
                d = d_pair_batch(x, table.z[cells[:, 0], cells[:, 1]], table.i[cells[:, 0], cells[:, 1]] - 1)
        total += float(d.sum())
        total_sq += float((d * d).sum())
        done += m
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0) * trials / (trials - 1)
    return mean, math.sqrt(var / trials)


# ---------------------------------------------------------------- experiments

@dataclass(frozen=True)
class ExperimentSpec:
    experiment_id: str
    source: dict = field(default_factory=lambda: {"kind": "uniform", "a": 0, "b": 1})
    users: int = 2
    sweep: tuple = ()
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    out: Optional[str] = None

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError("trials must be at least 1")


@dataclass(frozen=True)
class ResultRow:
    coordinate: dict
    analytic: dict
    simulated_mean: Optional[float] = None
    simulated_stderr: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.simulated_stderr is not None and self.simulated_stderr < 0:
            raise DomainError("standard error must be nonnegative")

    def flat(self) -> dict:
        out = dict(self.coordinate)
        out.update({f"analytic_{k}": v for k, v in self.analytic.items()})
        if self.simulated_mean is not None:
            out["mc_mean"] = self.simulated_mean
            out["mc_stderr"] = self.simulated_stderr
        out.update(self.metadata)
        return out


def _sweep(spec: ExperimentSpec, default: Sequence[int]) -> list:
    return list(spec.sweep) if spec.sweep else list(default)


def _continuous(spec: ExperimentSpec) -> ContinuousSource:
    src = source_from_config(spec.source)
    if not isinstance(src, ContinuousSource):
        raise DomainError("this experiment needs a continuous source")
    return src


def _exp_quant_argmax(spec: ExperimentSpec) -> list:
    src, n = _continuous(spec), spec.users
    curve = rdf.rd_curve(src, n, 16, "argmax") if n <= 3 else None
    rows = []
    for K in _sweep(spec, range(1, 9)):
        q = qz.design_min_distortion_homsq(src, n, K)
        hom = qz.homsq_rate_point(q, src, n)
        analytic = {"homsq_rate_bits": hom.rate_bits, "homsq_distortion": hom.distortion,
                    "homsq_normalized_distortion": hom.normalized_distortion}
        if n >= 2 and K >= 2:
            _, het = qz.hetsq_from_homsq(q, src, n, distortion=hom.distortion)
            analytic["hetsq_rate_bits"] = het.rate_bits
        else:
            analytic["hetsq_rate_bits"] = hom.rate_bits
        if curve is not None:
            analytic["rd_lower_bound_bits"] = float(curve.rate(hom.distortion))
        mean, se = mc_distortion(q, src, n, "argmax", spec.trials, spec.seed + K)
        rows.append(ResultRow({"K": K}, analytic, mean, se, {"seed": spec.seed + K}))
    return rows


def _exp_quant_target(target: str) -> Callable:
    def run(spec: ExperimentSpec) -> list:
        src = _continuous(spec)
        curve = rdf.rd_curve(src, 2, 16, target)
        rows = []
        for K in _sweep(spec, range(1, 4)):
            het, pt = qz.optimize_hetsq(src, target, K, homogeneous=True, seed=spec.seed)
            mean, se = mc_distortion(het, src, 2, target, spec.trials, spec.seed + K)
            rows.append(ResultRow({"K": K}, {"rate_bits": pt.rate_bits, "distortion": pt.distortion,
                                             "normalized_distortion": pt.normalized_distortion,
                                             "rd_lower_bound_bits": float(curve.rate(pt.distortion))},
                                  mean, se, {"seed": spec.seed + K,
                                             "boundaries": " ".join(f"{b:.6f}" for b in het.rows[0])}))
        return rows
    return run


def rate_at_distortion(n: int, target_d: float, staggered: bool, k_max: int = 400) -> float:
    """Per-user rate of the optimal uniform HomSQ (or its staggered HetSQ) at a
    normalized distortion, interpolating rate linearly in log distortion
    between consecutive bin counts."""
    src = uniform()
    emax = n / (n + 1)
    prev = None
    for K in range(1, k_max + 1):
        q = qz.multiuser_uniform_argmax_design(n, K)
        d = qz.uniform_argmax_distortion(q.boundaries, n) / emax
        if staggered and K >= 2:
            _, pt = qz.hetsq_from_homsq(q, src, n, distortion=d * emax)
            r = pt.rate_bits / n
        else:
            r = entropy(qz.bin_probabilities(q.boundaries, src))
        if d <= target_d:
            if prev is None:
                return r
            d0, r0 = prev
            w = (math.log(target_d) - math.log(d0)) / (math.log(d) - math.log(d0))
            return r0 + w * (r - r0)
        prev = (d, r)
    raise DomainError("distortion target not reached within k_max bins")


def rate_savings_row(n: int, staggered: bool, d_lo: float = 0.001, d_hi: float = 0.01) -> dict:
    r_lo = rate_at_distortion(n, d_lo, staggered)
    r_hi = rate_at_distortion(n, d_hi, staggered)
    return {"rate_at_low_distortion": r_lo, "rate_at_high_distortion": r_hi,
            "saving_percent": 100.0 * (r_lo - r_hi) / r_lo}


def _exp_rate_savings(spec: ExperimentSpec) -> list:
    rows = []
    for n in _sweep(spec, (2, 4, 8)):
        for staggered in (False, True):
            rows.append(ResultRow({"N": n, "design": "staggered HetSQ" if staggered else "HomSQ"},
                                  rate_savings_row(n, staggered)))
    return rows


def _discrete(spec: ExperimentSpec, levels: int) -> DiscreteSource:
    if spec.source.get("kind") == "discrete":
        return source_from_config(spec.source)
    return DiscreteSource.uniform(levels)


def _interactive_row(src: DiscreteSource, n: int, spec: ExperimentSpec, coord: dict) -> ResultRow:
    pol = inter.dp_optimal_policy(src, n, "argmax", "sw")
    sim = inter.simulate_mtis(src, n, pol, spec.seed, spec.trials)
    analytic = {"mtis_sw_bits": pol.expected_bits,
                "mtis_count_bits": inter.dp_optimal_policy(src, n, "argmax", "count").expected_bits,
                "mtis_plain_bits": inter.dp_optimal_policy(src, n, "argmax", "plain").expected_bits,
                "noninteractive_bits": rate_argmax(src, n) if n >= 2 else 0.0}
    return ResultRow(coord, analytic, sim.mean_bits, sim.stderr_bits,
                     {"all_correct": sim.all_correct, "seed": spec.seed})


def _exp_user8(spec: ExperimentSpec) -> list:
    n = spec.users if spec.users > 2 else 8
    return [_interactive_row(DiscreteSource.uniform(L), n, spec, {"L": L}) for L in _sweep(spec, range(2, 17))]


def _exp_level16(spec: ExperimentSpec) -> list:
    src = DiscreteSource.uniform(16)
    return [_interactive_row(src, n, spec, {"N": n}) for n in _sweep(spec, range(2, 17))]


def _baseline_row(src: DiscreteSource, n: int, spec: ExperimentSpec, coord: dict) -> ResultRow:
    pol = inter.dp_optimal_policy(src, n, "argmax", "sw")
    sim = inter.simulate_mtis(src, n, pol, spec.seed, spec.trials)
    ris = inter.simulate_ris(src, n, spec.seed, spec.trials)
    nbis = inter.simulate_nbis(src, n, spec.seed, spec.trials)
    return ResultRow(coord, {"mtis_sw_bits": pol.expected_bits, "ris_bits": ris.bits, "nbis_bits": nbis.bits},
                     sim.mean_bits, sim.stderr_bits,
                     {"all_correct": sim.all_correct and ris.all_correct and nbis.all_correct, "seed": spec.seed})


def _exp_users8total(spec: ExperimentSpec) -> list:
    n = spec.users if spec.users > 2 else 8
    return [_baseline_row(DiscreteSource.uniform(L), n, spec, {"L": L}) for L in _sweep(spec, range(2, 17))]


def _exp_levels16total(spec: ExperimentSpec) -> list:
    src = DiscreteSource.uniform(16)
    return [_baseline_row(src, n, spec, {"N": n}) for n in _sweep(spec, range(2, 17))]


def _exp_uni_rdf(spec: ExperimentSpec) -> list:
    src = _continuous(spec)
    ks = _sweep(spec, (8, 16, 32))
    report = rdf.discretization_convergence(src, spec.users, "argmax", ks)
    rows = []
    for k in dict.fromkeys(ks):
        c = report["curves"][k]
        for d, r in zip(c.distortion, c.rate_bits):
            rows.append(ResultRow({"K_disc": k, "distortion": float(d)},
                                  {"rate_bits": float(r), "normalized_distortion": float(d) / expected_max(src, spec.users)}))
    return rows


def _exp_scaling(spec: ExperimentSpec) -> list:
    src = _discrete(spec, 16)
    rows = []
    for n in _sweep(spec, (8, 16, 32, 64, 128, 256)):
        b = inter.per_user_saving_bound(src, n)
        rows.append(ResultRow({"N": n}, {k: v for k, v in b.items() if k != "n"}))
    return rows


def _exp_median(spec: ExperimentSpec) -> list:
    rows = []
    for L in _sweep(spec, range(2, 17)):
        pol = inter.dp_optimal_policy(DiscreteSource.uniform(L), 2, "argmax", "sw")
        rows.append(ResultRow({"L": L}, {"median_recursion_bits": inter.median_scheme_2user(L),
                                         "median_exact_bits": inter.median_scheme_2user_exact(L),
                                         "bound_bits": inter.median_bound(L),
                                         "mtis_sw_bits": pol.expected_bits}))
    return rows


EXPERIMENTS: Dict[str, Callable] = {
    "fig-quant-argmax": _exp_quant_argmax,
    "fig-quant-max": _exp_quant_target("max"),
    "fig-quant-pair": _exp_quant_target("pair"),
    "tbl-rate-savings": _exp_rate_savings,
    "fig-user8": _exp_user8,
    "fig-level16": _exp_level16,
    "fig-users8total": _exp_users8total,
    "fig-levels16total": _exp_levels16total,
    "fig-uni-rdf": _exp_uni_rdf,
    "scaling-saving": _exp_scaling,
    "median-bound": _exp_median,
}


def run_experiment(spec: ExperimentSpec) -> list:
    """Run an experiment by id and write it to ``spec.out`` (.json = JSON lines, else CSV)."""
    if spec.experiment_id not in EXPERIMENTS:
        raise DomainError(f"unknown experiment id {spec.experiment_id!r}; known: {sorted(EXPERIMENTS)}")
    rows = EXPERIMENTS[spec.experiment_id](spec)
    if spec.out:
        text = to_json_lines(rows) if spec.out.endswith(".json") else to_csv(rows)
        with open(spec.out, "w", newline="") as fh:
            fh.write(text)
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def to_csv(rows: Sequence[ResultRow]) -> str:
    flat = [r.flat() for r in rows]
    cols = list(dict.fromkeys(k for f in flat for k in f))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for f in flat:
        w.writerow([_fmt(f.get(c, "")) for c in cols])
    return buf.getvalue()


def to_json_lines(rows: Sequence[ResultRow]) -> str:
    return "".join(json.dumps(r.flat(), sort_keys=False) + "\n" for r in rows)
