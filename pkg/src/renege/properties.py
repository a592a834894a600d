"""Pointwise inequality and inclusion suites.

These back both the property tests and the `props` CLI subcommand.  All the
single-step inequalities hold exactly in floating point (not just up to
rounding) because every compared pair is evaluated through expressions whose
orderings survive IEEE rounding; the suites therefore count strict
violations and the contract is zero.
"""

from __future__ import annotations

import numpy as np

from .des import Scenario, simulate
from .marks import Uniform, iid_source


def _fifo_inner(x, s, d):
    return np.where(x <= d, x + s, x)


def _end_inner(x, s, d):
    return np.where(x > d, x, np.minimum(x + s, d))


def _clip_step(inner, xi):
    return np.maximum(inner - xi, 0.0)


def _tuples(count: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 3.0, count)
    s = rng.uniform(0.0, 2.0, count)
    d = rng.uniform(0.0, 2.0, count)
    xi = rng.uniform(0.0, 2.0, count)
    return x, s, d, xi


def pointwise_inequality_suite(count: int = 100_000, seed: int = 20240811) -> dict[str, int]:
    """Violation counts for the five step-level inequalities.

    Each inequality is evaluated on `count` random tuples (x, sigma, dpat, xi)
    and again on the boundary states x in {0, dpat, dpat+sigma} for the same
    mark tuples.
    """
    x, s, d, xi = _tuples(count, seed)
    variants = (x, np.zeros_like(x), d.copy(), d + s)
    out = {
        "served_indicator_vs_envelope": 0,   # x + s*1{x<=d}  <=  x v (d+s)
        "end_inner_vs_capped_fifo": 0,       # end inner  <=  (x v d) ^ fifo inner
        "floor_vs_end_inner": 0,             # x v (d ^ s)  <=  end inner
        "step_envelope_sandwich": 0,         # step(s^d) <= fifo_step <= step(s+d)
        "end_step_vs_fifo_step": 0,          # end_step  <=  fifo_step
    }
    for xv in variants:
        fifo_in = _fifo_inner(xv, s, d)
        end_in = _end_inner(xv, s, d)
        out["served_indicator_vs_envelope"] += int(np.sum(fifo_in > np.maximum(xv, d + s)))
        out["end_inner_vs_capped_fifo"] += int(np.sum(end_in > np.minimum(np.maximum(xv, d), fifo_in)))
        out["floor_vs_end_inner"] += int(np.sum(np.maximum(xv, np.minimum(d, s)) > end_in))
        fifo_step = _clip_step(fifo_in, xi)
        low = _clip_step(np.maximum(xv, np.minimum(s, d)), xi)
        high = _clip_step(np.maximum(xv, s + d), xi)
        out["step_envelope_sandwich"] += int(np.sum(low > fifo_step) + np.sum(fifo_step > high))
        out["end_step_vs_fifo_step"] += int(np.sum(_clip_step(end_in, xi) > fifo_step))
    return out


def step_monotonicity_violations(count: int = 100_000, seed: int = 20240812) -> int:
    """step is nondecreasing in the state, for every alpha kind."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 3.0, count)
    y = x + rng.uniform(0.0, 3.0, count)
    s = rng.uniform(0.0, 2.0, count)
    d = rng.uniform(0.0, 2.0, count)
    xi = rng.uniform(0.0, 2.0, count)
    bad = 0
    for alpha in (np.minimum(s, d), d, s + d):
        bad += int(np.sum(_clip_step(np.maximum(x, alpha), xi)
                          > _clip_step(np.maximum(y, alpha), xi)))
    return bad


def end_case_table_mismatches(count: int = 100_000, seed: int = 20240813) -> int:
    """The compact end-model inner term vs its three-case form, exact equality.

    Case form by post-addition level: x+sigma below the capacity threshold,
    the plateau dpat while the deadline truncates, x untouched past it.  (At
    the corner x=0, sigma>dpat the added work is dpat, not sigma: the plateau
    case applies whenever sigma exceeds the remaining budget.)
    """
    x, s, d, _ = _tuples(count, seed)
    case = np.where((s <= d) & (x <= d - s), x + s, np.where(x <= d, d, x))
    return int(np.sum(case != _end_inner(x, s, d)))


def fifo_nonmonotonicity_witness() -> tuple[float, float, float, float]:
    """States x < y with fifo_step(x) > fifo_step(y) for one mark.

    Crossing the patience boundary drops the service term: serving at x = d
    loads d + sigma while y just above d keeps only y.
    """
    from .marks import MarkTriple
    from .fifo_begin import fifo_step
    mark = MarkTriple(xi=0.5, sigma=1.0, dpat=1.0)
    x, y = 1.0, 1.25
    return x, y, fifo_step(x, mark), fifo_step(y, mark)


def des_inclusion_suite(seed: int = 20240814, customers: int = 4000) -> dict[str, int]:
    """Inclusion and sojourn-bound violations over a grid of bounded scenarios."""
    out = {}
    for model in ("begin", "end"):
        for servers in (1, 2, 4):
            src = iid_source(Uniform(0.0, 2.0), Uniform(0.0, 1.6), Uniform(0.0, 1.0),
                             seed=seed, stream=servers)
            _, stats = simulate(Scenario(servers=servers, impatience=model,
                                         source=src, horizon_customers=customers))
            out[f"{model}_s{servers}_inclusion"] = stats.inclusion_violations
            out[f"{model}_s{servers}_sojourn"] = stats.sojourn_violations
    return out
